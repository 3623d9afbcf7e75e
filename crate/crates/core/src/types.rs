//! Domain types shared by every stage of the pipeline.
//!
//! Sessions are immutable once validated (see [`crate::log`]); nothing in this
//! module performs I/O.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// 1-based rank in a result list.
pub type Position = u32;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            /// Returns `None` for an empty string.
            pub fn new(s: impl Into<String>) -> Option<Self> {
                let s = s.into();
                if s.is_empty() {
                    None
                } else {
                    Some(Self(s))
                }
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// A ranked item (a professional).
    DocumentId
);
string_id!(
    /// The searcher; randomization is bucketed on this.
    VisitorId
);
string_id!(QueryId);
string_id!(
    /// A UI surface. Propensities are estimated separately per interface.
    InterfaceId
);

/// Which policy a visitor was bucketed into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Holdout,
    /// Exchange the items at `hi` and `lo` (`hi < lo`).
    Swap {
        hi: Position,
        lo: Position,
    },
}

impl Arm {
    pub fn is_swap(&self) -> bool {
        matches!(self, Arm::Swap { .. })
    }
}

/// An arm plus whether the intervention was actually carried out for this
/// particular result list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArmAssignment {
    pub arm: Arm,
    pub applied: bool,
}

impl ArmAssignment {
    pub fn holdout() -> Self {
        Self { arm: Arm::Holdout, applied: false }
    }

    /// A swap arm whose application has not been decided yet.
    pub fn swap(hi: Position, lo: Position) -> Self {
        Self { arm: Arm::Swap { hi, lo }, applied: false }
    }

    /// The swapped pair, if this is a swap arm that was applied.
    pub fn applied_pair(&self) -> Option<(Position, Position)> {
        match self.arm {
            Arm::Swap { hi, lo } if self.applied => Some((hi, lo)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotRecord {
    pub doc: DocumentId,
    pub natural_position: Position,
    pub displayed_position: Position,
    pub viewed: bool,
    pub contacted: bool,
    /// Present iff `contacted`.
    pub contact_order: Option<u32>,
}

/// One query's displayed list and what the visitor did with it.
///
/// Constructed only through [`crate::log::validate_session`] or
/// [`SearchSession::new`], both of which enforce the positional invariants.
/// `slots` are stored sorted by displayed position.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSession {
    pub(crate) query: QueryId,
    pub(crate) visitor: VisitorId,
    pub(crate) interface: InterfaceId,
    pub(crate) timestamp_ms: i64,
    pub(crate) arm: ArmAssignment,
    pub(crate) slots: Vec<SlotRecord>,
}

impl SearchSession {
    /// Validates and builds a session. Slots may be in any order.
    pub fn new(
        query: QueryId,
        visitor: VisitorId,
        interface: InterfaceId,
        timestamp_ms: i64,
        arm: ArmAssignment,
        mut slots: Vec<SlotRecord>,
    ) -> Result<Self, crate::log::InvariantError> {
        slots.sort_by_key(|s| s.displayed_position);
        crate::log::check_invariants(&arm, &slots)?;
        Ok(Self { query, visitor, interface, timestamp_ms, arm, slots })
    }

    pub fn query(&self) -> &QueryId {
        &self.query
    }

    pub fn visitor(&self) -> &VisitorId {
        &self.visitor
    }

    pub fn interface(&self) -> &InterfaceId {
        &self.interface
    }

    pub fn timestamp_ms(&self) -> i64 {
        self.timestamp_ms
    }

    pub fn arm(&self) -> ArmAssignment {
        self.arm
    }

    /// Slots ordered by displayed position, so `slots()[k - 1]` is the slot
    /// displayed at position `k`.
    pub fn slots(&self) -> &[SlotRecord] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn at_displayed(&self, position: Position) -> Option<&SlotRecord> {
        (position as usize).checked_sub(1).and_then(|i| self.slots.get(i))
    }

    pub fn n_contacts(&self) -> usize {
        self.slots.iter().filter(|s| s.contacted).count()
    }

    pub fn any_contact(&self) -> bool {
        self.slots.iter().any(|s| s.contacted)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensitySource {
    RandomizedEstimate,
    Assumed,
    SimulatedTruth,
}

/// Relative examination propensity per position, referenced to position 1.
///
/// Monotonicity is deliberately not enforced: bottom-of-page positions can
/// legitimately beat the slot above them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityTable {
    pub interface: InterfaceId,
    pub theta: BTreeMap<Position, f64>,
    pub ci_low: BTreeMap<Position, f64>,
    pub ci_high: BTreeMap<Position, f64>,
    pub source: PropensitySource,
    pub created_at: i64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TableError {
    #[error("theta[1] must be exactly 1.0, got {0}")]
    NotNormalized(f64),
    #[error("theta at position {position} must be positive and finite, got {value}")]
    NonPositive { position: Position, value: f64 },
    #[error("ci maps must cover exactly the theta positions")]
    ShapeMismatch,
    #[error("empty propensity table")]
    Empty,
}

impl PropensityTable {
    /// Builds a table with degenerate (point) intervals.
    pub fn from_theta(
        interface: InterfaceId,
        theta: BTreeMap<Position, f64>,
        source: PropensitySource,
        created_at: i64,
    ) -> Result<Self, TableError> {
        let table = Self { interface, ci_low: theta.clone(), ci_high: theta.clone(), theta, source, created_at };
        table.validate()?;
        Ok(table)
    }

    /// Convenience for curves given densely from position 1.
    pub fn from_curve(interface: InterfaceId, curve: &[f64], source: PropensitySource) -> Result<Self, TableError> {
        let theta = curve.iter().enumerate().map(|(i, &t)| (i as Position + 1, t)).collect();
        Self::from_theta(interface, theta, source, 0)
    }

    pub fn validate(&self) -> Result<(), TableError> {
        match self.theta.get(&1) {
            None => return Err(TableError::Empty),
            Some(&t) if t != 1.0 => return Err(TableError::NotNormalized(t)),
            _ => {}
        }
        for (&position, &value) in &self.theta {
            if !(value > 0.0 && value.is_finite()) {
                return Err(TableError::NonPositive { position, value });
            }
        }
        let same_keys = |m: &BTreeMap<Position, f64>| m.keys().eq(self.theta.keys());
        if !same_keys(&self.ci_low) || !same_keys(&self.ci_high) {
            return Err(TableError::ShapeMismatch);
        }
        Ok(())
    }

    pub fn get(&self, position: Position) -> Option<f64> {
        self.theta.get(&position).copied()
    }

    pub fn interval(&self, position: Position) -> Option<(f64, f64)> {
        Some((*self.ci_low.get(&position)?, *self.ci_high.get(&position)?))
    }

    pub fn positions(&self) -> impl Iterator<Item = Position> + '_ {
        self.theta.keys().copied()
    }
}

/// One impression of a document: where it was shown and whether it was contacted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Impression {
    pub position: Position,
    pub contacted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfessionalHistory {
    pub doc: DocumentId,
    events: Vec<Impression>,
}

impl ProfessionalHistory {
    /// Returns `None` if any position is zero.
    pub fn new(doc: DocumentId, events: Vec<Impression>) -> Option<Self> {
        if events.iter().any(|e| e.position == 0) {
            return None;
        }
        Some(Self { doc, events })
    }

    pub fn events(&self) -> &[Impression] {
        &self.events
    }

    pub fn push(&mut self, position: Position, contacted: bool) {
        assert!(position >= 1, "positions are 1-based");
        self.events.push(Impression { position, contacted });
    }
}
