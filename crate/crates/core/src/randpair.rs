//! The swap-randomization program: arm definitions, deterministic visitor
//! bucketing and swap application.
//!
//! Bucketing: `u = unit_interval(stable_hash64(salt, visitor_id))`. Visitors
//! with `u < holdout_fraction` are held out; the rest are split uniformly
//! across `swap_pairs` by `floor((u - h) / (1 - h) * n_pairs)`. See
//! [`crate::hash`] for the hash itself.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{stable_hash64, unit_interval};
use crate::types::{Arm, ArmAssignment, Position, VisitorId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub holdout_fraction: f64,
    /// `(hi, lo)` with `hi < lo`.
    pub swap_pairs: Vec<(Position, Position)>,
    pub salt: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("holdout_fraction must lie in [0, 1], got {0}")]
    HoldoutFraction(f64),
    #[error("swap pair ({0},{1}) must satisfy 1 <= hi < lo")]
    BadPair(Position, Position),
    #[error("swap pair ({0},{1}) listed twice")]
    DuplicatePair(Position, Position),
    #[error("plan randomizes traffic but lists no swap pairs")]
    NoPairs,
}

impl Default for AllocationPlan {
    /// 50% holdout; adjacent swaps (1,2)..(10,11) plus (11,19).
    fn default() -> Self {
        let mut swap_pairs: Vec<_> = (1..=10).map(|k| (k, k + 1)).collect();
        swap_pairs.push((11, 19));
        Self { holdout_fraction: 0.5, swap_pairs, salt: "randpair-v1".to_string() }
    }
}

impl AllocationPlan {
    /// This plan with a different set of swap pairs.
    pub fn with_pairs(&self, pairs: &[(Position, Position)]) -> Self {
        Self { swap_pairs: pairs.to_vec(), ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if !(0.0..=1.0).contains(&self.holdout_fraction) {
            return Err(PlanError::HoldoutFraction(self.holdout_fraction));
        }
        for (i, &(hi, lo)) in self.swap_pairs.iter().enumerate() {
            if hi == 0 || hi >= lo {
                return Err(PlanError::BadPair(hi, lo));
            }
            if self.swap_pairs[..i].contains(&(hi, lo)) {
                return Err(PlanError::DuplicatePair(hi, lo));
            }
        }
        if self.swap_pairs.is_empty() && self.holdout_fraction < 1.0 {
            return Err(PlanError::NoPairs);
        }
        Ok(())
    }

    /// Expected traffic share of an arm.
    pub fn share(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Holdout => self.holdout_fraction,
            Arm::Swap { hi, lo } if self.swap_pairs.contains(&(hi, lo)) => {
                (1.0 - self.holdout_fraction) / self.swap_pairs.len() as f64
            }
            Arm::Swap { .. } => 0.0,
        }
    }

    /// All arms, holdout first, then swap pairs in plan order.
    pub fn arms(&self) -> Vec<Arm> {
        std::iter::once(Arm::Holdout).chain(self.swap_pairs.iter().map(|&(hi, lo)| Arm::Swap { hi, lo })).collect()
    }
}

/// Deterministic arm for a visitor. `applied` is left `false`; it is decided
/// by [`apply_swap`] once the result list is known.
pub fn assign_arm(visitor: &VisitorId, plan: &AllocationPlan) -> ArmAssignment {
    let u = unit_interval(stable_hash64(&plan.salt, visitor.as_str()));
    let h = plan.holdout_fraction;
    if u < h || plan.swap_pairs.is_empty() {
        return ArmAssignment::holdout();
    }
    let n = plan.swap_pairs.len();
    let idx = (((u - h) / (1.0 - h)) * n as f64) as usize;
    let (hi, lo) = plan.swap_pairs[idx.min(n - 1)];
    ArmAssignment::swap(hi, lo)
}

/// Applies a swap arm to a natural ranking. The swap happens only when the
/// list reaches position `lo`; otherwise the ranking is returned unchanged
/// with `applied = false`.
pub fn apply_swap<T: Clone>(natural: &[T], arm: ArmAssignment) -> (Vec<T>, ArmAssignment) {
    let mut displayed = natural.to_vec();
    match arm.arm {
        Arm::Swap { hi, lo } if hi >= 1 && hi < lo && natural.len() >= lo as usize => {
            displayed.swap(hi as usize - 1, lo as usize - 1);
            (displayed, ArmAssignment { applied: true, ..arm })
        }
        _ => (displayed, ArmAssignment { applied: false, ..arm }),
    }
}
