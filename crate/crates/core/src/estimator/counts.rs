use serde::{Deserialize, Serialize};

use crate::types::{Arm, Position, SearchSession};

use super::EstimatorError;

/// Contact/impression counts for one swapped pair.
///
/// Cell names follow `c_<original><displayed>`: `c_lh` counts contacts on
/// documents whose natural position was `lo` but were displayed at `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairCounts {
    pub hi: Position,
    pub lo: Position,
    pub c_hh: u64,
    pub n_hh: u64,
    pub c_lh: u64,
    pub n_lh: u64,
    pub c_ll: u64,
    pub n_ll: u64,
    pub c_hl: u64,
    pub n_hl: u64,
}

impl PairCounts {
    /// Fails with the first empty cell.
    pub fn check_cells(&self) -> Result<(), EstimatorError> {
        for (cell, n) in [("hh", self.n_hh), ("lh", self.n_lh), ("ll", self.n_ll), ("hl", self.n_hl)] {
            if n == 0 {
                return Err(EstimatorError::InsufficientData { hi: self.hi, lo: self.lo, cell });
            }
        }
        debug_assert!(
            self.c_hh <= self.n_hh && self.c_lh <= self.n_lh && self.c_ll <= self.n_ll && self.c_hl <= self.n_hl
        );
        Ok(())
    }
}

/// Joint contact outcome at the two compared slots, per session.
/// Index is `(contact_at_hi << 1) | contact_at_lo`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct JointTally(pub [u64; 4]);

impl JointTally {
    pub fn add(&mut self, at_hi: bool, at_lo: bool) {
        self.0[((at_hi as usize) << 1) | at_lo as usize] += 1;
    }

    pub fn sessions(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn contacts_hi(&self) -> u64 {
        self.0[2] + self.0[3]
    }

    pub fn contacts_lo(&self) -> u64 {
        self.0[1] + self.0[3]
    }

    fn merge(&mut self, other: &JointTally) {
        for k in 0..4 {
            self.0[k] += other.0[k];
        }
    }
}

/// Session-level tallies behind a [`PairCounts`].
///
/// The unswapped cells come from holdout sessions (natural = displayed) long
/// enough to contain `lo`; the swapped cells come from sessions of arm
/// `swap(hi, lo)` where the swap was applied. Unapplied swap-arm sessions are
/// ignored. Keeping joint outcomes per session lets the bootstrap resample
/// sessions rather than slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTally {
    pub hi: Position,
    pub lo: Position,
    pub holdout: JointTally,
    pub treated: JointTally,
}

impl PairTally {
    pub fn new(hi: Position, lo: Position) -> Self {
        Self { hi, lo, holdout: JointTally::default(), treated: JointTally::default() }
    }

    /// Adds a session if it contributes to this pair.
    pub fn add(&mut self, session: &SearchSession) {
        let arm = session.arm();
        let contacted = |k: Position| session.at_displayed(k).map(|s| s.contacted);
        match arm.arm {
            Arm::Holdout if session.len() >= self.lo as usize => {
                self.holdout.add(contacted(self.hi).unwrap(), contacted(self.lo).unwrap());
            }
            Arm::Swap { hi, lo } if arm.applied && hi == self.hi && lo == self.lo => {
                self.treated.add(contacted(hi).unwrap(), contacted(lo).unwrap());
            }
            _ => {}
        }
    }

    pub fn merge(&mut self, other: &PairTally) {
        debug_assert_eq!((self.hi, self.lo), (other.hi, other.lo));
        self.holdout.merge(&other.holdout);
        self.treated.merge(&other.treated);
    }

    pub fn counts(&self) -> PairCounts {
        PairCounts {
            hi: self.hi,
            lo: self.lo,
            c_hh: self.holdout.contacts_hi(),
            n_hh: self.holdout.sessions(),
            c_ll: self.holdout.contacts_lo(),
            n_ll: self.holdout.sessions(),
            c_lh: self.treated.contacts_hi(),
            n_lh: self.treated.sessions(),
            c_hl: self.treated.contacts_lo(),
            n_hl: self.treated.sessions(),
        }
    }
}

/// Folds sessions into tallies for several pairs at once.
#[derive(Debug, Clone, PartialEq)]
pub struct PairAggregator {
    tallies: Vec<PairTally>,
}

impl PairAggregator {
    pub fn new(pairs: &[(Position, Position)]) -> Self {
        Self { tallies: pairs.iter().map(|&(hi, lo)| PairTally::new(hi, lo)).collect() }
    }

    pub fn add(&mut self, session: &SearchSession) {
        for t in &mut self.tallies {
            t.add(session);
        }
    }

    pub fn merge(mut self, other: PairAggregator) -> Self {
        for (a, b) in self.tallies.iter_mut().zip(&other.tallies) {
            a.merge(b);
        }
        self
    }

    pub fn tallies(&self) -> &[PairTally] {
        &self.tallies
    }

    pub fn tally(&self, hi: Position, lo: Position) -> Option<&PairTally> {
        self.tallies.iter().find(|t| t.hi == hi && t.lo == lo)
    }
}

/// Counts for `(hi, lo)` over a validated session stream.
pub fn aggregate_pair_counts<'a>(
    sessions: impl IntoIterator<Item = &'a SearchSession>,
    hi: Position,
    lo: Position,
) -> Result<PairCounts, EstimatorError> {
    let mut tally = PairTally::new(hi, lo);
    sessions.into_iter().for_each(|s| tally.add(s));
    let counts = tally.counts();
    counts.check_cells()?;
    Ok(counts)
}
