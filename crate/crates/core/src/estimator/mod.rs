//! Position-bias estimation from swap-randomized logs.
//!
//! For a pair `(hi, lo)`, the rate at each slot is the unweighted sum of the
//! rate of the document naturally shown there (from holdout traffic) and the
//! rate of the document swapped into it (from the pair's treated traffic).
//! Both sides then see the same relevance mix, and their ratio estimates
//! `theta_hi / theta_lo` without reference to document quality. Pair ratios
//! are chained from position 1 into a [`PropensityTable`].

mod chain;
mod counts;
mod diagnostics;
mod ratio;

pub use chain::{chain_theta, interpolated_positions};
pub use counts::{aggregate_pair_counts, JointTally, PairAggregator, PairCounts, PairTally};
pub use diagnostics::{
    program_cost, reversal_rate, BehaviorDiagnostics, CostMetric, PositionStats, ProgramCostAccumulator, ReversalRate,
};
pub use ratio::{
    bootstrap_ci, bootstrap_ci_from_log, estimate_pair_ratio, BootstrapOptions, RatioEstimate, MIN_REPLICATIONS,
};

use thiserror::Error;

use crate::exec::derive_seed;
use crate::types::{InterfaceId, Position, PropensityTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("insufficient data for pair ({hi},{lo}): cell n_{cell} is empty")]
    InsufficientData { hi: Position, lo: Position, cell: &'static str },
    #[error("undefined ratio for pair ({hi},{lo}): no contacts observed at the {slot} slot")]
    UndefinedRatio { hi: Position, lo: Position, slot: &'static str },
    #[error("bootstrap for pair ({hi},{lo}) kept producing undefined ratios after {attempts} redraws")]
    BootstrapExhausted { hi: Position, lo: Position, attempts: usize },
    #[error("broken chain: no pair starts at position {missing_from}; unreachable pairs {unreachable:?}")]
    BrokenChain { missing_from: Position, unreachable: Vec<(Position, Position)> },
    #[error("more than one pair starts at position {position}")]
    AmbiguousChain { position: Position },
    #[error("missing {0} population")]
    MissingPopulation(&'static str),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

impl EstimatorError {
    pub fn class(&self) -> &'static str {
        match self {
            EstimatorError::InsufficientData { .. } => "insufficient_data",
            EstimatorError::UndefinedRatio { .. } => "undefined_ratio",
            EstimatorError::BootstrapExhausted { .. } => "bootstrap_exhausted",
            EstimatorError::BrokenChain { .. } | EstimatorError::AmbiguousChain { .. } => "broken_chain",
            EstimatorError::MissingPopulation(_) => "missing_population",
            EstimatorError::Precondition(_) => "precondition",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimateOptions {
    pub bootstrap: BootstrapOptions,
    pub interpolate_gap: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self { bootstrap: BootstrapOptions::default(), interpolate_gap: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairReport {
    pub counts: PairCounts,
    pub estimate: RatioEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub table: PropensityTable,
    pub pairs: Vec<PairReport>,
    pub interpolated: Vec<Position>,
}

/// Bootstraps every aggregated pair and chains the results. Pair `i` uses
/// bootstrap seed `derive_seed(seed, i)`.
pub fn estimate_table(
    aggregator: &PairAggregator,
    interface: InterfaceId,
    opts: &EstimateOptions,
) -> Result<Estimate, EstimatorError> {
    let pairs = aggregator
        .tallies()
        .iter()
        .enumerate()
        .map(|(i, tally)| {
            let boot = BootstrapOptions { seed: derive_seed(opts.bootstrap.seed, i as u64), ..opts.bootstrap };
            Ok(PairReport { counts: tally.counts(), estimate: bootstrap_ci(tally, &boot)? })
        })
        .collect::<Result<Vec<_>, EstimatorError>>()?;
    let estimates: Vec<RatioEstimate> = pairs.iter().map(|p| p.estimate).collect();
    let table = chain_theta(&estimates, opts.interpolate_gap, interface)?;
    let interpolated = if opts.interpolate_gap { interpolated_positions(&estimates) } else { vec![] };
    Ok(Estimate { table, pairs, interpolated })
}
