use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};

use crate::exec::{derive_seed, Exec};
use crate::stats::{percentile_sorted, resample_counts};
use crate::types::{Position, SearchSession};

use super::counts::{JointTally, PairCounts, PairTally};
use super::EstimatorError;

/// Relative propensity `theta_hi / theta_lo` for one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub hi: Position,
    pub lo: Position,
    pub ratio: f64,
    pub ci: (f64, f64),
    /// Treated (swapped) sessions behind the estimate; the scarce population.
    pub n_effective: u64,
}

/// Quality-neutral point estimate.
///
/// Each side averages the rate of the document naturally there with the rate
/// of the document swapped into it, so the relevance mix is identical on both
/// sides and cancels in the ratio. The conventional factor of one half on
/// each side cancels too and is omitted.
pub fn estimate_pair_ratio(counts: &PairCounts) -> Result<RatioEstimate, EstimatorError> {
    counts.check_cells()?;
    let ratio = ratio_of(counts)?;
    Ok(RatioEstimate { hi: counts.hi, lo: counts.lo, ratio, ci: (ratio, ratio), n_effective: counts.n_lh })
}

fn ratio_of(c: &PairCounts) -> Result<f64, EstimatorError> {
    let rate = |x: u64, n: u64| x as f64 / n as f64;
    let r_hi = rate(c.c_hh, c.n_hh) + rate(c.c_lh, c.n_lh);
    let r_lo = rate(c.c_ll, c.n_ll) + rate(c.c_hl, c.n_hl);
    if r_lo == 0.0 {
        return Err(EstimatorError::UndefinedRatio { hi: c.hi, lo: c.lo, slot: "lo" });
    }
    if r_hi == 0.0 {
        return Err(EstimatorError::UndefinedRatio { hi: c.hi, lo: c.lo, slot: "hi" });
    }
    Ok(r_hi / r_lo)
}

#[derive(Debug, Clone, Copy)]
pub struct BootstrapOptions {
    pub replications: usize,
    pub seed: u64,
    pub confidence: f64,
    /// Attempts per replication before giving up on an undefined ratio.
    pub max_redraws: usize,
    pub exec: Exec,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self { replications: 1000, seed: 0, confidence: 0.95, max_redraws: 100, exec: Exec::default() }
    }
}

pub const MIN_REPLICATIONS: usize = 100;

/// Percentile bootstrap interval for a pair ratio.
///
/// Sessions are the resampling unit, drawn with replacement within each
/// population (holdout and treated) separately. Because each session
/// contributes a joint outcome at the two slots, a resample of a population is
/// a multinomial draw over its four outcome counts. The interval is widened,
/// if needed, to contain the point estimate.
pub fn bootstrap_ci(tally: &PairTally, opts: &BootstrapOptions) -> Result<RatioEstimate, EstimatorError> {
    if opts.replications < MIN_REPLICATIONS {
        return Err(EstimatorError::Precondition(format!(
            "bootstrap needs at least {MIN_REPLICATIONS} replications, got {}",
            opts.replications
        )));
    }
    if !(opts.confidence > 0.0 && opts.confidence < 1.0) {
        return Err(EstimatorError::Precondition(format!("confidence {} outside (0, 1)", opts.confidence)));
    }
    let mut point = estimate_pair_ratio(&tally.counts())?;

    let draws = opts.exec.map_indexed(opts.replications, |r| {
        let mut rng = Pcg64Mcg::seed_from_u64(derive_seed(opts.seed, r as u64));
        for _ in 0..opts.max_redraws.max(1) {
            let resampled = PairTally {
                holdout: JointTally(resample_counts(&tally.holdout.0, &mut rng)),
                treated: JointTally(resample_counts(&tally.treated.0, &mut rng)),
                ..*tally
            };
            if let Ok(ratio) = ratio_of(&resampled.counts()) {
                return Some(ratio);
            }
        }
        None
    });
    let mut ratios = draws.into_iter().collect::<Option<Vec<f64>>>().ok_or(EstimatorError::BootstrapExhausted {
        hi: tally.hi,
        lo: tally.lo,
        attempts: opts.max_redraws,
    })?;
    ratios.sort_by(f64::total_cmp);
    let alpha = 1.0 - opts.confidence;
    let low = percentile_sorted(&ratios, alpha / 2.0);
    let high = percentile_sorted(&ratios, 1.0 - alpha / 2.0);
    point.ci = (low.min(point.ratio), high.max(point.ratio));
    Ok(point)
}

/// Aggregates a log for one pair and bootstraps its ratio.
pub fn bootstrap_ci_from_log<'a>(
    sessions: impl IntoIterator<Item = &'a SearchSession>,
    hi: Position,
    lo: Position,
    replications: usize,
    seed: u64,
) -> Result<RatioEstimate, EstimatorError> {
    let mut tally = PairTally::new(hi, lo);
    sessions.into_iter().for_each(|s| tally.add(s));
    bootstrap_ci(&tally, &BootstrapOptions { replications, seed, ..Default::default() })
}
