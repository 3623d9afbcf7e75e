//! Sample-size planning for pairwise position comparisons.
//!
//! The planning effect for two neighbouring positions is half of their
//! observed contact-rate gap, centered on the observed midpoint: observed
//! rates mix position bias with match quality, and both push in the same
//! direction, so the full gap overstates the bias.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;
use serde::Serialize;
use thiserror::Error;

use crate::exec::{derive_seed, Exec};
use crate::stats::{binomial, two_proportion_unpooled_z, z_quantile};
use crate::types::Position;

#[derive(Debug, Error, PartialEq)]
pub enum PowerError {
    #[error("precondition failed: {0}")]
    Precondition(String),
}

fn precondition(msg: impl Into<String>) -> PowerError {
    PowerError::Precondition(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerSpec {
    pub p_hi: f64,
    pub p_lo: f64,
    pub alpha: f64,
    pub power: f64,
}

impl PowerSpec {
    /// Two-sided alpha 0.05, power 0.80.
    pub fn new(p_hi: f64, p_lo: f64) -> Self {
        Self { p_hi, p_lo, alpha: 0.05, power: 0.80 }
    }

    pub fn validate(&self) -> Result<(), PowerError> {
        for (name, p) in [("p_hi", self.p_hi), ("p_lo", self.p_lo)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(precondition(format!("{name} = {p} outside (0, 1)")));
            }
        }
        if self.p_hi == self.p_lo {
            return Err(precondition("p_hi and p_lo must differ"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(precondition(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        if !(self.power > 0.0 && self.power < 1.0) {
            return Err(precondition(format!("power = {} outside (0, 1)", self.power)));
        }
        Ok(())
    }
}

/// Rates to plan for, given observed rates at the higher and lower slot.
pub fn hypothesized_effect(observed_hi: f64, observed_lo: f64) -> Result<(f64, f64), PowerError> {
    if !(observed_lo > 0.0 && observed_hi > observed_lo) {
        return Err(precondition(format!("need observed_hi > observed_lo > 0, got ({observed_hi}, {observed_lo})")));
    }
    let mid = (observed_hi + observed_lo) / 2.0;
    let quarter_gap = (observed_hi - observed_lo) / 4.0;
    Ok((mid + quarter_gap, mid - quarter_gap))
}

/// Sessions per cell for an unpooled two-sided two-proportion z-test:
/// `ceil((z_{1-a/2} + z_power)^2 * (p1 q1 + p2 q2) / (p1 - p2)^2)`.
pub fn required_sample(spec: &PowerSpec) -> Result<u64, PowerError> {
    spec.validate()?;
    let z = z_quantile(1.0 - spec.alpha / 2.0) + z_quantile(spec.power);
    let variance = spec.p_hi * (1.0 - spec.p_hi) + spec.p_lo * (1.0 - spec.p_lo);
    let n = z * z * variance / (spec.p_hi - spec.p_lo).powi(2);
    Ok(n.ceil() as u64)
}

pub const MIN_SIMS: usize = 1000;

/// Share of simulated comparisons that reject equality at `alpha`.
///
/// Each simulation draws `n` sessions for each slot of a pair, with contact
/// probability `base_rate * theta_ratio` at the higher slot and `base_rate`
/// at the lower one (the relevance mix is equal on both sides by
/// construction), then applies the same unpooled z-test that
/// [`required_sample`] plans for.
pub fn monte_carlo_power(
    theta_ratio: f64,
    base_rate: f64,
    n: u64,
    alpha: f64,
    sims: usize,
    seed: u64,
) -> Result<f64, PowerError> {
    monte_carlo_power_with(Exec::default(), theta_ratio, base_rate, n, alpha, sims, seed)
}

pub fn monte_carlo_power_with(
    exec: Exec,
    theta_ratio: f64,
    base_rate: f64,
    n: u64,
    alpha: f64,
    sims: usize,
    seed: u64,
) -> Result<f64, PowerError> {
    if sims < MIN_SIMS {
        return Err(precondition(format!("need at least {MIN_SIMS} simulations, got {sims}")));
    }
    if n == 0 {
        return Err(precondition("n must be positive"));
    }
    let p_hi = base_rate * theta_ratio;
    if !(base_rate > 0.0 && p_hi < 1.0 && theta_ratio > 0.0) {
        return Err(precondition(format!("rates ({p_hi}, {base_rate}) outside (0, 1)")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(precondition(format!("alpha = {alpha} outside (0, 1)")));
    }
    let critical = z_quantile(1.0 - alpha / 2.0);
    let rejections = exec.map_indexed(sims, |i| {
        let mut rng = Pcg64Mcg::seed_from_u64(derive_seed(seed, i as u64));
        let x_hi = binomial(n, p_hi, &mut rng);
        let x_lo = binomial(n, base_rate, &mut rng);
        two_proportion_unpooled_z(x_hi, n, x_lo, n).abs() > critical
    });
    Ok(rejections.iter().filter(|&&r| r).count() as f64 / sims as f64)
}

/// One row of a per-pair measurement plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairPlan {
    pub hi: Position,
    pub lo: Position,
    pub observed_hi: f64,
    pub observed_lo: f64,
    /// `None` when the observed rates admit no planning effect.
    pub planned: Option<PlannedPair>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlannedPair {
    pub p_hi: f64,
    pub p_lo: f64,
    pub n_per_cell: u64,
    /// Days until the swapped cell reaches `n_per_cell`.
    pub days: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficSpec {
    /// Searches per day reaching the interface.
    pub daily_sessions: f64,
    pub holdout_fraction: f64,
    pub alpha: f64,
    pub power: f64,
}

/// Plans every pair from observed per-position contact rates. The swapped
/// cell of a pair receives `daily_sessions * (1 - holdout) / n_pairs`
/// sessions a day and is the bottleneck.
pub fn plan_pairs(
    observed: &BTreeMap<Position, f64>,
    pairs: &[(Position, Position)],
    traffic: &TrafficSpec,
) -> Vec<PairPlan> {
    let per_arm_daily = traffic.daily_sessions * (1.0 - traffic.holdout_fraction) / pairs.len().max(1) as f64;
    pairs
        .iter()
        .map(|&(hi, lo)| {
            let (Some(&oh), Some(&ol)) = (observed.get(&hi), observed.get(&lo)) else {
                return PairPlan {
                    hi,
                    lo,
                    observed_hi: f64::NAN,
                    observed_lo: f64::NAN,
                    planned: None,
                    note: Some("no observed rate for one of the positions".into()),
                };
            };
            let planned = hypothesized_effect(oh, ol).and_then(|(p_hi, p_lo)| {
                let spec = PowerSpec { p_hi, p_lo, alpha: traffic.alpha, power: traffic.power };
                let n = required_sample(&spec)?;
                Ok(PlannedPair { p_hi, p_lo, n_per_cell: n, days: n as f64 / per_arm_daily })
            });
            match planned {
                Ok(p) => PairPlan { hi, lo, observed_hi: oh, observed_lo: ol, planned: Some(p), note: None },
                Err(e) => {
                    PairPlan { hi, lo, observed_hi: oh, observed_lo: ol, planned: None, note: Some(e.to_string()) }
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: (f64, f64), b: (f64, f64)) -> bool {
        (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12
    }

    #[test]
    fn half_gap_rule() {
        assert!(close(hypothesized_effect(0.10, 0.06).unwrap(), (0.09, 0.07)));
        assert!(close(hypothesized_effect(0.08, 0.04).unwrap(), (0.07, 0.05)));
        assert!(hypothesized_effect(0.10, 0.10).is_err());
        assert!(hypothesized_effect(0.10, 0.0).is_err());
        assert!(hypothesized_effect(0.05, 0.10).is_err());
    }

    #[test]
    fn closed_form_reference() {
        // (1.959964 + 0.841621)^2 * (0.09 + 0.0475) / 0.05^2 = 431.69
        assert_eq!(required_sample(&PowerSpec::new(0.10, 0.05)).unwrap(), 432);
        assert_eq!(required_sample(&PowerSpec::new(0.05, 0.10)).unwrap(), 432);
    }

    #[test]
    fn rejects_equal_rates() {
        assert!(required_sample(&PowerSpec::new(0.5, 0.5)).is_err());
        assert!(required_sample(&PowerSpec { alpha: 0.0, ..PowerSpec::new(0.2, 0.1) }).is_err());
    }

    #[test]
    fn diverges_as_gap_closes() {
        let mut last = 0;
        for eps in [0.1, 0.05, 0.02, 0.01, 0.005, 0.001] {
            let n = required_sample(&PowerSpec::new(0.5 + eps, 0.5)).unwrap();
            assert!(n > last);
            last = n;
        }
        assert!(last > 1_000_000);
    }

    #[test]
    fn halving_gap_roughly_quadruples() {
        let wide = required_sample(&PowerSpec::new(0.52, 0.48)).unwrap() as f64;
        let narrow = required_sample(&PowerSpec::new(0.51, 0.49)).unwrap() as f64;
        assert!((narrow / wide - 4.0).abs() < 0.05);
    }

    #[test]
    fn mc_preconditions() {
        assert!(monte_carlo_power(1.5, 0.05, 100, 0.05, 999, 0).is_err());
        assert!(monte_carlo_power(30.0, 0.05, 100, 0.05, 1000, 0).is_err());
    }

    #[test]
    fn mc_tenfold_sample_is_near_certain() {
        let n = required_sample(&PowerSpec::new(0.10, 0.05)).unwrap();
        let p = monte_carlo_power(2.0, 0.05, 10 * n, 0.05, 2000, 1).unwrap();
        assert!(p > 0.99, "{p}");
    }

    #[test]
    fn plan_rows() {
        let rates = BTreeMap::from([(1, 0.10), (2, 0.06), (3, 0.05), (4, 0.055)]);
        let traffic = TrafficSpec { daily_sessions: 10_000.0, holdout_fraction: 0.5, alpha: 0.05, power: 0.8 };
        let rows = plan_pairs(&rates, &[(1, 2), (3, 4), (4, 5)], &traffic);
        let first = rows[0].planned.unwrap();
        let n = required_sample(&PowerSpec::new(0.09, 0.07)).unwrap();
        assert_eq!(first.n_per_cell, n);
        assert!((first.days - n as f64 / (10_000.0 * 0.5 / 3.0)).abs() < 1e-9);
        assert!(rows[1].planned.is_none() && rows[1].note.is_some());
        assert!(rows[2].planned.is_none());
    }
}
