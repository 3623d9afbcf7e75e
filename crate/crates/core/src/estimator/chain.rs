use std::collections::BTreeMap;

use crate::types::{InterfaceId, Position, PropensitySource, PropensityTable};

use super::ratio::RatioEstimate;
use super::EstimatorError;

/// Puts pair ratios on a common scale referenced to position 1 by walking the
/// chain `1 -> lo(1) -> lo(lo(1)) -> ...` and dividing through.
///
/// Interval endpoints are chained the same way, pairing each lower bound with
/// the upper bound of the ratio (and vice versa), which is conservative.
/// With `interpolate_gap`, positions strictly between a non-adjacent pair are
/// filled by log-linear interpolation of theta and of both interval endpoints;
/// otherwise they are left out of the table.
pub fn chain_theta(
    estimates: &[RatioEstimate],
    interpolate_gap: bool,
    interface: InterfaceId,
) -> Result<PropensityTable, EstimatorError> {
    let mut by_hi: BTreeMap<Position, &RatioEstimate> = BTreeMap::new();
    for e in estimates {
        if !(e.ratio > 0.0 && e.ratio.is_finite() && e.ci.0 > 0.0 && e.ci.0 <= e.ratio && e.ratio <= e.ci.1) {
            return Err(EstimatorError::Precondition(format!(
                "pair ({},{}) has invalid ratio {} or interval {:?}",
                e.hi, e.lo, e.ratio, e.ci
            )));
        }
        if by_hi.insert(e.hi, e).is_some() {
            return Err(EstimatorError::AmbiguousChain { position: e.hi });
        }
    }

    let mut theta = BTreeMap::from([(1, 1.0)]);
    let mut ci_low = BTreeMap::from([(1, 1.0)]);
    let mut ci_high = BTreeMap::from([(1, 1.0)]);
    let mut current: Position = 1;
    let mut visited = Vec::new();
    while let Some(e) = by_hi.get(&current) {
        visited.push(e.hi);
        let (t, l, h) = (theta[&current], ci_low[&current], ci_high[&current]);
        let next = (t / e.ratio, l / e.ci.1, h / e.ci.0);
        if interpolate_gap && e.lo > current + 1 {
            let span = (e.lo - current) as f64;
            let lerp = |a: f64, b: f64, w: f64| (a.ln() + w * (b.ln() - a.ln())).exp();
            for p in current + 1..e.lo {
                let w = (p - current) as f64 / span;
                theta.insert(p, lerp(t, next.0, w));
                ci_low.insert(p, lerp(l, next.1, w));
                ci_high.insert(p, lerp(h, next.2, w));
            }
        }
        theta.insert(e.lo, next.0);
        ci_low.insert(e.lo, next.1);
        ci_high.insert(e.lo, next.2);
        current = e.lo;
    }

    if visited.is_empty() || visited.len() < by_hi.len() {
        let unreachable: Vec<(Position, Position)> =
            by_hi.values().filter(|e| !visited.contains(&e.hi)).map(|e| (e.hi, e.lo)).collect();
        return Err(EstimatorError::BrokenChain { missing_from: current, unreachable });
    }

    Ok(PropensityTable {
        interface,
        theta,
        ci_low,
        ci_high,
        source: PropensitySource::RandomizedEstimate,
        created_at: 0,
    })
}

/// Positions a chained table fills by interpolation rather than estimation.
pub fn interpolated_positions(estimates: &[RatioEstimate]) -> Vec<Position> {
    let mut out: Vec<Position> = estimates.iter().filter(|e| e.lo > e.hi + 1).flat_map(|e| e.hi + 1..e.lo).collect();
    out.sort_unstable();
    out
}
