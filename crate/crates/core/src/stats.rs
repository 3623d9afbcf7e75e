//! Small statistical helpers: normal quantiles, two-proportion tests,
//! chi-square goodness of fit, percentiles, Kendall's tau, multinomial draws.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

fn std_normal() -> Normal {
    Normal::standard()
}

/// Standard normal quantile.
pub fn z_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Two-sided p-value of a z statistic.
pub fn two_sided_p(z: f64) -> f64 {
    (2.0 * (1.0 - normal_cdf(z.abs()))).min(1.0)
}

/// Pooled two-proportion z-test. Returns `(z, two-sided p)`; `p = 1` when the
/// pooled variance is zero.
pub fn two_proportion_pooled(x1: u64, n1: u64, x2: u64, n2: u64) -> (f64, f64) {
    let (p1, p2) = (x1 as f64 / n1 as f64, x2 as f64 / n2 as f64);
    let pooled = (x1 + x2) as f64 / (n1 + n2) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    if se == 0.0 {
        return (0.0, 1.0);
    }
    let z = (p1 - p2) / se;
    (z, two_sided_p(z))
}

/// Unpooled (Wald) two-proportion z statistic; 0 when both variances vanish.
pub fn two_proportion_unpooled_z(x1: u64, n1: u64, x2: u64, n2: u64) -> f64 {
    let (p1, p2) = (x1 as f64 / n1 as f64, x2 as f64 / n2 as f64);
    let se = (p1 * (1.0 - p1) / n1 as f64 + p2 * (1.0 - p2) / n2 as f64).sqrt();
    if se == 0.0 {
        0.0
    } else {
        (p1 - p2) / se
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Pearson goodness-of-fit of `observed` counts against `expected_shares`
/// (which must sum to 1).
pub fn chi_square_gof(observed: &[u64], expected_shares: &[f64]) -> ChiSquareTest {
    assert_eq!(observed.len(), expected_shares.len());
    assert!(observed.len() >= 2);
    let total: u64 = observed.iter().sum();
    let statistic: f64 = observed
        .iter()
        .zip(expected_shares)
        .map(|(&o, &share)| {
            let e = share * total as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let df = observed.len() - 1;
    let p_value = 1.0 - ChiSquared::new(df as f64).unwrap().cdf(statistic);
    ChiSquareTest { statistic, df, p_value }
}

/// Linear-interpolation percentile (Hyndman–Fan type 7) of sorted data.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Kendall's tau-b between two paired samples. O(n²).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (mut concordant, mut discordant, mut ties_x, mut ties_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = (x[i] - x[j]).partial_cmp(&0.0).unwrap();
            let dy = (y[i] - y[j]).partial_cmp(&0.0).unwrap();
            use std::cmp::Ordering::Equal;
            match (dx, dy) {
                (Equal, Equal) => {}
                (Equal, _) => ties_x += 1,
                (_, Equal) => ties_y += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n0 = (concordant + discordant) as f64;
    let denom = ((n0 + ties_x as f64) * (n0 + ties_y as f64)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (concordant - discordant) as f64 / denom
    }
}

/// Draws `n` items from categories with the given counts (with replacement),
/// i.e. a multinomial with probabilities proportional to `counts`. This is
/// exactly a nonparametric bootstrap resample of a population summarised by
/// its category counts.
pub fn resample_counts<const K: usize, R: Rng + ?Sized>(counts: &[u64; K], rng: &mut R) -> [u64; K] {
    let total: u64 = counts.iter().sum();
    let mut out = [0u64; K];
    let mut remaining_n = total;
    let mut remaining_mass = total;
    for k in 0..K {
        if remaining_n == 0 || remaining_mass == 0 {
            break;
        }
        if k == K - 1 || counts[k] == remaining_mass {
            out[k] = remaining_n;
            break;
        }
        let p = counts[k] as f64 / remaining_mass as f64;
        let draw = if p <= 0.0 { 0 } else { Binomial::new(remaining_n, p).expect("valid binomial").sample(rng) };
        out[k] = draw;
        remaining_n -= draw;
        remaining_mass -= counts[k];
    }
    out
}

/// One Binomial(n, p) draw.
pub fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}
