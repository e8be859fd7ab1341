//! Statistics utilities for the experiment harness.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use std::collections::BTreeMap;

/// Total-variation distance between discrete distributions over string keys:
/// half the L1 distance over the union of supports.
pub fn tv_distance(p: &BTreeMap<String, f64>, q: &BTreeMap<String, f64>) -> f64 {
    let mut keys: Vec<&String> = p.keys().chain(q.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .iter()
        .map(|k| (p.get(*k).unwrap_or(&0.0) - q.get(*k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

/// Wilson score interval for a binomial proportion at the given two-sided
/// confidence level.
pub fn wilson_interval(successes: u64, trials: u64, level: f64) -> (f64, f64) {
    assert!(trials > 0, "wilson interval needs at least one trial");
    let z = Normal::new(0.0, 1.0)
        .unwrap()
        .inverse_cdf(1.0 - (1.0 - level) / 2.0);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Kolmogorov-Smirnov statistic of the samples against a continuous CDF,
/// with the asymptotic p-value (Stephens' small-sample correction).
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x).clamp(0.0, 1.0);
        d = d
            .max((f - i as f64 / n).abs())
            .max(((i + 1) as f64 / n - f).abs());
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    (d, ks_survival(lambda))
}

/// Q_KS(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
fn ks_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Pearson chi-square statistic of observed counts against expected counts,
/// with the p-value on `len - 1` degrees of freedom.
pub fn chi_square(counts: &[u64], expected: &[f64]) -> (f64, f64) {
    assert_eq!(counts.len(), expected.len());
    assert!(counts.len() >= 2);
    let stat: f64 = counts
        .iter()
        .zip(expected.iter())
        .map(|(&c, &e)| {
            let d = c as f64 - e;
            d * d / e
        })
        .sum();
    let dof = (counts.len() - 1) as f64;
    let p = 1.0 - ChiSquared::new(dof).unwrap().cdf(stat);
    (stat, p)
}

/// Ordinary least squares y = a + b x, returning (slope, intercept, r^2).
pub fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let syy: f64 = ys.iter().map(|y| (y - ym) * (y - ym)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, ym - slope * xm, r2)
}

/// Slope of `log y` against `log x` with its r^2.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (slope, _, r2) = ols(&lx, &ly);
    (slope, r2)
}
