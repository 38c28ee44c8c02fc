//! Small statistics toolkit: batch means, one-sample KS, DKW bands,
//! empirical-CDF comparisons and least-squares slope fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance.
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Mean of all values and the batch-means standard error of that mean.
///
/// Values are split into `batches` contiguous batches of equal size (the
/// remainder is left out of the error estimate only). With fewer than two
/// usable batches the error is infinite.
pub fn batch_means(values: &[f64], batches: usize) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::INFINITY);
    }
    let m = mean(values);
    let b = batches.min(values.len());
    if b < 2 {
        return (m, f64::INFINITY);
    }
    let size = values.len() / b;
    let bm: Vec<f64> = values.chunks_exact(size).take(b).map(mean).collect();
    (m, (variance(&bm) / b as f64).sqrt())
}

/// One-sample Kolmogorov–Smirnov distance `sup_x |F_N(x) - F(x)|`.
///
/// Ties are handled exactly: for a group of equal values the empirical CDF
/// jumps once, and both one-sided gaps at the jump are considered.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InsufficientData(
            "KS statistic of an empty sample".into(),
        ));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0_f64;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        d = d.max(f - i as f64 / n).max((j + 1) as f64 / n - f);
        i = j + 1;
    }
    Ok(d)
}

/// Asymptotic one-sample KS critical value at level `alpha`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Dvoretzky–Kiefer–Wolfowitz band half-width: with probability at least
/// `1 - alpha`, `sup |F_N - F| <= eps`.
pub fn dkw_epsilon(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Right-continuous empirical CDF of sorted data at `x`.
fn ecdf_sorted(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|&v| v <= x) as f64 / sorted.len() as f64
}

/// `sup_x (F_a(x) - F_b(x))` over the pooled support, with the point where
/// it is attained. Zero or negative means `F_a <= F_b` everywhere.
pub fn max_cdf_excess(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData(
            "empirical CDF of an empty sample".into(),
        ));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for &x in sa.iter().chain(sb.iter()) {
        let gap = ecdf_sorted(&sa, x) - ecdf_sorted(&sb, x);
        if gap > best.0 {
            best = (gap, x);
        }
    }
    Ok(best)
}

/// Ordinary least squares fit `y = slope * x + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
}

pub fn slope_fit(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 2 {
        return Err(Error::InsufficientData(
            "a slope needs at least two points".into(),
        ));
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData(
            "all x values coincide; slope is undetermined".into(),
        ));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let (slope_se, intercept_se) = if points.len() > 2 {
        let s2 = sse / (k - 2.0);
        ((s2 / sxx).sqrt(), (s2 * (1.0 / k + mx * mx / sxx)).sqrt())
    } else {
        (0.0, 0.0)
    };
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(SlopeFit {
        slope,
        intercept,
        slope_se,
        intercept_se,
        r_squared,
        points: points.to_vec(),
    })
}

/// Fit of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.iter().any(|p| p.0 <= 0.0 || p.1 <= 0.0) {
        return Err(Error::InsufficientData(
            "log-log fit needs positive coordinates".into(),
        ));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|p| (p.0.ln(), p.1.ln())).collect();
    slope_fit(&logs)
}
