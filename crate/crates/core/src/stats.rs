//! Small statistics toolkit for the Monte-Carlo checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nearest-rank `q`-quantile: the `⌈q·n⌉`-th smallest value (1-based),
/// clamped to the sample.
pub fn quantile_nearest_rank(sample: &[f64], q: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InsufficientData("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::param(format!("quantile level must lie in [0, 1], got {q}")));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (q * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn of(sample: &[f64]) -> Self {
        let n = sample.len();
        let nf = n as f64;
        let mean = sample.iter().sum::<f64>() / nf;
        let var = if n > 1 {
            sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)
        } else {
            0.0
        };
        Self { mean, stderr: (var / nf).sqrt(), n }
    }

    /// `|mean − target| ≤ k · stderr`
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }
}

/// Binomial proportion with its normal-approximation standard error and a
/// Wilson score interval at ~99.7% (z = 3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: usize,
    pub n: usize,
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Proportion {
    pub const Z: f64 = 3.0;

    pub fn new(successes: usize, n: usize) -> Self {
        let nf = n.max(1) as f64;
        let p = successes as f64 / nf;
        let z2 = Self::Z * Self::Z;
        let denom = 1.0 + z2 / nf;
        let centre = (p + z2 / (2.0 * nf)) / denom;
        let half = Self::Z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
        Self { successes, n, rate: p, lower: (centre - half).max(0.0), upper: (centre + half).min(1.0) }
    }

    /// Whether a claimed rate `p` is compatible with (or above) this
    /// estimate: `rate ≤ p + 3 √(p(1−p)/n)`.
    pub fn consistent_with_at_most(&self, p: f64) -> bool {
        self.rate <= p + Self::Z * (p * (1.0 - p) / self.n.max(1) as f64).sqrt()
    }
}

/// Ordinary least squares `y = intercept + slope · x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    /// NaN with fewer than three points.
    pub slope_se: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::Dimension { expected: x.len(), got: y.len() });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("a line needs at least 2 points, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all regressor values are equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let slope_se = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { f64::NAN };
    Ok(LinearFit { slope, slope_se, intercept, r_squared, n })
}

/// Least squares on `(ln x, ln y)`.
pub fn log_log_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if let Some(v) = x.iter().chain(y).find(|v| v.is_nan() || **v <= 0.0) {
        return Err(Error::param(format!("log-log fit needs positive values, got {v}")));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    ols(&lx, &ly)
}
