//! The two-point gradient estimator and a Monte-Carlo evaluator of the
//! ball-smoothed loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ConvexBody;
use crate::losses::LossFunction;
use crate::sampling::RandomSource;
use crate::vecops::{axpy, norm};

/// Tolerance on `‖u‖ = 1` accepted from callers.
pub const UNIT_TOL: f64 = 1e-9;

/// Both loss observations of one round and the gradient estimate built from
/// them. Keeping the raw values lets traces be re-analysed offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoPointQuery {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub alpha: f64,
    pub value_plus: f64,
    pub value_minus: f64,
    pub g: Vec<f64>,
}

impl TwoPointQuery {
    /// `(ℓ(x + αu) − ℓ(x − αu)) / (2α)`, the directional slope along `u`.
    pub fn slope(&self) -> f64 {
        (self.value_plus - self.value_minus) / (2.0 * self.alpha)
    }

    pub fn g_norm_sq(&self) -> f64 {
        self.g.iter().map(|v| v * v).sum()
    }
}

/// `g = d (ℓ(x + αu) − ℓ(x − αu)) / (2α) · u`, with exactly two evaluations
/// of `loss`.
///
/// Both query points must lie in `body`; an infeasible query is reported as
/// [`Error::Feasibility`] rather than clamped.
pub fn two_point_gradient(
    loss: &LossFunction,
    body: &ConvexBody,
    x: &[f64],
    u: &[f64],
    alpha: f64,
) -> Result<TwoPointQuery> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param(format!("alpha must be positive, got {alpha}")));
    }
    let d = body.dim();
    Error::check_dim(d, x.len())?;
    Error::check_dim(d, u.len())?;
    Error::check_dim(d, loss.dim())?;
    let un = norm(u);
    if (un - 1.0).abs() > UNIT_TOL {
        return Err(Error::param(format!("direction must be a unit vector, |u| = {un}")));
    }
    let plus = axpy(x, alpha, u);
    let minus = axpy(x, -alpha, u);
    for (sign, p) in [("+", &plus), ("-", &minus)] {
        if !body.contains(p)? {
            return Err(Error::Feasibility(format!(
                "query x {sign} alpha*u has norm {:.6} and leaves the body (alpha = {alpha})",
                norm(p)
            )));
        }
    }
    let value_plus = loss.value_unchecked(&plus);
    let value_minus = loss.value_unchecked(&minus);
    let coef = d as f64 * (value_plus - value_minus) / (2.0 * alpha);
    let g = u.iter().map(|ui| coef * ui).collect();
    Ok(TwoPointQuery { x: x.to_vec(), u: u.to_vec(), alpha, value_plus, value_minus, g })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Monte-Carlo mean and standard error of `ℓ(x + αv)` over `n` draws of `v`
/// uniform in the unit ball. `alpha = 0` is accepted and returns `ℓ(x)`.
pub fn smoothed_loss_estimate(
    loss: &LossFunction,
    body: &ConvexBody,
    x: &[f64],
    alpha: f64,
    n: usize,
    src: &mut RandomSource,
) -> Result<MonteCarloEstimate> {
    if n < 2 {
        return Err(Error::param(format!("need at least 2 samples, got {n}")));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::param(format!("alpha must be non-negative, got {alpha}")));
    }
    Error::check_dim(loss.dim(), x.len())?;
    if !body.contains_ball(x, alpha)? {
        return Err(Error::Feasibility(format!(
            "x + alpha*B leaves the body (|x| = {:.6}, alpha = {alpha})",
            norm(x)
        )));
    }
    if alpha == 0.0 {
        return Ok(MonteCarloEstimate { mean: loss.value_unchecked(x), stderr: 0.0 });
    }
    let d = x.len();
    // Welford
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 1..=n {
        let v = src.sample_ball(d)?;
        let p = axpy(x, alpha, &v);
        let val = loss.value_unchecked(&p);
        let delta = val - mean;
        mean += delta / k as f64;
        m2 += delta * (val - mean);
    }
    let var = m2 / (n - 1) as f64;
    Ok(MonteCarloEstimate { mean, stderr: (var / n as f64).sqrt() })
}
