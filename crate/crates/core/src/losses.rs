//! Strongly convex quadratic losses and the adversaries that emit them.
//!
//! Every loss is `ℓ(x) = (m/2)‖x − c‖² + ⟨w, x⟩`. Its Lipschitz constant over
//! `DB` is computed from the body, never supplied by the user:
//! `G = m(D + ‖c‖) + ‖w‖`, and its strong-convexity modulus is `μ = m`.
//!
//! Smoothing a quadratic over the unit ball only adds a constant, so the
//! smoothed gradient is available in closed form. The conclab checks rely on
//! that.
//!
//! The three adversary kinds are not prescribed anywhere in the theory; they
//! are test workloads:
//! - `fixed`: the same loss every round.
//! - `shifting`: centres follow a seeded random walk inside `ρB` with step
//!   `ρ/√T` (configurable), starting at the origin.
//! - `adaptive`: `c_t = P_K(x_{t−1} + ρ (x_{t−1} − x_{t−2}) / ‖x_{t−1} − x_{t−2}‖)`,
//!   falling back to a seeded random direction when `t ≤ 2` or the player did
//!   not move.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ConvexBody;
use crate::sampling::RandomSource;
use crate::vecops::{dist_sq, dot, norm, sub};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum LossForm {
    Quadratic { center: Vec<f64>, curvature: f64 },
    QuadPlusLinear { center: Vec<f64>, curvature: f64, slope: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossFunction {
    pub form: LossForm,
    pub mu: f64,
    pub lipschitz_g: f64,
}

fn check_curvature(m: f64) -> Result<()> {
    if m.is_finite() && m > 0.0 {
        Ok(())
    } else {
        Err(Error::param(format!("curvature must be positive, got {m}")))
    }
}

impl LossFunction {
    pub fn quadratic(center: Vec<f64>, curvature: f64, body: &ConvexBody) -> Result<Self> {
        check_curvature(curvature)?;
        Error::check_dim(body.dim(), center.len())?;
        let g = curvature * (body.outer_radius() + norm(&center));
        Ok(Self { form: LossForm::Quadratic { center, curvature }, mu: curvature, lipschitz_g: g })
    }

    pub fn quad_plus_linear(
        center: Vec<f64>,
        curvature: f64,
        slope: Vec<f64>,
        body: &ConvexBody,
    ) -> Result<Self> {
        check_curvature(curvature)?;
        Error::check_dim(body.dim(), center.len())?;
        Error::check_dim(body.dim(), slope.len())?;
        let g = curvature * (body.outer_radius() + norm(&center)) + norm(&slope);
        Ok(Self {
            form: LossForm::QuadPlusLinear { center, curvature, slope },
            mu: curvature,
            lipschitz_g: g,
        })
    }

    pub fn dim(&self) -> usize {
        self.center().len()
    }

    pub fn center(&self) -> &[f64] {
        match &self.form {
            LossForm::Quadratic { center, .. } | LossForm::QuadPlusLinear { center, .. } => center,
        }
    }

    pub fn curvature(&self) -> f64 {
        match &self.form {
            LossForm::Quadratic { curvature, .. } | LossForm::QuadPlusLinear { curvature, .. } => {
                *curvature
            }
        }
    }

    /// Linear part `w`, if any.
    pub fn slope(&self) -> Option<&[f64]> {
        match &self.form {
            LossForm::Quadratic { .. } => None,
            LossForm::QuadPlusLinear { slope, .. } => Some(slope),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Error::check_dim(self.dim(), x.len())?;
        Ok(self.value_unchecked(x))
    }

    #[inline]
    pub(crate) fn value_unchecked(&self, x: &[f64]) -> f64 {
        let q = 0.5 * self.curvature() * dist_sq(x, self.center());
        match self.slope() {
            None => q,
            Some(w) => q + dot(w, x),
        }
    }

    /// `∇ℓ(x) = m(x − c) + w`. Only used by analysis code, never by the player.
    pub fn true_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.dim(), x.len())?;
        let m = self.curvature();
        let mut g: Vec<f64> = x.iter().zip(self.center()).map(|(xi, ci)| m * (xi - ci)).collect();
        if let Some(w) = self.slope() {
            g.iter_mut().zip(w).for_each(|(gi, wi)| *gi += wi);
        }
        Ok(g)
    }

    /// Gradient of the ball-smoothed loss `ℓ̂(x) = E_v ℓ(x + αv)`. For a
    /// quadratic the smoothing adds `m α² E‖v‖² / 2`, independent of `x`, so
    /// this equals the true gradient for every α.
    pub fn smoothed_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.true_gradient(x)
    }

    /// Closed-form `ℓ̂(x) = ℓ(x) + m α² d / (2(d + 2))`.
    pub fn smoothed_value(&self, x: &[f64], alpha: f64) -> Result<f64> {
        let d = self.dim() as f64;
        Ok(self.evaluate(x)? + self.curvature() * alpha * alpha * d / (2.0 * (d + 2.0)))
    }

    /// Closed-form `E_u ℓ(x ± αu)` for `u` uniform on the sphere:
    /// `ℓ(x) + m α² / 2` (the linear terms average out).
    pub fn sphere_mean(&self, x: &[f64], alpha: f64) -> Result<f64> {
        Ok(self.evaluate(x)? + 0.5 * self.curvature() * alpha * alpha)
    }
}

fn default_curvature() -> f64 {
    1.0
}

/// Adversary description as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdversarySpec {
    Fixed {
        /// Explicit centre; must match the run dimension.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        /// Centre placed at `center_scale · e_1`; usable across dimension sweeps.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center_scale: Option<f64>,
        #[serde(default = "default_curvature")]
        curvature: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        slope: Option<Vec<f64>>,
    },
    Shifting {
        rho: f64,
        #[serde(default = "default_curvature")]
        curvature: f64,
        /// Per-round step of the centre walk; defaults to `ρ/√T`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step: Option<f64>,
    },
    Adaptive {
        rho: f64,
        #[serde(default = "default_curvature")]
        curvature: f64,
    },
}

impl AdversarySpec {
    pub fn fixed_quadratic(center: Vec<f64>, curvature: f64) -> Self {
        AdversarySpec::Fixed { center: Some(center), center_scale: None, curvature, slope: None }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            AdversarySpec::Fixed { .. } => "fixed",
            AdversarySpec::Shifting { .. } => "shifting",
            AdversarySpec::Adaptive { .. } => "adaptive",
        }
    }

    /// Switch to another kind, keeping the curvature and using `ρ = D/2`
    /// when the new kind needs a radius the old one did not have.
    pub fn with_kind(&self, kind: &str, outer_radius: f64) -> Result<Self> {
        let curvature = self.curvature();
        let rho = match self {
            AdversarySpec::Shifting { rho, .. } | AdversarySpec::Adaptive { rho, .. } => *rho,
            AdversarySpec::Fixed { .. } => 0.5 * outer_radius,
        };
        match kind {
            k if k == self.kind_name() => Ok(self.clone()),
            "fixed" => Ok(AdversarySpec::Fixed { center: None, center_scale: None, curvature, slope: None }),
            "shifting" => Ok(AdversarySpec::Shifting { rho, curvature, step: None }),
            "adaptive" => Ok(AdversarySpec::Adaptive { rho, curvature }),
            other => Err(Error::Config(format!(
                "unknown adversary kind \"{other}\" (expected fixed, shifting or adaptive)"
            ))),
        }
    }

    pub fn curvature(&self) -> f64 {
        match self {
            AdversarySpec::Fixed { curvature, .. }
            | AdversarySpec::Shifting { curvature, .. }
            | AdversarySpec::Adaptive { curvature, .. } => *curvature,
        }
    }

    /// Strong-convexity modulus shared by every round.
    pub fn declared_mu(&self) -> f64 {
        self.curvature()
    }

    /// Largest per-round Lipschitz constant this adversary can emit on `body`.
    pub fn declared_g(&self, body: &ConvexBody) -> Result<f64> {
        let m = self.curvature();
        let d_outer = body.outer_radius();
        Ok(match self {
            AdversarySpec::Fixed { .. } => self.fixed_loss(body)?.lipschitz_g,
            AdversarySpec::Shifting { rho, .. } => m * (d_outer + rho),
            // centres are projected into K
            AdversarySpec::Adaptive { .. } => m * 2.0 * d_outer,
        })
    }

    fn fixed_loss(&self, body: &ConvexBody) -> Result<LossFunction> {
        let AdversarySpec::Fixed { center, center_scale, curvature, slope } = self else {
            unreachable!("fixed_loss called on a non-fixed adversary")
        };
        let d = body.dim();
        let c = match (center, center_scale) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either center or center_scale, not both".into()))
            }
            (Some(c), None) => c.clone(),
            (None, Some(s)) => {
                let mut c = vec![0.0; d];
                c[0] = *s;
                c
            }
            (None, None) => vec![0.0; d],
        };
        match slope {
            None => LossFunction::quadratic(c, *curvature, body),
            Some(w) => LossFunction::quad_plus_linear(c, *curvature, w.clone(), body),
        }
    }

    pub fn validate(&self, body: &ConvexBody) -> Result<()> {
        check_curvature(self.curvature())?;
        match self {
            AdversarySpec::Fixed { .. } => self.fixed_loss(body).map(|_| ()),
            AdversarySpec::Shifting { rho, step, .. } => {
                if !(*rho > 0.0 && *rho <= body.outer_radius()) {
                    return Err(Error::param(format!(
                        "shifting rho must lie in (0, D = {}], got {rho}",
                        body.outer_radius()
                    )));
                }
                if let Some(s) = step {
                    if !(*s >= 0.0 && s.is_finite()) {
                        return Err(Error::param(format!("shifting step must be >= 0, got {s}")));
                    }
                }
                Ok(())
            }
            AdversarySpec::Adaptive { rho, .. } => {
                if *rho > 0.0 && rho.is_finite() {
                    Ok(())
                } else {
                    Err(Error::param(format!("adaptive rho must be positive, got {rho}")))
                }
            }
        }
    }
}

const ADVERSARY_DOMAIN: u64 = 0xAD5E_55A7;

/// A running adversary for one game of `horizon` rounds.
///
/// The loss for round `t` is a pure function of the spec, the seed, `t` and
/// the history `x_1..x_{t−1}`; it never sees the player's current point or
/// direction.
#[derive(Debug, Clone)]
pub struct Adversary {
    spec: AdversarySpec,
    body: ConvexBody,
    horizon: usize,
    seed: u64,
    stream_id: u64,
    declared_g: f64,
    fixed: Option<LossFunction>,
    walk: Vec<Vec<f64>>,
    walk_src: Option<RandomSource>,
}

impl Adversary {
    pub fn new(
        spec: AdversarySpec,
        body: ConvexBody,
        horizon: usize,
        seed: u64,
        stream_id: u64,
    ) -> Result<Self> {
        spec.validate(&body)?;
        if horizon == 0 {
            return Err(Error::param("adversary horizon must be positive"));
        }
        let declared_g = spec.declared_g(&body)?;
        let fixed = match spec {
            AdversarySpec::Fixed { .. } => Some(spec.fixed_loss(&body)?),
            _ => None,
        };
        let walk_src = matches!(spec, AdversarySpec::Shifting { .. })
            .then(|| RandomSource::for_domain(seed, stream_id, ADVERSARY_DOMAIN));
        Ok(Self {
            spec,
            body,
            horizon,
            seed,
            stream_id,
            declared_g,
            fixed,
            walk: Vec::new(),
            walk_src,
        })
    }

    pub fn spec(&self) -> &AdversarySpec {
        &self.spec
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn declared_g(&self) -> f64 {
        self.declared_g
    }

    pub fn declared_mu(&self) -> f64 {
        self.spec.declared_mu()
    }

    /// Loss for round `t` (1-based) given the plays `x_1..x_{t−1}`.
    pub fn next_loss(&mut self, t: usize, history: &[Vec<f64>]) -> Result<LossFunction> {
        if t == 0 || t > self.horizon {
            return Err(Error::param(format!("round {t} outside 1..={}", self.horizon)));
        }
        if history.len() != t - 1 {
            return Err(Error::param(format!(
                "round {t} needs {} past plays, got {}",
                t - 1,
                history.len()
            )));
        }
        let m = self.spec.curvature();
        match &self.spec {
            AdversarySpec::Fixed { .. } => Ok(self.fixed.clone().expect("built in new")),
            AdversarySpec::Shifting { rho, step, .. } => {
                let (rho, step) = (*rho, step.unwrap_or(*rho / (self.horizon as f64).sqrt()));
                let c = self.walk_center(t, rho, step)?;
                LossFunction::quadratic(c, m, &self.body)
            }
            AdversarySpec::Adaptive { rho, .. } => {
                let rho = *rho;
                let d = self.body.dim();
                let last = history.last().cloned().unwrap_or_else(|| vec![0.0; d]);
                let motion = (t > 2).then(|| sub(&history[t - 2], &history[t - 3]));
                let dir = match motion {
                    Some(mv) if norm(&mv) > 0.0 => {
                        let n = norm(&mv);
                        mv.into_iter().map(|v| v / n).collect()
                    }
                    _ => self.fallback_direction(t),
                };
                let pushed: Vec<f64> = last.iter().zip(&dir).map(|(x, u)| x + rho * u).collect();
                let c = self.body.project(&pushed)?;
                LossFunction::quadratic(c, m, &self.body)
            }
        }
    }

    fn fallback_direction(&self, t: usize) -> Vec<f64> {
        let mut src = RandomSource::for_domain(
            self.seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            self.stream_id,
            ADVERSARY_DOMAIN + 1,
        );
        src.sample_sphere(self.body.dim()).expect("positive dimension")
    }

    fn walk_center(&mut self, t: usize, rho: f64, step: f64) -> Result<Vec<f64>> {
        let d = self.body.dim();
        if self.walk.is_empty() {
            self.walk.push(vec![0.0; d]);
        }
        let ball = ConvexBody::ball(d, rho)?;
        let src = self.walk_src.as_mut().expect("shifting adversary has a walk source");
        while self.walk.len() < t {
            let prev = self.walk.last().expect("non-empty");
            let z = src.sample_sphere(d)?;
            let moved: Vec<f64> = prev.iter().zip(&z).map(|(c, u)| c + step * u).collect();
            let next = ball.project(&moved)?;
            self.walk.push(next);
        }
        Ok(self.walk[t - 1].clone())
    }
}

#[cfg(test)]
fn lipschitz_ok(loss: &LossFunction, declared: f64) -> bool {
    loss.lipschitz_g <= declared * (1.0 + 1e-12)
}
