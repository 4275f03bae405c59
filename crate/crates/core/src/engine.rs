//! The online loop: projected gradient steps driven by two-point estimates.
//!
//! ```text
//! x_1 = 0
//! for t = 1..T:
//!     u_t ~ uniform on the unit sphere
//!     observe ℓ_t(x_t + αu_t), ℓ_t(x_t − αu_t)
//!     g_t = d (ℓ_t(x_t + αu_t) − ℓ_t(x_t − αu_t)) / (2α) · u_t
//!     x_{t+1} = Π_{(1−ξ)K}(x_t − η_t g_t)
//! ```
//!
//! Defaults: `η_t = 2/(μt)`, `α = ln T / T`, `ξ = α / r`. The loop evaluates
//! each loss at exactly two points. Gradients, smoothed losses and the
//! comparator are only ever computed afterwards from the recorded loss
//! parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::two_point_gradient;
use crate::geometry::{BodyKind, ConvexBody};
use crate::losses::{Adversary, AdversarySpec, LossFunction};
use crate::sampling::RandomSource;
use crate::vecops::{dist_sq, dot, norm, norm_sq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    /// `η_t = 2/(μt)`
    #[default]
    TwoOverMuT,
    /// `η_t = 1/(μt)`, the classical choice, kept for ablations.
    OneOverMuT,
}

impl StepSchedule {
    pub fn eta(self, t: usize, mu: f64) -> f64 {
        let t = t as f64;
        match self {
            StepSchedule::TwoOverMuT => 2.0 / (mu * t),
            StepSchedule::OneOverMuT => 1.0 / (mu * t),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StepSchedule::TwoOverMuT => "two_over_mu_t",
            StepSchedule::OneOverMuT => "one_over_mu_t",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "two_over_mu_t" => Some(StepSchedule::TwoOverMuT),
            "one_over_mu_t" => Some(StepSchedule::OneOverMuT),
            _ => None,
        }
    }
}

/// Parameters of one game. `alpha`, `xi` and `mu` are optional on input and
/// filled in by [`RunConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dim: usize,
    pub horizon: usize,
    pub body: BodyKind,
    pub adversary: AdversarySpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stream_id: u64,
    /// Exploration radius; defaults to `ln T / T`.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Shrinkage; defaults to `alpha / r`.
    #[serde(default)]
    pub xi: Option<f64>,
    #[serde(default)]
    pub step_schedule: StepSchedule,
    /// Step-size modulus; defaults to the adversary's declared μ. Overriding
    /// it is only meaningful for mis-specification experiments.
    #[serde(default)]
    pub mu: Option<f64>,
}

impl RunConfig {
    /// A fixed quadratic on the unit ball, handy for tests and examples.
    pub fn fixed_quadratic_ball(dim: usize, horizon: usize, center: Vec<f64>, curvature: f64) -> Self {
        Self {
            dim,
            horizon,
            body: BodyKind::Ball { radius: 1.0 },
            adversary: AdversarySpec::fixed_quadratic(center, curvature),
            seed: 0,
            stream_id: 0,
            alpha: None,
            xi: None,
            step_schedule: StepSchedule::TwoOverMuT,
            mu: None,
        }
    }

    pub fn with_seed(mut self, seed: u64, stream_id: u64) -> Self {
        self.seed = seed;
        self.stream_id = stream_id;
        self
    }

    pub fn body(&self) -> Result<ConvexBody> {
        ConvexBody::new(self.body.clone(), self.dim)
    }

    /// The same game in another dimension. Boxes with equal half-widths and
    /// all-zero centres or slopes are resized; anything else that pins the
    /// dimension is rejected.
    pub fn with_dim(&self, dim: usize) -> Result<RunConfig> {
        if dim == self.dim {
            return Ok(self.clone());
        }
        let resize = |v: &Vec<f64>, what: &str| -> Result<Vec<f64>> {
            match v.first() {
                Some(&a) if v.iter().all(|x| *x == a) && (a == 0.0 || what == "half_widths") => Ok(vec![a; dim]),
                _ => Err(Error::Config(format!(
                    "{what} has {} entries and cannot be resized to d = {dim}; use a uniform value",
                    v.len()
                ))),
            }
        };
        let body = match &self.body {
            BodyKind::Ball { radius } => BodyKind::Ball { radius: *radius },
            BodyKind::Box { half_widths } => BodyKind::Box { half_widths: resize(half_widths, "half_widths")? },
        };
        let adversary = match &self.adversary {
            AdversarySpec::Fixed { center, center_scale, curvature, slope } => AdversarySpec::Fixed {
                center: center.as_ref().map(|c| resize(c, "center")).transpose()?,
                center_scale: *center_scale,
                curvature: *curvature,
                slope: slope.as_ref().map(|w| resize(w, "slope")).transpose()?,
            },
            other => other.clone(),
        };
        Ok(RunConfig { dim, body, adversary, ..self.clone() })
    }

    /// Fills in the defaults and checks every invariant of the parameter
    /// schedule. The returned config has `alpha`, `xi` and `mu` set.
    pub fn resolve(&self) -> Result<RunConfig> {
        if self.horizon == 0 {
            return Err(Error::param("horizon must be at least 1"));
        }
        if self.horizon == 1 && self.alpha.is_none() {
            return Err(Error::param("the default alpha = ln T / T vanishes at T = 1; set alpha explicitly"));
        }
        let body = self.body()?;
        self.adversary.validate(&body)?;
        let t = self.horizon as f64;
        let alpha = self.alpha.unwrap_or(t.ln() / t);
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::param(format!("alpha must be positive, got {alpha}")));
        }
        let r = body.inner_radius();
        let xi = self.xi.unwrap_or(alpha / r);
        if !(0.0..1.0).contains(&xi) {
            return Err(Error::param(format!(
                "xi = {xi} must lie in [0, 1); alpha = {alpha} is too large for inner radius {r}"
            )));
        }
        if alpha > xi * r * (1.0 + 1e-12) {
            return Err(Error::param(format!(
                "alpha = {alpha} exceeds xi * r = {}; query points could leave the body",
                xi * r
            )));
        }
        let mu = self.mu.unwrap_or_else(|| self.adversary.declared_mu());
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::param(format!("mu must be positive, got {mu}")));
        }
        Ok(RunConfig { alpha: Some(alpha), xi: Some(xi), mu: Some(mu), ..self.clone() })
    }

    /// `(alpha, xi, mu)` of a resolved config.
    pub fn resolved_params(&self) -> Result<(f64, f64, f64)> {
        match (self.alpha, self.xi, self.mu) {
            (Some(a), Some(x), Some(m)) => Ok((a, x, m)),
            _ => {
                let r = self.resolve()?;
                r.resolved_params()
            }
        }
    }

    pub fn declared_g(&self) -> Result<f64> {
        self.adversary.declared_g(&self.body()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub value_plus: f64,
    pub value_minus: f64,
    pub g: Vec<f64>,
    pub g_norm_sq: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Resolved config.
    pub config: RunConfig,
    pub declared_g: f64,
    pub rounds: Vec<RoundRecord>,
    pub losses: Vec<LossFunction>,
}

impl Trace {
    pub fn body(&self) -> Result<ConvexBody> {
        self.config.body()
    }

    pub fn alpha(&self) -> f64 {
        self.config.alpha.expect("trace configs are resolved")
    }

    pub fn xi(&self) -> f64 {
        self.config.xi.expect("trace configs are resolved")
    }

    pub fn mu(&self) -> f64 {
        self.config.mu.expect("trace configs are resolved")
    }

    /// Number of loss evaluations the player made.
    pub fn evaluations(&self) -> usize {
        2 * self.rounds.len()
    }

    pub fn cumulative_loss(&self) -> Result<CumulativeLoss> {
        CumulativeLoss::from_losses(&self.losses)
    }
}

/// Drives the loop, handing every round to `observe` as it completes.
/// Returns the resolved config and the adversary's declared G.
pub fn run_observed<F>(config: &RunConfig, mut observe: F) -> Result<(RunConfig, f64)>
where
    F: FnMut(&RoundRecord, &LossFunction),
{
    let config = config.resolve()?;
    let (alpha, xi, mu) = config.resolved_params()?;
    let body = config.body()?;
    let d = config.dim;
    let mut adversary = Adversary::new(
        config.adversary.clone(),
        body.clone(),
        config.horizon,
        config.seed,
        config.stream_id,
    )?;
    let mut src = RandomSource::new(config.seed, config.stream_id);
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(config.horizon);
    let mut x = vec![0.0; d];
    let mut u = vec![0.0; d];
    for t in 1..=config.horizon {
        let loss = adversary.next_loss(t, &history)?;
        src.fill_sphere(&mut u);
        let q = two_point_gradient(&loss, &body, &x, &u, alpha)?;
        let eta = config.step_schedule.eta(t, mu);
        let stepped: Vec<f64> = x.iter().zip(&q.g).map(|(xi_, gi)| xi_ - eta * gi).collect();
        let next = body.project_shrunk(xi, &stepped)?;
        let g_norm_sq = norm_sq(&q.g);
        let record = RoundRecord {
            t,
            x: q.x,
            u: q.u,
            value_plus: q.value_plus,
            value_minus: q.value_minus,
            g: q.g,
            g_norm_sq,
            eta,
        };
        observe(&record, &loss);
        history.push(std::mem::replace(&mut x, next));
    }
    let g = adversary.declared_g();
    Ok((config, g))
}

/// Runs one game and records everything. Deterministic in the config.
pub fn run(config: &RunConfig) -> Result<Trace> {
    let mut rounds = Vec::with_capacity(config.horizon);
    let mut losses = Vec::with_capacity(config.horizon);
    let (config, declared_g) = run_observed(config, |r, l| {
        rounds.push(r.clone());
        losses.push(l.clone());
    })?;
    Ok(Trace { config, declared_g, rounds, losses })
}

/// Sufficient statistics of `F(x) = Σ_t ℓ_t(x)` for quadratic(+linear) losses:
/// `F(x) = (M/2)‖x‖² − ⟨Σ m_t c_t − Σ w_t, x⟩ + Σ m_t ‖c_t‖²/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeLoss {
    total_m: f64,
    /// `Σ m_t c_t − Σ w_t`
    pull: Vec<f64>,
    offset: f64,
    count: usize,
}

impl CumulativeLoss {
    pub fn new(dim: usize) -> Self {
        Self { total_m: 0.0, pull: vec![0.0; dim], offset: 0.0, count: 0 }
    }

    pub fn push(&mut self, loss: &LossFunction) -> Result<()> {
        Error::check_dim(self.pull.len(), loss.dim())?;
        let m = loss.curvature();
        self.total_m += m;
        for (p, c) in self.pull.iter_mut().zip(loss.center()) {
            *p += m * c;
        }
        if let Some(w) = loss.slope() {
            self.pull.iter_mut().zip(w).for_each(|(p, wi)| *p -= wi);
        }
        self.offset += 0.5 * m * norm_sq(loss.center());
        self.count += 1;
        Ok(())
    }

    pub fn from_losses(losses: &[LossFunction]) -> Result<Self> {
        let first = losses.first().ok_or_else(|| Error::param("empty loss sequence"))?;
        let mut acc = Self::new(first.dim());
        for l in losses {
            acc.push(l)?;
        }
        Ok(acc)
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.total_m * norm_sq(x) - dot(&self.pull, x) + self.offset
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.pull).map(|(xi, p)| self.total_m * xi - p).collect()
    }

    pub fn unconstrained_minimizer(&self) -> Vec<f64> {
        self.pull.iter().map(|p| p / self.total_m).collect()
    }

    /// `argmin_{x ∈ K} F(x)`: the unconstrained minimiser if feasible,
    /// otherwise its projection, accepted only after a first-order optimality
    /// check against random points of `K`.
    pub fn minimize_over(&self, body: &ConvexBody, src: &mut RandomSource) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::param("empty loss sequence"));
        }
        let free = self.unconstrained_minimizer();
        if body.contains(&free)? {
            return Ok(free);
        }
        let x = body.project(&free)?;
        let grad = self.gradient(&x);
        let tol = 1e-9 * (1.0 + norm(&grad) * 2.0 * body.outer_radius());
        for _ in 0..COMPARATOR_CHECKS {
            let y = body.sample_uniform(src);
            let slack: f64 = grad.iter().zip(y.iter().zip(&x)).map(|(g, (yi, xi))| g * (yi - xi)).sum();
            if slack < -tol {
                return Err(Error::Solver(format!(
                    "projected minimiser fails first-order optimality (slack {slack:e})"
                )));
            }
        }
        Ok(x)
    }
}

const COMPARATOR_CHECKS: usize = 100;
const COMPARATOR_DOMAIN: u64 = 0xC0_4EA7;

/// Best fixed point in hindsight, `argmin_{x ∈ K} Σ_t ℓ_t(x)`.
pub fn comparator(trace: &Trace) -> Result<Vec<f64>> {
    let body = trace.body()?;
    let mut src =
        RandomSource::for_domain(trace.config.seed, trace.config.stream_id, COMPARATOR_DOMAIN);
    trace.cumulative_loss()?.minimize_over(&body, &mut src)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretBreakdown {
    /// `Σ_t (ℓ_t(x_t + αu_t) + ℓ_t(x_t − αu_t)) / 2`
    pub player_cost: f64,
    /// `Σ_t ℓ_t(x*)`
    pub comparator_cost: f64,
    pub regret: f64,
    /// `Σ_t ‖g_t‖² / (μt)`
    pub weighted_gsum: f64,
}

pub fn regret(trace: &Trace, x_star: &[f64]) -> Result<RegretBreakdown> {
    let body = trace.body()?;
    if !body.contains(x_star)? {
        return Err(Error::param("comparator point lies outside the body"));
    }
    let mu = trace.mu();
    let mut player_cost = 0.0;
    let mut comparator_cost = 0.0;
    let mut weighted_gsum = 0.0;
    for (r, l) in trace.rounds.iter().zip(&trace.losses) {
        player_cost += 0.5 * (r.value_plus + r.value_minus);
        comparator_cost += l.evaluate(x_star)?;
        weighted_gsum += r.g_norm_sq / (mu * r.t as f64);
    }
    Ok(RegretBreakdown { player_cost, comparator_cost, regret: player_cost - comparator_cost, weighted_gsum })
}

/// Per-run aggregates, computed without keeping the trace in memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: RunConfig,
    pub declared_g: f64,
    pub comparator: Vec<f64>,
    pub breakdown: RegretBreakdown,
    /// `max_t ‖g_t‖`
    pub g_max: f64,
    /// `max_t ‖g_t‖ / (d G_t)`; at most 1.
    pub norm_cap_ratio: f64,
    /// Whether every iterate stayed in `(1 − ξ)K` and every query point in `K`.
    pub feasible: bool,
}

/// Streams one run into a [`RunSummary`].
pub fn run_summary(config: &RunConfig) -> Result<RunSummary> {
    let body = config.body()?;
    let resolved = config.resolve()?;
    let (alpha, xi, mu) = resolved.resolved_params()?;
    let d = config.dim as f64;
    let mut cum = CumulativeLoss::new(config.dim);
    let mut player_cost = 0.0;
    let mut weighted_gsum = 0.0;
    let mut g_max: f64 = 0.0;
    let mut ratio: f64 = 0.0;
    let mut feasible = true;
    let mut err = None;
    let (config, declared_g) = run_observed(config, |r, l| {
        player_cost += 0.5 * (r.value_plus + r.value_minus);
        weighted_gsum += r.g_norm_sq / (mu * r.t as f64);
        let gn = r.g_norm_sq.sqrt();
        g_max = g_max.max(gn);
        ratio = ratio.max(gn / (d * l.lipschitz_g));
        feasible &= iterate_is_feasible(&body, xi, alpha, &r.x, &r.u);
        if let Err(e) = cum.push(l) {
            err.get_or_insert(e);
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let mut src = RandomSource::for_domain(config.seed, config.stream_id, COMPARATOR_DOMAIN);
    let x_star = cum.minimize_over(&body, &mut src)?;
    let comparator_cost = cum.value(&x_star);
    Ok(RunSummary {
        config,
        declared_g,
        comparator: x_star,
        breakdown: RegretBreakdown {
            player_cost,
            comparator_cost,
            regret: player_cost - comparator_cost,
            weighted_gsum,
        },
        g_max,
        norm_cap_ratio: ratio,
        feasible,
    })
}

pub(crate) fn iterate_is_feasible(body: &ConvexBody, xi: f64, alpha: f64, x: &[f64], u: &[f64]) -> bool {
    let plus: Vec<f64> = x.iter().zip(u).map(|(a, b)| a + alpha * b).collect();
    let minus: Vec<f64> = x.iter().zip(u).map(|(a, b)| a - alpha * b).collect();
    body.contains_scaled(1.0 - xi, x).unwrap_or(false)
        && body.contains(&plus).unwrap_or(false)
        && body.contains(&minus).unwrap_or(false)
}

/// `Σ_t ‖x_t − x‖²` over a trace.
pub fn sum_sq_distance(trace: &Trace, x: &[f64]) -> f64 {
    trace.rounds.iter().map(|r| dist_sq(&r.x, x)).sum()
}
