//! Monte-Carlo checks of the probabilistic ingredients behind the
//! high-probability regret bound.
//!
//! None of the absolute constants in the bounds have known values, so the
//! checks either test inequalities whose constants are explicit (the
//! Freedman supermartingale, the Z-sum event, the norm caps) or fit envelope
//! constants and scaling exponents over parameter sweeps.
//!
//! All runs use `stream_id = run index`; every check is reproducible from
//! its seed and parallel over runs.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{comparator, run, run_summary, RunConfig, RunSummary, StepSchedule, Trace};
use crate::error::{Error, Result};
use crate::estimator::two_point_gradient;
use crate::geometry::ConvexBody;
use crate::losses::LossFunction;
use crate::sampling::RandomSource;
use crate::stats::{log_log_fit, ols, quantile_nearest_rank, LinearFit, MeanEstimate, Proportion};
use crate::vecops::{dot, norm_sq, scale, sub};

/// Outcome of a multi-run concentration study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub check: String,
    pub n_runs: usize,
    pub delta: f64,
    /// Nearest-rank `(1 − δ)`-quantile of the studied statistic.
    pub empirical_quantile: f64,
    /// The bound evaluated with unit (or explicit) constants.
    pub bound_value: f64,
    /// Fraction of runs whose statistic exceeded its bound.
    pub violation_rate: f64,
    pub violation: Proportion,
    pub scaling_fits: BTreeMap<String, LinearFit>,
    pub metrics: BTreeMap<String, f64>,
    /// Raw per-run statistic for the single-configuration checks.
    pub samples: Vec<f64>,
    /// Per-run bound when it differs between runs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bounds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<SweepPoint>,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ConcentrationReport {
    fn new(check: &str, n_runs: usize, delta: f64) -> Self {
        Self {
            check: check.to_string(),
            n_runs,
            delta,
            empirical_quantile: f64::NAN,
            bound_value: f64::NAN,
            violation_rate: 0.0,
            violation: Proportion::new(0, n_runs),
            scaling_fits: BTreeMap::new(),
            metrics: BTreeMap::new(),
            samples: Vec::new(),
            bounds: Vec::new(),
            points: Vec::new(),
            passed: false,
            notes: Vec::new(),
        }
    }

    /// One-line human summary.
    pub fn headline(&self) -> String {
        format!(
            "{} {}: quantile={:.6} bound={:.6} violation_rate={:.4} CI=[{:.4}, {:.4}] (n={}, delta={})",
            if self.passed { "PASS" } else { "FAIL" },
            self.check,
            self.empirical_quantile,
            self.bound_value,
            self.violation_rate,
            self.violation.lower,
            self.violation.upper,
            self.n_runs,
            self.delta
        )
    }
}

/// Quantile of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub dim: usize,
    pub horizon: usize,
    pub schedule: StepSchedule,
    pub quantile: f64,
    /// Denominator of the fitted constant at this point.
    pub envelope: f64,
    /// Largest `‖g_t‖ / (d G_t)` over every round of every run; at most 1.
    pub max_norm_cap_ratio: f64,
    /// Runs with an iterate outside `(1 − ξ)K` or a query outside `K`.
    pub infeasible_runs: usize,
    pub samples: Vec<f64>,
}

fn ln_inv(delta: f64) -> f64 {
    (1.0 / delta).ln()
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("delta must lie in (0, 1), got {delta}")))
    }
}

/// Runs `n_runs` games with `stream_id = 0..n_runs` in parallel; results are
/// in run order.
pub fn run_many(base: &RunConfig, n_runs: usize) -> Result<Vec<Trace>> {
    (0..n_runs)
        .into_par_iter()
        .map(|i| run(&base.clone().with_seed(base.seed, i as u64)))
        .collect()
}

/// Streaming variant of [`run_many`].
pub fn summarize_many(base: &RunConfig, n_runs: usize) -> Result<Vec<RunSummary>> {
    (0..n_runs)
        .into_par_iter()
        .map(|i| run_summary(&base.clone().with_seed(base.seed, i as u64)))
        .collect()
}

// ---------------------------------------------------------------------------
// Z_t = ⟨∇ℓ̂_t(x_t) − g_t, x_t − x⟩

/// One round's martingale difference and its exact conditional variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleStep {
    pub z: f64,
    pub cond_var: f64,
    /// `‖x_t − x‖²`
    pub dist_sq: f64,
}

/// `E[⟨g, y⟩² | x_t] − ⟨a, y⟩²` for `g = d⟨a, u⟩u`:
/// `d(‖a‖²‖y‖² + 2⟨a, y⟩²)/(d + 2) − ⟨a, y⟩²`.
pub fn conditional_variance(grad: &[f64], y: &[f64]) -> f64 {
    let d = grad.len() as f64;
    let ay = dot(grad, y);
    (d * (norm_sq(grad) * norm_sq(y) + 2.0 * ay * ay) / (d + 2.0) - ay * ay).max(0.0)
}

/// The difference sequence of a trace against comparator point `x`.
pub fn martingale_steps(trace: &Trace, x: &[f64]) -> Result<Vec<MartingaleStep>> {
    trace
        .rounds
        .iter()
        .zip(&trace.losses)
        .map(|(r, l)| {
            let grad = l.smoothed_gradient(&r.x)?;
            let y = sub(&r.x, x);
            let diff = sub(&grad, &r.g);
            Ok(MartingaleStep { z: dot(&diff, &y), cond_var: conditional_variance(&grad, &y), dist_sq: norm_sq(&y) })
        })
        .collect()
}

/// The shrunk comparator `(1 − ξ)x*`.
pub fn shrunk_comparator(trace: &Trace) -> Result<Vec<f64>> {
    Ok(scale(&comparator(trace)?, 1.0 - trace.xi()))
}

/// `b = 2(d + 1) G D`, the almost-sure bound on `|Z_t|`.
pub fn difference_bound(config: &RunConfig) -> Result<f64> {
    let body = config.body()?;
    Ok(2.0 * (config.dim as f64 + 1.0) * config.declared_g()? * body.outer_radius())
}

fn same_config(traces: &[Trace]) -> Result<()> {
    let first = traces.first().ok_or_else(|| Error::InsufficientData("no traces".into()))?;
    let strip = |c: &RunConfig| RunConfig { stream_id: 0, ..c.clone() };
    let reference = strip(&first.config);
    if traces.iter().any(|t| strip(&t.config) != reference) {
        return Err(Error::param("traces do not share a config"));
    }
    Ok(())
}

/// Frequency of the Z-sum event
/// `Σ Z_t > (μ/4)Σ‖x_t − x‖² + (4dG²/μ) ln(1/δ) + 2(d + 1)GD ln(1/δ)`
/// at the shrunk comparator, plus the per-round cap `|Z_t| ≤ 2(d + 1)GD`.
pub fn check_z_sum(traces: &[Trace], delta: f64) -> Result<ConcentrationReport> {
    check_delta(delta)?;
    same_config(traces)?;
    let cfg = &traces[0].config;
    let body: ConvexBody = cfg.body()?;
    let d = cfg.dim as f64;
    let g = traces[0].declared_g;
    let mu = traces[0].mu();
    let d_outer = body.outer_radius();
    let b = 2.0 * (d + 1.0) * g * d_outer;
    let fixed_part = (4.0 * d * g * g / mu) * ln_inv(delta) + b * ln_inv(delta);

    let per_run: Vec<(f64, f64, f64, usize)> = traces
        .par_iter()
        .map(|trace| {
            let x = shrunk_comparator(trace)?;
            let steps = martingale_steps(trace, &x)?;
            let sum: f64 = steps.iter().map(|s| s.z).sum();
            let dist: f64 = steps.iter().map(|s| s.dist_sq).sum();
            let max_abs = steps.iter().map(|s| s.z.abs()).fold(0.0, f64::max);
            let over = steps.iter().filter(|s| s.z.abs() > b).count();
            Ok((sum, 0.25 * mu * dist + fixed_part, max_abs, over))
        })
        .collect::<Result<_>>()?;

    let n = per_run.len();
    let violations = per_run.iter().filter(|(s, bound, _, _)| s > bound).count();
    let cap_exceptions: usize = per_run.iter().map(|r| r.3).sum();
    let max_abs_z = per_run.iter().map(|r| r.2).fold(0.0, f64::max);

    let mut rep = ConcentrationReport::new("zsum", n, delta);
    rep.samples = per_run.iter().map(|r| r.0).collect();
    rep.bounds = per_run.iter().map(|r| r.1).collect();
    rep.empirical_quantile = quantile_nearest_rank(&rep.samples, 1.0 - delta)?;
    rep.bound_value = quantile_nearest_rank(&rep.bounds, 0.5)?;
    rep.violation = Proportion::new(violations, n);
    rep.violation_rate = rep.violation.rate;
    rep.metrics.insert("b".into(), b);
    rep.metrics.insert("max_abs_z".into(), max_abs_z);
    rep.metrics.insert("cap_exceptions".into(), cap_exceptions as f64);
    rep.passed = rep.violation.consistent_with_at_most(delta) && cap_exceptions == 0;
    rep.notes.push("bound_value is the median of the per-run bounds".into());
    Ok(rep)
}

/// Cross-run mean of `Z_t` at every round `t`, each with its standard error.
pub fn z_round_means(traces: &[Trace]) -> Result<Vec<MeanEstimate>> {
    same_config(traces)?;
    let steps: Vec<Vec<MartingaleStep>> = traces
        .par_iter()
        .map(|t| martingale_steps(t, &shrunk_comparator(t)?))
        .collect::<Result<_>>()?;
    let horizon = steps[0].len();
    Ok((0..horizon)
        .map(|t| MeanEstimate::of(&steps.iter().map(|s| s[t].z).collect::<Vec<_>>()))
        .collect())
}

// ---------------------------------------------------------------------------
// Freedman-style supermartingale

/// Source of martingale differences for [`check_supermartingale`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DifferenceModel {
    /// `Z_t ≡ 0`.
    Zero,
    /// `Z_t` uniform on `[−a, a]`; conditional variance `a²/3`.
    CenteredUniform { half_width: f64 },
    /// `Z_t = ±a` with probability 1/2 each; conditional variance `a²`.
    TwoPoint { magnitude: f64 },
    /// `Z_t` from engine runs of this config, measured against the shrunk
    /// comparator, with the exact conditional variance.
    Trace { config: RunConfig },
}

impl DifferenceModel {
    fn name(&self) -> &'static str {
        match self {
            DifferenceModel::Zero => "zero",
            DifferenceModel::CenteredUniform { .. } => "centered_uniform",
            DifferenceModel::TwoPoint { .. } => "two_point",
            DifferenceModel::Trace { .. } => "trace",
        }
    }

    /// Almost-sure upper bound on `Z_t`.
    pub fn upper_bound(&self) -> Result<f64> {
        Ok(match self {
            DifferenceModel::Zero => 0.0,
            DifferenceModel::CenteredUniform { half_width } => *half_width,
            DifferenceModel::TwoPoint { magnitude } => *magnitude,
            DifferenceModel::Trace { config } => difference_bound(config)?,
        })
    }

    /// `(Σ Z_t, V_T)` for one path.
    fn path(&self, horizon: usize, seed: u64, path: u64) -> Result<(f64, f64)> {
        let mut src = RandomSource::new(seed, path);
        Ok(match self {
            DifferenceModel::Zero => (0.0, 0.0),
            DifferenceModel::CenteredUniform { half_width: a } => {
                let s = (0..horizon).map(|_| a * (2.0 * src.uniform() - 1.0)).sum();
                (s, horizon as f64 * a * a / 3.0)
            }
            DifferenceModel::TwoPoint { magnitude: a } => {
                let s = (0..horizon).map(|_| if src.coin() { *a } else { -a }).sum();
                (s, horizon as f64 * a * a)
            }
            DifferenceModel::Trace { config } => {
                let c = RunConfig { horizon, ..config.clone() }.with_seed(config.seed ^ seed, path);
                let trace = run(&c)?;
                let steps = martingale_steps(&trace, &shrunk_comparator(&trace)?)?;
                (steps.iter().map(|s| s.z).sum(), steps.iter().map(|s| s.cond_var).sum())
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleReport {
    pub model: String,
    pub b: f64,
    pub lambda: f64,
    pub horizon: usize,
    pub n_paths: usize,
    pub delta: f64,
    /// Monte-Carlo mean of `M_T(λ)`; the property is `E M_T ≤ 1`.
    pub mean_m: MeanEstimate,
    /// Fraction of paths with `Σ Z_t > λ V_T/(2(1 − λb/3)) + ln(1/δ)/λ`.
    pub tail: Proportion,
    pub passed: bool,
    pub m_samples: Vec<f64>,
}

impl SupermartingaleReport {
    pub fn headline(&self) -> String {
        format!(
            "{} supermartingale[{}]: lambda={:.4e} mean(M_T)={:.6} se={:.2e} tail_rate={:.4} (delta={}, n={})",
            if self.passed { "PASS" } else { "FAIL" },
            self.model,
            self.lambda,
            self.mean_m.mean,
            self.mean_m.stderr,
            self.tail.rate,
            self.delta,
            self.n_paths
        )
    }
}

/// Simulates `M_T(λ) = exp(λ Σ Z_s − λ² V_T / (2(1 − λb/3)))` over `n_paths`
/// independent paths and checks `mean(M_T) ≤ 1 + 3 s.e.`.
#[allow(clippy::too_many_arguments)]
pub fn check_supermartingale(
    b: f64,
    lambda: f64,
    n_paths: usize,
    horizon: usize,
    model: &DifferenceModel,
    src: &RandomSource,
    delta: f64,
) -> Result<SupermartingaleReport> {
    check_delta(delta)?;
    if b.is_nan() || b <= 0.0 {
        return Err(Error::param(format!("b must be positive, got {b}")));
    }
    if !(lambda >= 0.0 && lambda < 3.0 / b) {
        return Err(Error::param(format!("lambda must lie in [0, 3/b) = [0, {}), got {lambda}", 3.0 / b)));
    }
    if model.upper_bound()? > b {
        return Err(Error::param("difference model exceeds the supplied bound b"));
    }
    if n_paths < 2 {
        return Err(Error::InsufficientData("need at least 2 paths".into()));
    }
    let penalty = if lambda == 0.0 { 0.0 } else { lambda * lambda / (2.0 * (1.0 - lambda * b / 3.0)) };
    let seed = src.seed();
    let paths: Vec<(f64, f64)> = (0..n_paths)
        .into_par_iter()
        .map(|i| model.path(horizon, seed, i as u64))
        .collect::<Result<_>>()?;
    let m_samples: Vec<f64> = paths.iter().map(|(s, v)| (lambda * s - penalty * v).exp()).collect();
    let exceed = if lambda == 0.0 {
        0
    } else {
        let slope = lambda / (2.0 * (1.0 - lambda * b / 3.0));
        paths.iter().filter(|(s, v)| *s > slope * v + ln_inv(delta) / lambda).count()
    };
    let mean_m = MeanEstimate::of(&m_samples);
    let tail = Proportion::new(exceed, n_paths);
    Ok(SupermartingaleReport {
        model: model.name().into(),
        b,
        lambda,
        horizon,
        n_paths,
        delta,
        passed: mean_m.mean <= 1.0 + 3.0 * mean_m.stderr + 1e-12 && tail.consistent_with_at_most(delta),
        mean_m,
        tail,
        m_samples,
    })
}

// ---------------------------------------------------------------------------
// Σ ‖g_t‖² / (μt)

/// Deterministic cap `Σ_t d²G²/(μt)`.
fn gsum_cap(dim: usize, g: f64, mu: f64, horizon: usize) -> f64 {
    let d = dim as f64;
    (1..=horizon).map(|t| d * d * g * g / (mu * t as f64)).sum()
}

/// `d G² (ln T + ln(1/δ)) / μ`
pub fn gsum_envelope(dim: usize, g: f64, mu: f64, horizon: usize, delta: f64) -> f64 {
    dim as f64 * g * g * ((horizon as f64).ln() + ln_inv(delta)) / mu
}

/// Quantile of `S = Σ ‖g_t‖²/(μt)` for traces of one config, with the
/// fitted constant `K̂ = quantile / (dG²(ln T + ln 1/δ)/μ)`.
pub fn check_gsum(traces: &[Trace], delta: f64) -> Result<ConcentrationReport> {
    check_delta(delta)?;
    same_config(traces)?;
    let samples: Vec<f64> = traces
        .iter()
        .map(|t| {
            let mu = t.mu();
            t.rounds.iter().map(|r| r.g_norm_sq / (mu * r.t as f64)).sum()
        })
        .collect();
    let t0 = &traces[0];
    gsum_report(t0.config.dim, t0.rounds.len(), t0.declared_g, t0.mu(), samples, delta)
}

fn gsum_report(
    dim: usize,
    horizon: usize,
    g: f64,
    mu: f64,
    samples: Vec<f64>,
    delta: f64,
) -> Result<ConcentrationReport> {
    let n = samples.len();
    let mut rep = ConcentrationReport::new("gsum", n, delta);
    let envelope = gsum_envelope(dim, g, mu, horizon, delta);
    let cap = gsum_cap(dim, g, mu, horizon);
    rep.empirical_quantile = quantile_nearest_rank(&samples, 1.0 - delta)?;
    rep.bound_value = envelope;
    let over = samples.iter().filter(|s| **s > envelope).count();
    rep.violation = Proportion::new(over, n);
    rep.violation_rate = rep.violation.rate;
    rep.metrics.insert("fitted_k".into(), rep.empirical_quantile / envelope);
    rep.metrics.insert("deterministic_cap".into(), cap);
    rep.passed = samples.iter().all(|s| *s <= cap * (1.0 + 1e-12));
    rep.notes.push("bound_value uses K = 1; the constant is fitted, not asserted".into());
    rep.samples = samples;
    Ok(rep)
}

/// Parameter grid for the sweep studies. The `dims` sweep runs at
/// `base.horizon`, the `horizons` sweep at `base.dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSweep {
    pub base: RunConfig,
    pub dims: Vec<usize>,
    pub horizons: Vec<usize>,
    /// Extra step schedules evaluated at the base point (observational).
    #[serde(default)]
    pub ablation_schedules: Vec<StepSchedule>,
}

/// Pass thresholds for the sweep studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingCriteria {
    /// Accept `|slope_d − target| ≤ tol` (`gsum`) or `slope_d ≤ max` (`regret`).
    pub slope_d_target: f64,
    pub slope_d_tol: f64,
    pub slope_d_max: f64,
    /// Minimum R² of quantile vs ln T.
    pub min_r2_log_t: f64,
}

impl ScalingCriteria {
    pub const GSUM: ScalingCriteria =
        ScalingCriteria { slope_d_target: 1.0, slope_d_tol: 0.2, slope_d_max: f64::INFINITY, min_r2_log_t: 0.95 };
    pub const REGRET: ScalingCriteria =
        ScalingCriteria { slope_d_target: 1.0, slope_d_tol: f64::INFINITY, slope_d_max: 1.3, min_r2_log_t: 0.9 };
}

fn point_config(base: &RunConfig, dim: usize, horizon: usize, schedule: StepSchedule) -> Result<RunConfig> {
    Ok(RunConfig { horizon, step_schedule: schedule, ..base.with_dim(dim)? })
}

/// `(dim, horizon, schedule)` of one sweep point.
type PointKey = (usize, usize, StepSchedule);

fn sweep_points(sweep: &ConfigSweep) -> Result<(Vec<PointKey>, usize, usize)> {
    if sweep.dims.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "a slope fit over d needs at least 3 sweep points, got {}",
            sweep.dims.len()
        )));
    }
    if sweep.horizons.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "a fit over ln T needs at least 3 sweep points, got {}",
            sweep.horizons.len()
        )));
    }
    let s = sweep.base.step_schedule;
    let mut pts: Vec<PointKey> =
        sweep.dims.iter().map(|&d| (d, sweep.base.horizon, s)).collect();
    let n_dims = pts.len();
    pts.extend(sweep.horizons.iter().map(|&t| (sweep.base.dim, t, s)));
    let n_core = pts.len();
    pts.extend(sweep.ablation_schedules.iter().filter(|a| **a != s).map(|&a| (sweep.base.dim, sweep.base.horizon, a)));
    Ok((pts, n_dims, n_core))
}

/// Which per-run statistic a sweep collects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SweepStatistic {
    Gsum,
    Regret,
}

fn collect_sweep(
    sweep: &ConfigSweep,
    n_runs: usize,
    delta: f64,
    stat: SweepStatistic,
) -> Result<(Vec<SweepPoint>, usize, usize)> {
    let (pts, n_dims, n_core) = sweep_points(sweep)?;
    let mut out = Vec::with_capacity(pts.len());
    for (dim, horizon, schedule) in pts {
        let cfg = point_config(&sweep.base, dim, horizon, schedule)?;
        let summaries = summarize_many(&cfg, n_runs)?;
        let s0 = &summaries[0];
        let (_, _, mu) = s0.config.resolved_params()?;
        let g = s0.declared_g;
        let body = cfg.body()?;
        let samples: Vec<f64> = summaries
            .iter()
            .map(|s| match stat {
                SweepStatistic::Gsum => s.breakdown.weighted_gsum,
                SweepStatistic::Regret => s.breakdown.regret,
            })
            .collect();
        let envelope = match stat {
            SweepStatistic::Gsum => gsum_envelope(dim, g, mu, horizon, delta),
            SweepStatistic::Regret => regret_envelope(dim, g, mu, horizon, delta, &body),
        };
        out.push(SweepPoint {
            dim,
            horizon,
            schedule,
            quantile: quantile_nearest_rank(&samples, 1.0 - delta)?,
            envelope,
            max_norm_cap_ratio: summaries.iter().map(|s| s.norm_cap_ratio).fold(0.0, f64::max),
            infeasible_runs: summaries.iter().filter(|s| !s.feasible).count(),
            samples,
        });
    }
    Ok((out, n_dims, n_core))
}

fn fit_sweep(
    rep: &mut ConcentrationReport,
    points: &[SweepPoint],
    n_dims: usize,
    n_core: usize,
    crit: ScalingCriteria,
) -> Result<()> {
    let by_d = &points[..n_dims];
    let by_t = &points[n_dims..n_core];
    let d: Vec<f64> = by_d.iter().map(|p| p.dim as f64).collect();
    let qd: Vec<f64> = by_d.iter().map(|p| p.quantile).collect();
    let ln_t: Vec<f64> = by_t.iter().map(|p| (p.horizon as f64).ln()).collect();
    let qt: Vec<f64> = by_t.iter().map(|p| p.quantile).collect();

    let slope_d = if qd.iter().all(|q| *q > 0.0) {
        let f = log_log_fit(&d, &qd)?;
        rep.scaling_fits.insert("d".into(), f);
        Some(f.slope)
    } else {
        rep.notes.push("non-positive quantile in the d sweep; no log-log fit".into());
        None
    };
    let lin_t = ols(&ln_t, &qt)?;
    rep.scaling_fits.insert("ln_t_linear".into(), lin_t);
    if qt.iter().all(|q| *q > 0.0) {
        let ll: Vec<f64> = ln_t.clone();
        rep.scaling_fits.insert("ln_t".into(), log_log_fit(&ll, &qt)?);
    }
    let fitted = points[..n_core].iter().map(|p| p.quantile / p.envelope).fold(f64::NEG_INFINITY, f64::max);
    rep.metrics.insert("fitted_constant".into(), fitted);
    rep.metrics.insert("r2_ln_t".into(), lin_t.r_squared);
    if let Some(s) = slope_d {
        rep.metrics.insert("slope_d".into(), s);
    }
    for p in &points[n_core..] {
        rep.metrics.insert(format!("ablation_quantile_{}", p.schedule.name()), p.quantile);
    }
    if n_core < points.len() {
        let base = points[..n_core]
            .iter()
            .find(|p| p.dim == by_t[0].dim && p.horizon == by_d[0].horizon)
            .map(|p| p.quantile);
        if let Some(q) = base {
            rep.metrics.insert(format!("ablation_quantile_{}", points[0].schedule.name()), q);
        }
    }
    rep.passed = match slope_d {
        Some(s) => {
            (s - crit.slope_d_target).abs() <= crit.slope_d_tol
                && s <= crit.slope_d_max
                && lin_t.r_squared >= crit.min_r2_log_t
        }
        None => false,
    };
    rep.empirical_quantile = points[0].quantile;
    rep.bound_value = points[0].envelope;
    Ok(())
}

/// Sweep study of `S = Σ ‖g_t‖²/(μt)`: log-log slope of the `(1 − δ)`-quantile
/// against `d`, linearity in `ln T`, and the fitted constant.
pub fn gsum_study(sweep: &ConfigSweep, n_runs: usize, delta: f64, crit: ScalingCriteria) -> Result<ConcentrationReport> {
    check_delta(delta)?;
    if n_runs == 0 {
        return Err(Error::InsufficientData("n_runs must be positive".into()));
    }
    let (points, n_dims, n_core) = collect_sweep(sweep, n_runs, delta, SweepStatistic::Gsum)?;
    let mut rep = ConcentrationReport::new("gsum", n_runs, delta);
    fit_sweep(&mut rep, &points, n_dims, n_core, crit)?;
    let mut over = 0;
    let mut total = 0;
    for p in &points[..n_core] {
        over += p.samples.iter().filter(|s| **s > p.envelope).count();
        total += p.samples.len();
    }
    rep.violation = Proportion::new(over, total);
    rep.violation_rate = rep.violation.rate;
    rep.points = points;
    rep.notes.push("violations are counted against the K = 1 envelope (informational)".into());
    Ok(rep)
}

/// Three-term envelope `dG²(ln T + ln 1/δ)/μ + 2(d+1)GD ln(1/δ) + G ln T (3 + D/r)`.
pub fn regret_envelope(dim: usize, g: f64, mu: f64, horizon: usize, delta: f64, body: &ConvexBody) -> f64 {
    let d = dim as f64;
    let ln_t = (horizon as f64).ln();
    let (d_outer, r) = (body.outer_radius(), body.inner_radius());
    gsum_envelope(dim, g, mu, horizon, delta) + 2.0 * (d + 1.0) * g * d_outer * ln_inv(delta) + g * ln_t * (3.0 + d_outer / r)
}

/// Minimum number of runs for a `(1 − δ)`-quantile study.
pub fn min_runs(delta: f64) -> usize {
    (50.0 / delta).ceil() as usize
}

/// End-to-end high-probability regret study over a config sweep.
pub fn check_regret_highprob(
    sweep: &ConfigSweep,
    n_runs: usize,
    delta: f64,
    crit: ScalingCriteria,
) -> Result<ConcentrationReport> {
    check_delta(delta)?;
    if n_runs < min_runs(delta) {
        return Err(Error::InsufficientData(format!(
            "n_runs = {n_runs} is below 50/delta = {}",
            min_runs(delta)
        )));
    }
    let (points, n_dims, n_core) = collect_sweep(sweep, n_runs, delta, SweepStatistic::Regret)?;
    let mut rep = ConcentrationReport::new("regret", n_runs, delta);
    fit_sweep(&mut rep, &points, n_dims, n_core, crit)?;
    let mut over = 0;
    let mut total = 0;
    let mut min_median = f64::INFINITY;
    for p in &points[..n_core] {
        over += p.samples.iter().filter(|s| **s > p.envelope).count();
        total += p.samples.len();
        min_median = min_median.min(quantile_nearest_rank(&p.samples, 0.5)?);
    }
    rep.metrics.insert("min_median_regret".into(), min_median);
    rep.violation = Proportion::new(over, total);
    rep.violation_rate = rep.violation.rate;
    if matches!(sweep.base.adversary, crate::losses::AdversarySpec::Fixed { .. }) {
        rep.passed &= min_median >= 0.0;
    }
    rep.points = points;
    rep.notes.push("violations are counted against the envelope with K = 1 (informational)".into());
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Estimator moments and sphere concentration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientMoments {
    pub dim: usize,
    pub n: usize,
    /// Per-coordinate mean of `g`.
    pub mean: Vec<MeanEstimate>,
    /// `E‖g‖²`
    pub second_moment: MeanEstimate,
    /// Closed-form smoothed gradient at `x`.
    pub target: Vec<f64>,
    /// `max ‖g‖ / (dG)` over all draws.
    pub max_norm_ratio: f64,
}

impl GradientMoments {
    /// Largest `|mean_i − target_i| / se_i`.
    pub fn max_z_score(&self) -> f64 {
        self.mean
            .iter()
            .zip(&self.target)
            .map(|(m, t)| if m.stderr > 0.0 { (m.mean - t).abs() / m.stderr } else if m.mean == *t { 0.0 } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}

/// Moments of the two-point estimator at a fixed point over `n` directions.
pub fn gradient_moments(
    loss: &LossFunction,
    body: &ConvexBody,
    x: &[f64],
    alpha: f64,
    n: usize,
    src: &mut RandomSource,
) -> Result<GradientMoments> {
    let d = body.dim();
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    let mut norms = Vec::with_capacity(n);
    let mut max_ratio: f64 = 0.0;
    let mut u = vec![0.0; d];
    let cap = d as f64 * loss.lipschitz_g;
    for _ in 0..n {
        src.fill_sphere(&mut u);
        let q = two_point_gradient(loss, body, x, &u, alpha)?;
        for i in 0..d {
            sum[i] += q.g[i];
            sum_sq[i] += q.g[i] * q.g[i];
        }
        let ns = q.g_norm_sq();
        max_ratio = max_ratio.max(ns.sqrt() / cap);
        norms.push(ns);
    }
    let nf = n as f64;
    let mean = (0..d)
        .map(|i| {
            let m = sum[i] / nf;
            let var = (sum_sq[i] / nf - m * m).max(0.0) * nf / (nf - 1.0);
            MeanEstimate { mean: m, stderr: (var / nf).sqrt(), n }
        })
        .collect();
    Ok(GradientMoments {
        dim: d,
        n,
        mean,
        second_moment: MeanEstimate::of(&norms),
        target: loss.smoothed_gradient(x)?,
        max_norm_ratio: max_ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereDimResult {
    pub dim: usize,
    pub mean: f64,
    pub variance: f64,
    /// `variance · d / L²`; 1 in theory.
    pub variance_ratio: f64,
    /// `(τ, Pr(|h − mean| ≥ τ))`
    pub tails: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereReport {
    pub lipschitz: f64,
    pub n_samples: usize,
    pub dims: Vec<SphereDimResult>,
    /// Largest `c` with `freq ≤ 2 exp(−c d τ²/L²)` at every grid point.
    pub fitted_c1: f64,
    /// OLS of `ln(freq/2)` on `dτ²/L²`.
    pub rate_fit: Option<LinearFit>,
    pub min_c1: f64,
    pub variance_tol: f64,
    pub passed: bool,
}

impl SphereReport {
    pub fn headline(&self) -> String {
        let worst = self.dims.iter().map(|d| (d.variance_ratio - 1.0).abs()).fold(0.0, f64::max);
        format!(
            "{} sphere: fitted_c1={:.4} (need >= {}), worst |var*d/L^2 - 1|={:.4} (tol {})",
            if self.passed { "PASS" } else { "FAIL" },
            self.fitted_c1,
            self.min_c1,
            worst,
            self.variance_tol
        )
    }
}

pub const DEFAULT_TAU_GRID: [f64; 9] = [0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8];

/// Tail frequencies of `h(u) = L u_1` for `u` uniform on `S^{d−1}` and the
/// fitted exponential rate in `d τ² / L²`. `tau_grid` is in units of `L`.
pub fn check_sphere_concentration(
    d_sweep: &[usize],
    lipschitz: f64,
    n_samples: usize,
    tau_grid: &[f64],
    src: &RandomSource,
) -> Result<SphereReport> {
    if d_sweep.is_empty() || tau_grid.is_empty() {
        return Err(Error::param("sphere check needs a non-empty dimension sweep and tau grid"));
    }
    if n_samples < 100_000 {
        return Err(Error::param(format!("sphere check needs at least 1e5 samples, got {n_samples}")));
    }
    if lipschitz.is_nan() || lipschitz <= 0.0 {
        return Err(Error::param("Lipschitz constant must be positive"));
    }
    let seed = src.seed();
    let dims: Vec<SphereDimResult> = d_sweep
        .par_iter()
        .map(|&d| {
            let mut s = RandomSource::new(seed, d as u64);
            let mut u = vec![0.0; d];
            let h: Vec<f64> = (0..n_samples)
                .map(|_| {
                    s.fill_sphere(&mut u);
                    lipschitz * u[0]
                })
                .collect();
            let m = MeanEstimate::of(&h);
            let variance = m.stderr * m.stderr * n_samples as f64;
            let tails = tau_grid
                .iter()
                .map(|&tau| {
                    let thr = tau * lipschitz;
                    let c = h.iter().filter(|v| (*v - m.mean).abs() >= thr).count();
                    (thr, c as f64 / n_samples as f64)
                })
                .collect();
            SphereDimResult { dim: d, mean: m.mean, variance, variance_ratio: variance * d as f64 / (lipschitz * lipschitz), tails }
        })
        .collect();

    let mut fitted_c1 = f64::INFINITY;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for r in &dims {
        for &(tau, freq) in &r.tails {
            if tau > 0.0 && freq > 0.0 {
                let scale = r.dim as f64 * tau * tau / (lipschitz * lipschitz);
                fitted_c1 = fitted_c1.min((2.0 / freq).ln() / scale);
                xs.push(scale);
                ys.push((freq / 2.0).ln());
            }
        }
    }
    let rate_fit = ols(&xs, &ys).ok();
    let min_c1 = 0.3;
    let variance_tol = 0.05;
    let passed = fitted_c1.is_finite()
        && fitted_c1 >= min_c1
        && dims.iter().all(|d| (d.variance_ratio - 1.0).abs() <= variance_tol);
    Ok(SphereReport { lipschitz, n_samples, dims, fitted_c1, rate_fit, min_c1, variance_tol, passed })
}
