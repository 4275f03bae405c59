//! Experiment driver behind the `bandit-oco` binary.
//!
//! Three commands:
//! - `run`: every (sweep point × run) of an experiment spec; writes traces
//!   and `summary.csv`.
//! - `conclab <check>`: one of the concentration checks; writes
//!   `conclab_<check>.json` and prints a PASS/FAIL line.
//! - `report [DIR]`: aggregates the summary CSVs of a directory into
//!   `report.md` plus plot-ready CSVs.
//!
//! Exit codes: 0 success, 1 check failed or I/O error, 2 config error,
//! 3 runtime feasibility error, 4 insufficient data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::conclab::{self, ConfigSweep, DifferenceModel, ScalingCriteria};
use crate::engine::{comparator, regret, run, run_summary, RunConfig, StepSchedule, Trace};
use crate::error::{Error, Result};
use crate::sampling::RandomSource;
use crate::stats::{log_log_fit, ols, quantile_nearest_rank, LinearFit};
use crate::FORMAT_VERSION;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FEASIBILITY: i32 = 3;
pub const EXIT_INSUFFICIENT: i32 = 4;

/// Recognised sweep keys, in expansion order.
pub const SWEEP_KEYS: [&str; 6] = ["d", "T", "delta", "mu", "step_schedule", "adversary.kind"];

pub const CHECKS: [&str; 5] = ["supermartingale", "zsum", "gsum", "regret", "sphere"];

fn default_n_runs() -> usize {
    1
}

fn default_delta() -> f64 {
    0.05
}

fn default_true() -> bool {
    true
}

fn default_format_version() -> u32 {
    FORMAT_VERSION
}

/// Knobs for `conclab`; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConclabOptions {
    /// Multiples of `3/b` used for λ in the supermartingale check.
    pub lambda_fractions: Vec<f64>,
    pub sphere_dims: Vec<usize>,
    pub sphere_lipschitz: f64,
    pub sphere_samples: usize,
    pub tau_grid: Vec<f64>,
}

impl Default for ConclabOptions {
    fn default() -> Self {
        Self {
            lambda_fractions: vec![0.1, 0.5, 0.9],
            sphere_dims: vec![4, 16, 64],
            sphere_lipschitz: 1.0,
            sphere_samples: 100_000,
            tau_grid: conclab::DEFAULT_TAU_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    pub base: RunConfig,
    #[serde(default)]
    pub sweeps: BTreeMap<String, Vec<Value>>,
    #[serde(default = "default_n_runs")]
    pub n_runs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_true")]
    pub write_traces: bool,
    #[serde(default)]
    pub conclab: ConclabOptions,
}

/// One expanded sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPointSpec {
    pub index: usize,
    pub config: RunConfig,
    pub delta: f64,
}

fn or_base<T>(v: Vec<T>, base: T) -> Vec<T> {
    if v.is_empty() {
        vec![base]
    } else {
        v
    }
}

fn line_of(text: &str, needle: &str) -> Option<usize> {
    text.lines().position(|l| l.contains(needle)).map(|i| i + 1)
}

impl ExperimentSpec {
    /// Parses and validates a spec. Errors carry the line of the offending
    /// input where one can be found.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!("{origin}:{}:{}: {e}", e.line(), e.column()))
        })?;
        let anchor = |needle: &str| -> String {
            match line_of(text, needle) {
                Some(l) => format!("{origin}:{l}"),
                None => origin.to_string(),
            }
        };
        for key in spec.sweeps.keys() {
            if !SWEEP_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "{}: unknown sweep key \"{key}\" (allowed: {})",
                    anchor(&format!("\"{key}\"")),
                    SWEEP_KEYS.join(", ")
                )));
            }
        }
        if spec.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "{}: format_version {} is not supported (expected {FORMAT_VERSION})",
                anchor("\"format_version\""),
                spec.format_version
            )));
        }
        if spec.n_runs == 0 {
            return Err(Error::Config(format!("{}: n_runs must be at least 1", anchor("\"n_runs\""))));
        }
        if !(spec.delta > 0.0 && spec.delta < 1.0) {
            return Err(Error::Config(format!("{}: delta must lie in (0, 1)", anchor("\"delta\""))));
        }
        spec.points().map_err(|e| Error::Config(format!("{}: {e}", anchor("\"sweeps\""))))?;
        spec.base.resolve().map_err(|e| Error::Config(format!("{}: {e}", anchor("\"base\""))))?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: cannot read spec: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn sweep_values(&self, key: &str) -> Vec<Value> {
        self.sweeps.get(key).cloned().unwrap_or_default()
    }

    fn usize_sweep(&self, key: &str) -> Result<Vec<usize>> {
        self.sweep_values(key)
            .iter()
            .map(|v| {
                v.as_u64()
                    .map(|x| x as usize)
                    .ok_or_else(|| Error::Config(format!("sweep \"{key}\" expects non-negative integers, got {v}")))
            })
            .collect()
    }

    fn f64_sweep(&self, key: &str) -> Result<Vec<f64>> {
        self.sweep_values(key)
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| Error::Config(format!("sweep \"{key}\" expects numbers, got {v}"))))
            .collect()
    }

    fn str_sweep(&self, key: &str) -> Result<Vec<String>> {
        self.sweep_values(key)
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| Error::Config(format!("sweep \"{key}\" expects strings, got {v}")))
            })
            .collect()
    }

    /// Cartesian product of the sweeps in [`SWEEP_KEYS`] order, each point
    /// resolved and validated.
    pub fn points(&self) -> Result<Vec<SweepPointSpec>> {
        let dims = or_base(self.usize_sweep("d")?, self.base.dim);
        let horizons = or_base(self.usize_sweep("T")?, self.base.horizon);
        let deltas = or_base(self.f64_sweep("delta")?, self.delta);
        let mus: Vec<Option<f64>> = {
            let v = self.f64_sweep("mu")?;
            if v.is_empty() { vec![self.base.mu] } else { v.into_iter().map(Some).collect() }
        };
        let schedules = {
            let names = self.str_sweep("step_schedule")?;
            if names.is_empty() {
                vec![self.base.step_schedule]
            } else {
                names
                    .iter()
                    .map(|n| {
                        StepSchedule::parse(n).ok_or_else(|| {
                            Error::Config(format!("unknown step_schedule \"{n}\" (expected two_over_mu_t or one_over_mu_t)"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let kinds = or_base(self.str_sweep("adversary.kind")?, self.base.adversary.kind_name().to_string());

        let mut out = Vec::new();
        for &d in &dims {
            for &t in &horizons {
                for &delta in &deltas {
                    if !(delta > 0.0 && delta < 1.0) {
                        return Err(Error::Config(format!("delta must lie in (0, 1), got {delta}")));
                    }
                    for &mu in &mus {
                        for &schedule in &schedules {
                            for kind in &kinds {
                                let mut c = self.base.with_dim(d)?;
                                c.horizon = t;
                                c.mu = mu;
                                c.step_schedule = schedule;
                                let outer = c.body()?.outer_radius();
                                c.adversary = c.adversary.with_kind(kind, outer)?;
                                let config = c.resolve()?;
                                out.push(SweepPointSpec { index: out.len(), config, delta });
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// JSON embedded in output files: the spec after overrides, without the
    /// output directory so that results do not depend on where they live.
    pub fn embedded_json(&self) -> String {
        let mut s = self.clone();
        s.output_dir = None;
        serde_json::to_string(&s).expect("spec serialises")
    }
}

#[derive(Debug, Parser)]
#[command(name = "bandit-oco", version, about = "Two-point bandit OGD experiments and concentration checks")]
pub struct Cli {
    /// Experiment spec (JSON).
    #[arg(long, global = true)]
    pub spec: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Overrides the base seed of the spec.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    pub force: bool,
    /// Overrides the spec's output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every sweep point of the spec.
    Run,
    /// Run one concentration check.
    Conclab {
        /// One of: supermartingale, zsum, gsum, regret, sphere.
        check: String,
    },
    /// Aggregate the summary CSVs of a directory.
    Report {
        /// Directory holding summary CSVs; defaults to --out.
        dir: Option<PathBuf>,
    },
}

/// Options shared by the commands after flag parsing.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub spec: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub force: bool,
    pub out: Option<PathBuf>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Json(_) | Error::Parameter(_) | Error::Dimension { .. } => EXIT_CONFIG,
        Error::Feasibility(_) => EXIT_FEASIBILITY,
        Error::InsufficientData(_) => EXIT_INSUFFICIENT,
        _ => EXIT_FAILED,
    }
}

/// Entry point used by the binary.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let opts = Options { spec: cli.spec, jobs: cli.jobs, seed: cli.seed, force: cli.force, out: cli.out };
    match cli.command {
        Command::Run => cmd_run(&opts),
        Command::Conclab { check } => cmd_conclab(&opts, &check),
        Command::Report { dir } => match dir.or_else(|| opts.out.clone()) {
            Some(d) => cmd_report(&d, opts.force),
            None => {
                eprintln!("error: report needs a directory (positional or --out)");
                EXIT_CONFIG
            }
        },
    }
}

fn report_error(context: &str, e: &Error) -> i32 {
    eprintln!("error: {context}: {e}");
    exit_code(e)
}

fn load_spec(opts: &Options) -> Result<(ExperimentSpec, PathBuf)> {
    let path = opts.spec.as_ref().ok_or_else(|| Error::Config("--spec <path> is required".into()))?;
    let mut spec = ExperimentSpec::load(path)?;
    if let Some(seed) = opts.seed {
        spec.base.seed = seed;
    }
    let out = opts
        .out
        .clone()
        .or_else(|| spec.output_dir.clone())
        .ok_or_else(|| Error::Config("no output directory: set output_dir in the spec or pass --out".into()))?;
    spec.output_dir = Some(out.clone());
    Ok((spec, out))
}

fn with_pool<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::Config("--jobs must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn guard_new_file(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Config(format!("{} exists; pass --force to overwrite", path.display())));
    }
    Ok(())
}

fn print_resolved(points: &[SweepPointSpec]) -> Result<()> {
    for p in points {
        let c = &p.config;
        let (alpha, xi, mu) = c.resolved_params()?;
        eprintln!(
            "point {}: d={} T={} alpha={alpha} xi={xi} mu={mu} G={} schedule={} adversary={} delta={}",
            p.index,
            c.dim,
            c.horizon,
            c.declared_g()?,
            c.step_schedule.name(),
            c.adversary.kind_name(),
            p.delta
        );
    }
    Ok(())
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub d: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub delta: f64,
    pub mu: f64,
    #[serde(rename = "G")]
    pub g: f64,
    pub alpha: f64,
    pub xi: f64,
    pub schedule: String,
    pub adversary: String,
    pub seed: u64,
    pub stream_id: u64,
    pub regret: f64,
    pub gsum_weighted: f64,
    pub gmax: f64,
    pub wall_ms: f64,
}

pub const SUMMARY_FILE: &str = "summary.csv";

fn comment_header(spec_json: &str) -> String {
    format!("# format_version: {FORMAT_VERSION}\n# spec: {spec_json}\n")
}

/// Writes a trace as `<stem>.csv` (one row per round) and `<stem>.json`
/// (resolved config and loss parameters).
pub fn write_trace(trace: &Trace, stem: &Path) -> Result<()> {
    let d = trace.config.dim;
    let mut csv_text = format!(
        "# format_version: {FORMAT_VERSION}\n# config: {}\n",
        serde_json::to_string(&trace.config)?
    );
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((0..d).map(|i| format!("x{i}")));
    header.extend((0..d).map(|i| format!("u{i}")));
    header.extend(["value_plus", "value_minus", "g_norm_sq", "eta_t"].map(String::from));
    wtr.write_record(&header)?;
    for r in &trace.rounds {
        let mut row = vec![r.t.to_string()];
        row.extend(r.x.iter().map(|v| v.to_string()));
        row.extend(r.u.iter().map(|v| v.to_string()));
        row.extend([r.value_plus, r.value_minus, r.g_norm_sq, r.eta].map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    let body = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    csv_text.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
    fs::write(stem.with_extension("csv"), csv_text)?;

    let sidecar = serde_json::json!({
        "format_version": FORMAT_VERSION,
        "config": trace.config,
        "declared_g": trace.declared_g,
        "losses": trace.losses,
    });
    fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Reads a trace back from `<stem>.csv` and `<stem>.json`. The estimator
/// vector `g_t` is rebuilt from the recorded values.
pub fn read_trace(stem: &Path) -> Result<Trace> {
    #[derive(Deserialize)]
    struct Sidecar {
        format_version: u32,
        config: RunConfig,
        declared_g: f64,
        losses: Vec<crate::losses::LossFunction>,
    }
    let side: Sidecar = serde_json::from_str(&fs::read_to_string(stem.with_extension("json"))?)?;
    if side.format_version != FORMAT_VERSION {
        return Err(Error::Config(format!("trace format_version {} unsupported", side.format_version)));
    }
    let d = side.config.dim;
    let alpha = side.config.alpha.ok_or_else(|| Error::Config("trace config is not resolved".into()))?;
    let text = fs::read_to_string(stem.with_extension("csv"))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let mut rounds = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::Config(format!("bad trace field {i}")))
        };
        let t = num(0)? as usize;
        let x = (0..d).map(|i| num(1 + i)).collect::<Result<Vec<_>>>()?;
        let u = (0..d).map(|i| num(1 + d + i)).collect::<Result<Vec<_>>>()?;
        let value_plus = num(1 + 2 * d)?;
        let value_minus = num(2 + 2 * d)?;
        let g_norm_sq = num(3 + 2 * d)?;
        let eta = num(4 + 2 * d)?;
        let coef = d as f64 * (value_plus - value_minus) / (2.0 * alpha);
        let g = u.iter().map(|v| coef * v).collect();
        rounds.push(crate::engine::RoundRecord { t, x, u, value_plus, value_minus, g, g_norm_sq, eta });
    }
    Ok(Trace { config: side.config, declared_g: side.declared_g, rounds, losses: side.losses })
}

fn execute_one(spec: &ExperimentSpec, point: &SweepPointSpec, run_index: usize, traces_dir: &Path) -> Result<SummaryRow> {
    let cfg = point.config.clone().with_seed(point.config.seed, run_index as u64);
    let started = Instant::now();
    let (breakdown, g_max, g) = if spec.write_traces {
        let trace = run(&cfg)?;
        let x_star = comparator(&trace)?;
        let b = regret(&trace, &x_star)?;
        let gmax = trace.rounds.iter().map(|r| r.g_norm_sq.sqrt()).fold(0.0, f64::max);
        write_trace(&trace, &traces_dir.join(format!("p{:03}_r{:04}", point.index, run_index)))?;
        (b, gmax, trace.declared_g)
    } else {
        let s = run_summary(&cfg)?;
        (s.breakdown, s.g_max, s.declared_g)
    };
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    let (alpha, xi, mu) = cfg.resolved_params()?;
    Ok(SummaryRow {
        name: spec.name.clone(),
        d: cfg.dim,
        t: cfg.horizon,
        delta: point.delta,
        mu,
        g,
        alpha,
        xi,
        schedule: cfg.step_schedule.name().to_string(),
        adversary: cfg.adversary.kind_name().to_string(),
        seed: cfg.seed,
        stream_id: cfg.stream_id,
        regret: breakdown.regret,
        gsum_weighted: breakdown.weighted_gsum,
        gmax: g_max,
        wall_ms: (wall_ms * 1000.0).round() / 1000.0,
    })
}

pub fn cmd_run(opts: &Options) -> i32 {
    let (spec, out) = match load_spec(opts) {
        Ok(v) => v,
        Err(e) => return report_error("invalid spec", &e),
    };
    match run_experiment(&spec, &out, opts) {
        Ok(rows) => {
            eprintln!("wrote {} rows to {}", rows.len(), out.join(SUMMARY_FILE).display());
            EXIT_OK
        }
        Err((context, e)) => report_error(&context, &e),
    }
}

/// Executes every `(point, run)` pair and writes the outputs. Errors come
/// back with a context string naming the failing configuration.
pub fn run_experiment(
    spec: &ExperimentSpec,
    out: &Path,
    opts: &Options,
) -> std::result::Result<Vec<SummaryRow>, (String, Error)> {
    let cfg_err = |e: Error| ("invalid spec".to_string(), e);
    let points = spec.points().map_err(cfg_err)?;
    print_resolved(&points).map_err(cfg_err)?;
    let summary_path = out.join(SUMMARY_FILE);
    guard_new_file(&summary_path, opts.force).map_err(|e| ("output collision".to_string(), e))?;
    let traces_dir = out.join("traces");
    let io = |e: std::io::Error| ("cannot create output directory".to_string(), Error::Io(e));
    fs::create_dir_all(out).map_err(io)?;
    if spec.write_traces {
        if !opts.force && traces_dir.exists() && fs::read_dir(&traces_dir).map_err(io)?.next().is_some() {
            return Err((
                "output collision".into(),
                Error::Config(format!("{} is not empty; pass --force to overwrite", traces_dir.display())),
            ));
        }
        fs::create_dir_all(&traces_dir).map_err(io)?;
    }
    let jobs: Vec<(usize, usize)> =
        (0..points.len()).flat_map(|p| (0..spec.n_runs).map(move |r| (p, r))).collect();
    let results = with_pool(opts.jobs, || {
        jobs.par_iter()
            .map(|&(p, r)| {
                execute_one(spec, &points[p], r, &traces_dir).map_err(|e| {
                    let c = &points[p].config;
                    (
                        format!(
                            "point {p} run {r} (d={}, T={}, alpha={:?}, xi={:?}, body={:?})",
                            c.dim, c.horizon, c.alpha, c.xi, c.body
                        ),
                        e,
                    )
                })
            })
            .collect::<std::result::Result<Vec<_>, _>>()
    })
    .map_err(cfg_err)??;

    let mut wtr = csv::Writer::from_writer(Vec::new());
    for row in &results {
        wtr.serialize(row).map_err(|e| ("cannot write summary".to_string(), Error::Csv(e)))?;
    }
    let body = wtr.into_inner().map_err(|e| ("cannot write summary".to_string(), Error::Io(e.into_error())))?;
    let mut text = comment_header(&spec.embedded_json());
    for p in &points {
        text.push_str(&format!("# point {}: {}\n", p.index, serde_json::to_string(&p.config).expect("config serialises")));
    }
    text.push_str(&String::from_utf8(body).expect("utf-8"));
    fs::write(&summary_path, text).map_err(|e| ("cannot write summary".to_string(), Error::Io(e)))?;
    Ok(results)
}

fn sweep_from_spec(spec: &ExperimentSpec) -> Result<ConfigSweep> {
    let dims = spec.usize_sweep("d")?;
    let horizons = spec.usize_sweep("T")?;
    let ablation_schedules = spec
        .str_sweep("step_schedule")?
        .iter()
        .map(|n| StepSchedule::parse(n).ok_or_else(|| Error::Config(format!("unknown step_schedule \"{n}\""))))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConfigSweep { base: spec.base.clone(), dims, horizons, ablation_schedules })
}

/// Runs one check and returns `(passed, headline, report JSON)`.
pub fn run_check(spec: &ExperimentSpec, check: &str) -> Result<(bool, String, Value)> {
    let delta = spec.delta;
    let opts = &spec.conclab;
    match check {
        "sphere" => {
            let src = RandomSource::new(spec.base.seed, 0);
            let rep = conclab::check_sphere_concentration(
                &opts.sphere_dims,
                opts.sphere_lipschitz,
                opts.sphere_samples,
                &opts.tau_grid,
                &src,
            )?;
            Ok((rep.passed, rep.headline(), serde_json::to_value(&rep)?))
        }
        "supermartingale" => {
            let src = RandomSource::new(spec.base.seed, 0);
            let base = spec.base.resolve()?;
            let models = [
                (1.0, DifferenceModel::TwoPoint { magnitude: 1.0 }),
                (conclab::difference_bound(&base)?, DifferenceModel::Trace { config: base.clone() }),
            ];
            let mut reports = Vec::new();
            let mut lines = Vec::new();
            let mut passed = true;
            for (b, model) in &models {
                for frac in &opts.lambda_fractions {
                    let lambda = frac * 3.0 / b;
                    let rep = conclab::check_supermartingale(*b, lambda, spec.n_runs, base.horizon, model, &src, delta)?;
                    passed &= rep.passed;
                    lines.push(rep.headline());
                    reports.push(rep);
                }
            }
            let headline = format!("{} supermartingale: {} cases\n  {}", if passed { "PASS" } else { "FAIL" }, reports.len(), lines.join("\n  "));
            Ok((passed, headline, serde_json::to_value(&reports)?))
        }
        "zsum" => {
            let traces = conclab::run_many(&spec.base, spec.n_runs)?;
            let rep = conclab::check_z_sum(&traces, delta)?;
            Ok((rep.passed, rep.headline(), serde_json::to_value(&rep)?))
        }
        "gsum" => {
            let sweep = sweep_from_spec(spec)?;
            let rep = conclab::gsum_study(&sweep, spec.n_runs, delta, ScalingCriteria::GSUM)?;
            let line = format!("{} slope_d={:?} r2_ln_t={:?}", rep.headline(), rep.metrics.get("slope_d"), rep.metrics.get("r2_ln_t"));
            Ok((rep.passed, line, serde_json::to_value(&rep)?))
        }
        "regret" => {
            if spec.n_runs < conclab::min_runs(delta) {
                return Err(Error::InsufficientData(format!(
                    "n_runs = {} is below 50/delta = {}",
                    spec.n_runs,
                    conclab::min_runs(delta)
                )));
            }
            let sweep = sweep_from_spec(spec)?;
            let rep = conclab::check_regret_highprob(&sweep, spec.n_runs, delta, ScalingCriteria::REGRET)?;
            let line = format!(
                "{} slope_d={:?} r2_ln_t={:?} fitted_constant={:?}",
                rep.headline(),
                rep.metrics.get("slope_d"),
                rep.metrics.get("r2_ln_t"),
                rep.metrics.get("fitted_constant")
            );
            Ok((rep.passed, line, serde_json::to_value(&rep)?))
        }
        other => Err(Error::Config(format!("unknown check \"{other}\" (valid: {})", CHECKS.join(", ")))),
    }
}

pub fn cmd_conclab(opts: &Options, check: &str) -> i32 {
    if !CHECKS.contains(&check) {
        eprintln!("error: unknown check \"{check}\"; valid checks: {}", CHECKS.join(", "));
        return EXIT_CONFIG;
    }
    let (spec, out) = match load_spec(opts) {
        Ok(v) => v,
        Err(e) => return report_error("invalid spec", &e),
    };
    let path = out.join(format!("conclab_{check}.json"));
    if let Err(e) = guard_new_file(&path, opts.force) {
        return report_error("output collision", &e);
    }
    let result = match with_pool(opts.jobs, || run_check(&spec, check)) {
        Ok(r) => r,
        Err(e) => Err(e),
    };
    let (passed, headline, report) = match result {
        Ok(v) => v,
        Err(e) => return report_error(&format!("check {check}"), &e),
    };
    let doc = serde_json::json!({
        "format_version": FORMAT_VERSION,
        "check": check,
        "passed": passed,
        "spec": serde_json::from_str::<Value>(&spec.embedded_json()).expect("valid json"),
        "resolved_base": spec.base.resolve().ok(),
        "report": report,
    });
    let written = fs::create_dir_all(&out)
        .and_then(|_| fs::write(&path, serde_json::to_string_pretty(&doc).expect("serialisable")));
    if let Err(e) = written {
        return report_error("cannot write report", &Error::Io(e));
    }
    println!("{headline}");
    if passed {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

fn read_summary(path: &Path) -> Result<(u32, Vec<SummaryRow>)> {
    let text = fs::read_to_string(path)?;
    let version = text
        .lines()
        .find_map(|l| l.strip_prefix("# format_version:"))
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| Error::Config(format!("{}: missing format_version line", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<SummaryRow>, _>>()?;
    Ok((version, rows))
}

fn summary_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "csv")
                && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("summary"))
        })
        .collect();
    files.sort();
    Ok(files)
}

struct GroupStats {
    /// The held-fixed parameter (`d` for the ln T table, `T` for the d table).
    fixed: usize,
    key: f64,
    n: usize,
    mean: f64,
    median: f64,
    q95: f64,
    gsum_mean: f64,
}

fn group_by(
    rows: &[SummaryRow],
    fixed: impl Fn(&SummaryRow) -> usize,
    key: impl Fn(&SummaryRow) -> usize,
) -> Result<Vec<GroupStats>> {
    let mut groups: BTreeMap<(usize, usize), Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((fixed(r), key(r))).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((f, k), rs)| {
            let reg: Vec<f64> = rs.iter().map(|r| r.regret).collect();
            let n = reg.len();
            Ok(GroupStats {
                fixed: f,
                key: k as f64,
                n,
                mean: reg.iter().sum::<f64>() / n as f64,
                median: quantile_nearest_rank(&reg, 0.5)?,
                q95: quantile_nearest_rank(&reg, 0.95)?,
                gsum_mean: rs.iter().map(|r| r.gsum_weighted).sum::<f64>() / n as f64,
            })
        })
        .collect()
}

fn fmt_fit(label: &str, fit: Result<LinearFit>) -> String {
    match fit {
        Ok(f) if f.slope_se.is_finite() => {
            format!("- {label}: {:.4} ± {:.4} (R² = {:.4}, n = {})", f.slope, f.slope_se, f.r_squared, f.n)
        }
        Ok(f) => format!("- {label}: {:.4} ± n/a (R² = {:.4}, n = {})", f.slope, f.r_squared, f.n),
        Err(e) => format!("- {label}: n/a ({e})"),
    }
}

/// Splits grouped stats into runs of equal `fixed`.
fn runs_of(groups: &[GroupStats]) -> Vec<&[GroupStats]> {
    groups.chunk_by(|a, b| a.fixed == b.fixed).collect()
}

/// Builds the markdown report and figure CSVs for `dir`.
pub fn build_report(dir: &Path, force: bool) -> Result<PathBuf> {
    if !dir.is_dir() {
        return Err(Error::InsufficientData(format!("{} is not a directory", dir.display())));
    }
    let files = summary_files(dir)?;
    if files.is_empty() {
        return Err(Error::InsufficientData(format!("no summary CSV in {}", dir.display())));
    }
    let mut rows = Vec::new();
    let mut versions: BTreeMap<u32, PathBuf> = BTreeMap::new();
    for f in &files {
        let (v, mut r) = read_summary(f)?;
        versions.entry(v).or_insert_with(|| f.clone());
        rows.append(&mut r);
    }
    if versions.len() > 1 {
        let listed: Vec<String> = versions.iter().map(|(v, f)| format!("{v} ({})", f.display())).collect();
        return Err(Error::Config(format!("mixed format_version values: {}", listed.join(", "))));
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData("summary files contain no rows".into()));
    }
    let report_path = dir.join("report.md");
    let fig_t = dir.join("fig_regret_vs_logT.csv");
    let fig_d = dir.join("fig_regret_vs_d.csv");
    for p in [&report_path, &fig_t, &fig_d] {
        guard_new_file(p, force)?;
    }

    let by_t = group_by(&rows, |r| r.d, |r| r.t)?;
    let by_d = group_by(&rows, |r| r.t, |r| r.d)?;

    let mut md = String::new();
    let _ = writeln!(md, "# Regret report\n");
    let _ = writeln!(md, "format_version: {}  ", versions.keys().next().expect("non-empty"));
    let _ = writeln!(md, "runs: {}  ", rows.len());
    let _ = writeln!(md, "sources: {}\n", files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>().join(", "));
    let _ = writeln!(md, "Rows with different schedules or adversaries are pooled.\n");
    let _ = writeln!(md, "## Regret vs ln T\n");
    let _ = writeln!(md, "| d | T | ln T | runs | mean regret | median | q95 | mean Σ‖g‖²/(μt) |");
    let _ = writeln!(md, "|---|---|---|---|---|---|---|---|");
    for g in &by_t {
        let _ = writeln!(
            md,
            "| {} | {} | {:.4} | {} | {:.6} | {:.6} | {:.6} | {:.6} |",
            g.fixed, g.key, g.key.ln(), g.n, g.mean, g.median, g.q95, g.gsum_mean
        );
    }
    let _ = writeln!(md, "\n## Regret vs d\n");
    let _ = writeln!(md, "| T | d | runs | mean regret | median | q95 | mean Σ‖g‖²/(μt) |");
    let _ = writeln!(md, "|---|---|---|---|---|---|---|");
    for g in &by_d {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {:.6} | {:.6} | {:.6} | {:.6} |",
            g.fixed, g.key, g.n, g.mean, g.median, g.q95, g.gsum_mean
        );
    }
    let _ = writeln!(md, "\n## Fits\n");
    for run in runs_of(&by_t) {
        if run.len() < 2 {
            continue;
        }
        let ln_t: Vec<f64> = run.iter().map(|g| g.key.ln()).collect();
        let mean: Vec<f64> = run.iter().map(|g| g.mean).collect();
        let _ = writeln!(md, "{}", fmt_fit(&format!("slope vs ln T at d = {} (mean regret, linear)", run[0].fixed), ols(&ln_t, &mean)));
    }
    for run in runs_of(&by_d) {
        if run.len() < 2 {
            continue;
        }
        let d: Vec<f64> = run.iter().map(|g| g.key).collect();
        let mean: Vec<f64> = run.iter().map(|g| g.mean).collect();
        let gsum: Vec<f64> = run.iter().map(|g| g.gsum_mean).collect();
        let t = run[0].fixed;
        let _ = writeln!(md, "{}", fmt_fit(&format!("slope vs d at T = {t} (mean regret, log-log)"), log_log_fit(&d, &mean)));
        let _ = writeln!(md, "{}", fmt_fit(&format!("slope vs d at T = {t} (mean Σ‖g‖²/(μt), log-log)"), log_log_fit(&d, &gsum)));
    }
    if by_t.len() == runs_of(&by_t).len() && by_d.len() == runs_of(&by_d).len() {
        let _ = writeln!(md, "- no parameter has two or more values; nothing to fit");
    }

    let mut t_csv = String::from("# d T ln_T runs mean_regret median_regret q95_regret mean_gsum\n");
    for run in runs_of(&by_t) {
        for g in run {
            let _ = writeln!(t_csv, "{},{},{},{},{},{},{},{}", g.fixed, g.key, g.key.ln(), g.n, g.mean, g.median, g.q95, g.gsum_mean);
        }
        t_csv.push_str("\n\n");
    }
    let mut d_csv = String::from("# T d runs mean_regret median_regret q95_regret mean_gsum\n");
    for run in runs_of(&by_d) {
        for g in run {
            let _ = writeln!(d_csv, "{},{},{},{},{},{},{}", g.fixed, g.key, g.n, g.mean, g.median, g.q95, g.gsum_mean);
        }
        d_csv.push_str("\n\n");
    }
    fs::write(&fig_t, t_csv)?;
    fs::write(&fig_d, d_csv)?;
    fs::write(&report_path, md)?;
    Ok(report_path)
}

pub fn cmd_report(dir: &Path, force: bool) -> i32 {
    match build_report(dir, force) {
        Ok(p) => {
            println!("wrote {}", p.display());
            EXIT_OK
        }
        Err(e) => report_error("report", &e),
    }
}
