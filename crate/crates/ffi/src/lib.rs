//! C ABI for `bandit-oco`.
//!
//! Objects cross the boundary as opaque handles (`BocConfig`, `BocTrace`,
//! `BocRandom`) created by `*_new`/`*_from_json`/`boc_run` and released with
//! the matching `*_free`. Every fallible call returns a [`BocStatus`]; on
//! failure `boc_last_error` copies a message for the calling thread.
//!
//! Buffers are caller-owned. Functions that fill a `double` array take its
//! length and fail with `BOC_STATUS_BUFFER_TOO_SMALL` if it is short.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use bandit_oco::engine::{comparator, regret, run, RunConfig, Trace};
use bandit_oco::sampling::RandomSource;
use bandit_oco::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BocStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Parameter = 4,
    Dimension = 5,
    Feasibility = 6,
    Solver = 7,
    UnsupportedLoss = 8,
    InsufficientData = 9,
    Io = 10,
    OutOfRange = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

/// Opaque run configuration.
pub struct BocConfig(RunConfig);

/// Opaque completed run.
pub struct BocTrace(Trace);

/// Opaque random stream.
pub struct BocRandom(RandomSource);

/// Scalars of one round.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BocRound {
    pub t: usize,
    pub value_plus: f64,
    pub value_minus: f64,
    pub g_norm_sq: f64,
    pub eta: f64,
}

/// Regret against a comparator point.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BocRegret {
    pub player_cost: f64,
    pub comparator_cost: f64,
    pub regret: f64,
    /// `Σ ‖g_t‖² / (μ t)`
    pub weighted_gsum: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> BocStatus {
    match e {
        Error::Config(_) | Error::Json(_) => BocStatus::Config,
        Error::Parameter(_) => BocStatus::Parameter,
        Error::Dimension { .. } => BocStatus::Dimension,
        Error::Feasibility(_) => BocStatus::Feasibility,
        Error::Solver(_) => BocStatus::Solver,
        Error::UnsupportedLoss(_) => BocStatus::UnsupportedLoss,
        Error::InsufficientData(_) => BocStatus::InsufficientData,
        Error::Io(_) | Error::Csv(_) => BocStatus::Io,
    }
}

struct Fail(BocStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BocStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BocStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            BocStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(BocStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, need: usize) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null("output buffer"));
    }
    if len < need {
        return Err(Fail(BocStatus::BufferTooSmall, format!("buffer holds {len} values, need {need}")));
    }
    Ok(slice::from_raw_parts_mut(p, need))
}

unsafe fn in_slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null("input vector"));
    }
    Ok(slice::from_raw_parts(p, len))
}

fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Version of the trace and summary file formats.
#[no_mangle]
pub extern "C" fn boc_format_version() -> u32 {
    bandit_oco::FORMAT_VERSION
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len − 1` bytes). Returns the full message length
/// in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn boc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Parses a run configuration from JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn boc_config_from_json(json: *const c_char, out: *mut *mut BocConfig) -> BocStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Fail(BocStatus::InvalidUtf8, e.to_string()))?;
        let cfg: RunConfig = serde_json::from_str(text).map_err(Error::from)?;
        cfg.resolve()?;
        store(out, BocConfig(cfg))
    })
}

/// Writes the resolved configuration as JSON into `buf`. `needed` receives
/// the length including the terminator; pass a null `buf` to query it.
///
/// # Safety
/// `config` must be a live handle; `buf` null or `len` writable bytes;
/// `needed` null or writable.
#[no_mangle]
pub unsafe extern "C" fn boc_config_to_json(
    config: *const BocConfig,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> BocStatus {
    guard(|| {
        let cfg = &deref(config, "config")?.0;
        let text = serde_json::to_string(&cfg.resolve()?).map_err(Error::from)?;
        if !needed.is_null() {
            *needed = text.len() + 1;
        }
        if buf.is_null() {
            return Ok(());
        }
        if len < text.len() + 1 {
            return Err(Fail(BocStatus::BufferTooSmall, format!("need {} bytes", text.len() + 1)));
        }
        ptr::copy_nonoverlapping(text.as_ptr(), buf.cast::<u8>(), text.len());
        *buf.add(text.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn boc_config_set_seed(config: *mut BocConfig, seed: u64, stream_id: u64) -> BocStatus {
    guard(|| {
        let cfg = config.as_mut().ok_or_else(|| null("config"))?;
        cfg.0.seed = seed;
        cfg.0.stream_id = stream_id;
        Ok(())
    })
}

/// Dimension of the configured game, 0 for a null handle.
///
/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn boc_config_dim(config: *const BocConfig) -> usize {
    config.as_ref().map_or(0, |c| c.0.dim)
}

/// Projects `x` onto `(1 − xi)K` for the configuration's body.
///
/// # Safety
/// `x` and `out` must hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn boc_config_project(
    config: *const BocConfig,
    xi: f64,
    x: *const f64,
    out: *mut f64,
    dim: usize,
) -> BocStatus {
    guard(|| {
        let cfg = &deref(config, "config")?.0;
        let body = cfg.body()?;
        let p = body.project_shrunk(xi, in_slice(x, dim)?)?;
        out_slice(out, dim, p.len())?.copy_from_slice(&p);
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn boc_config_free(config: *mut BocConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Plays the configured game to its horizon.
///
/// # Safety
/// `config` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn boc_run(config: *const BocConfig, out: *mut *mut BocTrace) -> BocStatus {
    guard(|| {
        let cfg = &deref(config, "config")?.0;
        store(out, BocTrace(run(cfg)?))
    })
}

/// Number of rounds, 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn boc_trace_rounds(trace: *const BocTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.rounds.len())
}

/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn boc_trace_dim(trace: *const BocTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.config.dim)
}

unsafe fn round_at<'a>(trace: *const BocTrace, index: usize) -> Result<&'a bandit_oco::RoundRecord, Fail> {
    let t = &deref(trace, "trace")?.0;
    t.rounds
        .get(index)
        .ok_or_else(|| Fail(BocStatus::OutOfRange, format!("round index {index} out of 0..{}", t.rounds.len())))
}

/// Scalars of round `index` (0-based; `t = index + 1`).
///
/// # Safety
/// `trace` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn boc_trace_round(trace: *const BocTrace, index: usize, out: *mut BocRound) -> BocStatus {
    guard(|| {
        let r = round_at(trace, index)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = BocRound { t: r.t, value_plus: r.value_plus, value_minus: r.value_minus, g_norm_sq: r.g_norm_sq, eta: r.eta };
        Ok(())
    })
}

/// Which vector of a round to copy; passed to [`boc_trace_vector`] as a
/// plain integer.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BocVector {
    /// The iterate `x_t`.
    Iterate = 0,
    /// The direction `u_t`.
    Direction = 1,
    /// The estimate `g_t`.
    Gradient = 2,
}

/// Copies one vector of round `index` into `out`.
///
/// # Safety
/// `trace` must be a live handle; `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn boc_trace_vector(
    trace: *const BocTrace,
    index: usize,
    which: u32,
    out: *mut f64,
    len: usize,
) -> BocStatus {
    guard(|| {
        let r = round_at(trace, index)?;
        let v = match which {
            w if w == BocVector::Iterate as u32 => &r.x,
            w if w == BocVector::Direction as u32 => &r.u,
            w if w == BocVector::Gradient as u32 => &r.g,
            w => return Err(Fail(BocStatus::OutOfRange, format!("unknown vector selector {w}"))),
        };
        out_slice(out, len, v.len())?.copy_from_slice(v);
        Ok(())
    })
}

/// Best fixed point in hindsight over the body.
///
/// # Safety
/// `trace` must be a live handle; `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn boc_trace_comparator(trace: *const BocTrace, out: *mut f64, len: usize) -> BocStatus {
    guard(|| {
        let t = &deref(trace, "trace")?.0;
        let x = comparator(t)?;
        out_slice(out, len, x.len())?.copy_from_slice(&x);
        Ok(())
    })
}

/// Regret against `x_star`; pass null to use the best fixed point.
///
/// # Safety
/// `trace` must be a live handle; `x_star` null or `dim` values; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn boc_trace_regret(trace: *const BocTrace, x_star: *const f64, out: *mut BocRegret) -> BocStatus {
    guard(|| {
        let t = &deref(trace, "trace")?.0;
        let x = if x_star.is_null() { comparator(t)? } else { in_slice(x_star, t.config.dim)?.to_vec() };
        let b = regret(t, &x)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = BocRegret {
            player_cost: b.player_cost,
            comparator_cost: b.comparator_cost,
            regret: b.regret,
            weighted_gsum: b.weighted_gsum,
        };
        Ok(())
    })
}

/// # Safety
/// `trace` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn boc_trace_free(trace: *mut BocTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Opens the random stream `(seed, stream_id)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn boc_random_new(seed: u64, stream_id: u64, out: *mut *mut BocRandom) -> BocStatus {
    guard(|| store(out, BocRandom(RandomSource::new(seed, stream_id))))
}

/// Draws a point uniformly from the unit sphere in `R^dim`.
///
/// # Safety
/// `rng` must be a live handle; `out` must hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn boc_random_sphere(rng: *mut BocRandom, out: *mut f64, dim: usize) -> BocStatus {
    guard(|| {
        let src = rng.as_mut().ok_or_else(|| null("rng"))?;
        let u = src.0.sample_sphere(dim)?;
        out_slice(out, dim, dim)?.copy_from_slice(&u);
        Ok(())
    })
}

/// # Safety
/// `rng` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn boc_random_free(rng: *mut BocRandom) {
    if !rng.is_null() {
        drop(Box::from_raw(rng));
    }
}
