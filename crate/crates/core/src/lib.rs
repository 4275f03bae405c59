//! Two-point bandit-feedback online gradient descent for strongly convex
//! losses.
//!
//! The player picks `x_t` from a convex body `K` with `rB ⊆ K ⊆ DB`, sees the
//! round's loss only at the two points `x_t ± αu_t`, builds the estimator
//! `g_t = d (ℓ_t(x_t + αu_t) − ℓ_t(x_t − αu_t)) / (2α) · u_t` and takes a
//! projected step onto the shrunk body `(1 − ξ)K` with `η_t = 2/(μt)`.
//!
//! Modules:
//! - [`geometry`]: feasible bodies and exact projections.
//! - [`sampling`]: seedable sphere/ball samplers with independent streams.
//! - [`losses`]: quadratic losses and adversary processes.
//! - [`estimator`]: the two-point gradient estimator and smoothed-loss Monte Carlo.
//! - [`engine`]: the online loop, traces, comparator and regret accounting.
//! - [`conclab`]: multi-run concentration and scaling checks.
//! - [`cli`]: experiment specs, sweeps, output files and reports.

pub mod cli;
pub mod conclab;
pub mod engine;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod losses;
pub mod sampling;
pub mod stats;
mod vecops;

pub use engine::{
    comparator, regret, run, RegretBreakdown, RoundRecord, RunConfig, StepSchedule, Trace,
};
pub use error::{Error, Result};
pub use estimator::{smoothed_loss_estimate, two_point_gradient, TwoPointQuery};
pub use geometry::{BodyKind, ConvexBody};
pub use losses::{Adversary, AdversarySpec, LossForm, LossFunction};
pub use sampling::RandomSource;

/// Version stamped into every file the CLI writes.
pub const FORMAT_VERSION: u32 = 1;
