//! Feasible bodies `K` with `rB ⊆ K ⊆ DB`, centred at the origin.
//!
//! Only bodies with closed-form Euclidean projections are provided, so every
//! projection in a run is exact and the statistics downstream are not
//! polluted by solver error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::RandomSource;
use crate::vecops::norm;

/// Absolute tolerance used for membership and boundary comparisons.
pub const TOL_GEOM: f64 = 1e-9;

/// Shape of the body as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BodyKind {
    Ball { radius: f64 },
    Box { half_widths: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexBody {
    kind: BodyKind,
    dim: usize,
}

impl ConvexBody {
    pub fn new(kind: BodyKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("body dimension must be positive"));
        }
        match &kind {
            BodyKind::Ball { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::param(format!("ball radius must be positive, got {radius}")));
                }
            }
            BodyKind::Box { half_widths } => {
                Error::check_dim(dim, half_widths.len())?;
                if let Some(a) = half_widths.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
                    return Err(Error::param(format!("box half-widths must be positive, got {a}")));
                }
            }
        }
        Ok(Self { kind, dim })
    }

    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        Self::new(BodyKind::Ball { radius }, dim)
    }

    pub fn cuboid(half_widths: Vec<f64>) -> Result<Self> {
        let dim = half_widths.len();
        Self::new(BodyKind::Box { half_widths }, dim)
    }

    pub fn kind(&self) -> &BodyKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Radius `r` of the largest origin-centred ball inside the body.
    pub fn inner_radius(&self) -> f64 {
        match &self.kind {
            BodyKind::Ball { radius } => *radius,
            BodyKind::Box { half_widths } => half_widths.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    /// Radius `D` of the smallest origin-centred ball containing the body.
    pub fn outer_radius(&self) -> f64 {
        match &self.kind {
            BodyKind::Ball { radius } => *radius,
            BodyKind::Box { half_widths } => norm(half_widths),
        }
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        self.contains_scaled(1.0, x)
    }

    /// Membership in `scale · K`. The boundary counts as inside.
    pub fn contains_scaled(&self, scale: f64, x: &[f64]) -> Result<bool> {
        Error::check_dim(self.dim, x.len())?;
        Ok(match &self.kind {
            BodyKind::Ball { radius } => norm(x) <= scale * radius + TOL_GEOM,
            BodyKind::Box { half_widths } => {
                x.iter().zip(half_widths).all(|(xi, a)| xi.abs() <= scale * a + TOL_GEOM)
            }
        })
    }

    /// Whether the whole ball `center + radius·B` lies in the body.
    pub fn contains_ball(&self, center: &[f64], radius: f64) -> Result<bool> {
        Error::check_dim(self.dim, center.len())?;
        Ok(match &self.kind {
            BodyKind::Ball { radius: big } => norm(center) + radius <= big + TOL_GEOM,
            BodyKind::Box { half_widths } => {
                center.iter().zip(half_widths).all(|(c, a)| c.abs() + radius <= a + TOL_GEOM)
            }
        })
    }

    /// Euclidean projection onto `(1 − ξ)K`.
    pub fn project_shrunk(&self, xi: f64, x: &[f64]) -> Result<Vec<f64>> {
        if !(0.0..1.0).contains(&xi) {
            return Err(Error::param(format!("shrinkage xi must lie in [0, 1), got {xi}")));
        }
        Error::check_dim(self.dim, x.len())?;
        let s = 1.0 - xi;
        Ok(match &self.kind {
            BodyKind::Ball { radius } => {
                let limit = s * radius;
                let n = norm(x);
                if n <= limit {
                    x.to_vec()
                } else {
                    x.iter().map(|v| v * (limit / n)).collect()
                }
            }
            BodyKind::Box { half_widths } => x
                .iter()
                .zip(half_widths)
                .map(|(v, a)| v.clamp(-s * a, s * a))
                .collect(),
        })
    }

    /// Euclidean projection onto `K`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.project_shrunk(0.0, x)
    }

    /// A point drawn uniformly from the body.
    pub fn sample_uniform(&self, src: &mut RandomSource) -> Vec<f64> {
        match &self.kind {
            BodyKind::Ball { radius } => {
                let v = src.sample_ball(self.dim).expect("dim checked at construction");
                v.into_iter().map(|c| c * radius).collect()
            }
            BodyKind::Box { half_widths } => {
                half_widths.iter().map(|a| a * (2.0 * src.uniform() - 1.0)).collect()
            }
        }
    }
}
