//! Numerical backbone: adaptive Gauss–Kronrod quadrature for Gaussian-damped
//! k-space integrands, plus the Bessel functions the form factors need.

mod bessel;
mod gauss_kronrod;
mod kspace;

pub use bessel::{bessel_j0, bessel_j1, bessel_jn};
pub use gauss_kronrod::{integrate_interval, neumaier_sum};
pub use kspace::{
    integrate_k3, integrate_k3_with, integrate_line_even, integrate_planar_radial, KHints,
    KIntegrand, Vec3,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerances and limits for k-space integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Maximum number of integrand evaluations per integral.
    pub max_evals: u64,
    /// Integration is truncated at |k| = cutoff_factor / rC.
    pub cutoff_factor: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 0.0,
            max_evals: 50_000_000,
            cutoff_factor: 8.0,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<(), QuadError> {
        let bad = |msg: String| Err(QuadError::InvalidSpec(msg));
        if !(self.rel_tol >= 0.0 && self.abs_tol >= 0.0) {
            return bad("tolerances must be non-negative".into());
        }
        if self.rel_tol <= 0.0 && self.abs_tol <= 0.0 {
            return bad("one of rel_tol, abs_tol must be positive".into());
        }
        // e^{-25} < 2e-11 bounds the truncated Gaussian tail.
        if !(self.cutoff_factor >= 5.0 && self.cutoff_factor.is_finite()) {
            return bad(format!("cutoff_factor must be >= 5, got {}", self.cutoff_factor));
        }
        if self.max_evals < 1000 {
            return bad(format!("max_evals must be >= 1000, got {}", self.max_evals));
        }
        Ok(())
    }

    pub(crate) fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }
}

/// An integral value together with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub const ZERO: Estimate = Estimate { value: 0.0, error: 0.0 };

    pub fn new(value: f64, error: f64) -> Self {
        Self { value, error }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, error: 0.0 }
    }

    pub fn relative_error(&self) -> f64 {
        if self.value == 0.0 {
            if self.error == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.error / self.value.abs()
        }
    }

    pub fn scale(self, factor: f64) -> Self {
        Self {
            value: self.value * factor,
            error: self.error * factor.abs(),
        }
    }

    pub fn add(self, other: Estimate) -> Self {
        Self {
            value: self.value + other.value,
            error: self.error + other.error,
        }
    }

    /// First-order error propagation for a product.
    pub fn mul(self, other: Estimate) -> Self {
        Self {
            value: self.value * other.value,
            error: self.error * other.value.abs() + other.error * self.value.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("quadrature did not converge within {evaluations} evaluations (best estimate {estimate:e} ± {error:e})")]
    NonConvergence {
        estimate: f64,
        error: f64,
        evaluations: u64,
    },
    #[error("invalid quadrature settings: {0}")]
    InvalidSpec(String),
}

impl QuadError {
    /// Best available estimate, if the failure carries one.
    pub fn best_estimate(&self) -> Option<Estimate> {
        match self {
            QuadError::NonConvergence { estimate, error, .. } => Some(Estimate::new(*estimate, *error)),
            QuadError::InvalidSpec(_) => None,
        }
    }
}
