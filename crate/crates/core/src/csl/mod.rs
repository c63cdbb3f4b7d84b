//! CSL spectral quantities: force, two-body and torque spectra, the colored
//! noise filter, the induced temperature shift, free-expansion spread and
//! heating rate.
//!
//! Spectra are white, double-sided and reported per axis (x). All of them are
//! returned as [`Estimate`]s so callers can track quadrature error.

mod kernels;
pub mod pair_kernel;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::PhysicalConstants;
use crate::geometry::{GeometryError, MassGeometry};
use crate::quadrature::{Estimate, QuadError, QuadratureSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CslError {
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid collapse parameters: {0}")]
    InvalidParams(String),
    #[error("two-body geometries need the two-body spectrum")]
    TwoBodyNotAllowed,
    #[error("expected a two-body geometry")]
    NotTwoBody,
    #[error("{0}")]
    InvalidArgument(String),
}

/// Frequency dependence of the collapse noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ColoredNoiseModel {
    #[default]
    White,
    /// f̃(ω) = ΩC²/(ΩC² + ω²), exponentially correlated noise.
    LorentzianCutoff { omega_c: f64 },
}

impl ColoredNoiseModel {
    pub fn validate(&self) -> Result<(), CslError> {
        match self {
            ColoredNoiseModel::White => Ok(()),
            ColoredNoiseModel::LorentzianCutoff { omega_c } => {
                if omega_c.is_finite() && *omega_c > 0.0 {
                    Ok(())
                } else {
                    Err(CslError::InvalidParams(format!("omega_c must be finite and > 0, got {omega_c}")))
                }
            }
        }
    }

    /// f̃(ω), in (0, 1].
    pub fn filter(&self, omega: f64) -> f64 {
        match self {
            ColoredNoiseModel::White => 1.0,
            ColoredNoiseModel::LorentzianCutoff { omega_c } => {
                // Written as 1/(1 + r²) so ΩC → ∞ stays finite.
                let r = omega / omega_c;
                1.0 / (1.0 + r * r)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseParams {
    /// Collapse rate λ in 1/s.
    pub lambda: f64,
    /// Correlation length rC in m.
    pub rc: f64,
    pub colored: Option<ColoredNoiseModel>,
}

impl CollapseParams {
    pub fn new(lambda: f64, rc: f64) -> Self {
        Self {
            lambda,
            rc,
            colored: None,
        }
    }

    /// Conventional GRW values λ = 1e-16 s⁻¹, rC = 1e-7 m.
    pub fn grw() -> Self {
        Self::new(1e-16, 1e-7)
    }

    pub fn validate(&self) -> Result<(), CslError> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(CslError::InvalidParams(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.rc.is_finite() && self.rc > 0.0) {
            return Err(CslError::InvalidParams(format!("rC must be finite and > 0, got {}", self.rc)));
        }
        if let Some(c) = &self.colored {
            c.validate()?;
        }
        Ok(())
    }

    pub fn filter(&self, omega: f64) -> f64 {
        self.colored.map_or(1.0, |c| c.filter(omega))
    }
}

/// ħ²λ rC³ / (π^{3/2} m0²): converts a bare k-space integral into a spectrum.
fn prefactor(p: &CollapseParams, c: &PhysicalConstants) -> f64 {
    c.hbar * c.hbar * p.lambda * p.rc.powi(3) / (PI.powf(1.5) * c.m0 * c.m0)
}

fn check(g: &MassGeometry, p: &CollapseParams, c: &PhysicalConstants) -> Result<(), CslError> {
    p.validate()?;
    g.validate()?;
    c.validate().map_err(CslError::InvalidArgument)?;
    Ok(())
}

/// White CSL force spectrum along x, in N²·s.
pub fn csl_force_spectrum(g: &MassGeometry, p: &CollapseParams, spec: &QuadratureSpec) -> Result<Estimate, CslError> {
    csl_force_spectrum_with(g, p, spec, &PhysicalConstants::SI)
}

pub fn csl_force_spectrum_with(
    g: &MassGeometry,
    p: &CollapseParams,
    spec: &QuadratureSpec,
    c: &PhysicalConstants,
) -> Result<Estimate, CslError> {
    check(g, p, c)?;
    if matches!(g, MassGeometry::TwoBody { .. }) {
        return Err(CslError::TwoBodyNotAllowed);
    }
    if p.lambda == 0.0 {
        return Ok(Estimate::ZERO);
    }
    Ok(kernels::force_integral(g, p.rc, spec)?.scale(prefactor(p, c)))
}

/// Differential force spectrum of two identical units separated by `a`
/// along x, in N²·s. Keeps the ½ in front of the (1 − cos a k_x) kernel, so
/// at large separation it tends to half the single-unit spectrum.
pub fn csl_force_spectrum_two_body(
    g: &MassGeometry,
    p: &CollapseParams,
    spec: &QuadratureSpec,
) -> Result<Estimate, CslError> {
    csl_force_spectrum_two_body_with(g, p, spec, &PhysicalConstants::SI)
}

pub fn csl_force_spectrum_two_body_with(
    g: &MassGeometry,
    p: &CollapseParams,
    spec: &QuadratureSpec,
    c: &PhysicalConstants,
) -> Result<Estimate, CslError> {
    check(g, p, c)?;
    let MassGeometry::TwoBody { unit, separation } = g else {
        return Err(CslError::NotTwoBody);
    };
    if p.lambda == 0.0 || *separation == 0.0 {
        return Ok(Estimate::ZERO);
    }
    let diff = kernels::two_body_difference(unit, *separation, p.rc, spec)?;
    Ok(diff.scale(0.5 * prefactor(p, c)))
}

/// Force spectrum of whichever kind `g` is: single body or two-body.
pub fn csl_force_spectrum_any(
    g: &MassGeometry,
    p: &CollapseParams,
    spec: &QuadratureSpec,
    c: &PhysicalConstants,
) -> Result<Estimate, CslError> {
    match g {
        MassGeometry::TwoBody { .. } => csl_force_spectrum_two_body_with(g, p, spec, c),
        _ => csl_force_spectrum_with(g, p, spec, c),
    }
}

/// White CSL torque spectrum about x, in N²·m²·s.
pub fn csl_torque_spectrum(g: &MassGeometry, p: &CollapseParams, spec: &QuadratureSpec) -> Result<Estimate, CslError> {
    csl_torque_spectrum_with(g, p, spec, &PhysicalConstants::SI)
}

pub fn csl_torque_spectrum_with(
    g: &MassGeometry,
    p: &CollapseParams,
    spec: &QuadratureSpec,
    c: &PhysicalConstants,
) -> Result<Estimate, CslError> {
    check(g, p, c)?;
    if matches!(g, MassGeometry::TwoBody { .. }) {
        return Err(CslError::TwoBodyNotAllowed);
    }
    if p.lambda == 0.0 {
        return Ok(Estimate::ZERO);
    }
    Ok(kernels::torque_integral(g, p.rc, spec)?.scale(prefactor(p, c)))
}

/// S·f̃(ω).
pub fn apply_colored_filter(s: f64, model: &ColoredNoiseModel, omega: f64) -> f64 {
    s * model.filter(omega.abs())
}

/// ΔT = S/(2 m γ kB).
pub fn csl_temperature_shift(s_ff: f64, mass: f64, gamma: f64) -> Result<f64, CslError> {
    csl_temperature_shift_with(s_ff, mass, gamma, &PhysicalConstants::SI)
}

pub fn csl_temperature_shift_with(s_ff: f64, mass: f64, gamma: f64, c: &PhysicalConstants) -> Result<f64, CslError> {
    if !(mass.is_finite() && mass > 0.0) {
        return Err(CslError::InvalidArgument(format!("mass must be > 0, got {mass}")));
    }
    if gamma == 0.0 {
        return Err(CslError::InvalidArgument(
            "gamma = 0: the temperature shift diverges without damping".into(),
        ));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(CslError::InvalidArgument(format!("gamma must be > 0, got {gamma}")));
    }
    Ok(s_ff / (2.0 * mass * gamma * c.k_b))
}

/// Rotational analogue ΔT = S_rot/(2 kB D_φ), with D_φ the rotational
/// damping coefficient in kg·m²/s.
pub fn csl_temperature_shift_rot(s_rot: f64, d_phi: f64) -> Result<f64, CslError> {
    csl_temperature_shift_rot_with(s_rot, d_phi, &PhysicalConstants::SI)
}

pub fn csl_temperature_shift_rot_with(s_rot: f64, d_phi: f64, c: &PhysicalConstants) -> Result<f64, CslError> {
    if d_phi == 0.0 {
        return Err(CslError::InvalidArgument(
            "D_phi = 0: the temperature shift diverges without damping".into(),
        ));
    }
    if !(d_phi.is_finite() && d_phi > 0.0) {
        return Err(CslError::InvalidArgument(format!("D_phi must be > 0, got {d_phi}")));
    }
    Ok(s_rot / (2.0 * c.k_b * d_phi))
}

/// 3D position spread ⟨r²⟩(t) = qm_term + λħ²t³/(2 m0² rC²), in m².
///
/// The CSL term is the sum over three axes; one axis carries a third of it.
pub fn free_expansion_spread(p: &CollapseParams, t: f64, qm_term: f64) -> Result<f64, CslError> {
    free_expansion_spread_with(p, t, qm_term, &PhysicalConstants::SI)
}

pub fn free_expansion_spread_with(
    p: &CollapseParams,
    t: f64,
    qm_term: f64,
    c: &PhysicalConstants,
) -> Result<f64, CslError> {
    p.validate()?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(CslError::InvalidArgument(format!("t must be finite and >= 0, got {t}")));
    }
    Ok(qm_term + p.lambda * c.hbar * c.hbar * t.powi(3) / (2.0 * c.m0 * c.m0 * p.rc * p.rc))
}

/// Heating rate in K/year.
///
/// The body absorbs energy at 3·S/(2m) (three axes, each S/2m) and its
/// temperature is defined through ⟨E⟩ = (3/2) kB T, so dT/dt = S/(m kB).
pub fn heating_rate(g: &MassGeometry, p: &CollapseParams) -> Result<f64, CslError> {
    heating_rate_with(g, p, &QuadratureSpec::default(), &PhysicalConstants::SI)
}

pub fn heating_rate_with(
    g: &MassGeometry,
    p: &CollapseParams,
    spec: &QuadratureSpec,
    c: &PhysicalConstants,
) -> Result<f64, CslError> {
    let s = csl_force_spectrum_with(g, p, spec, c)?.value;
    let s_total = 3.0 * s;
    Ok(s_total / (3.0 * g.total_mass() * c.k_b) * c.seconds_per_year)
}

/// ħ²λ m²/(2 m0² rC²): the force spectrum of a point mass, and the coherent
/// limit of every body.
pub fn point_mass_spectrum(mass: f64, p: &CollapseParams, c: &PhysicalConstants) -> f64 {
    c.hbar * c.hbar * p.lambda * mass * mass / (2.0 * c.m0 * c.m0 * p.rc * p.rc)
}
