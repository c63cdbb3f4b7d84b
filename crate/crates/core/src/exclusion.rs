//! Upper bounds on the collapse rate λ from an experiment's noise budget.
//!
//! Every CSL quantity is linear in λ, so the bound at a given rC is the
//! budget divided by the channel's spectrum evaluated at λ = 1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::PhysicalConstants;
use crate::csl::{
    csl_force_spectrum_two_body_with, csl_force_spectrum_with, csl_torque_spectrum_with, CollapseParams, CslError,
    ColoredNoiseModel,
};
use crate::geometry::MassGeometry;
use crate::quadrature::{Estimate, QuadError, QuadratureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    ForceTranslational,
    ForceTwoBody,
    Torque,
    TemperatureShift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Damping {
    /// Translational damping: mass (kg) and rate γ (1/s).
    Translational { mass: f64, gamma: f64 },
    /// Rotational damping coefficient D_φ (kg·m²/s).
    Rotational { d_phi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Budget {
    /// Unexplained force (N²·s) or torque (N²·m²·s) spectral density.
    Psd { value: f64 },
    /// Largest unexplained temperature shift in K.
    Temperature { max_shift: f64, damping: Damping },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub name: String,
    pub geometry: MassGeometry,
    pub channel: Channel,
    pub budget: Budget,
    /// [ω_lo, ω_hi] in rad/s.
    pub band: [f64; 2],
    pub colored: Option<ColoredNoiseModel>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExclusionError {
    #[error("invalid experiment record: {0}")]
    InvalidRecord(String),
    #[error("no bound at rC = {rc:e} m: the channel's CSL signal vanishes")]
    DegenerateBound { rc: f64 },
    #[error(transparent)]
    Csl(#[from] CslError),
    #[error("rC grids of the curves differ")]
    GridMismatch,
}

impl ExperimentRecord {
    pub fn validate(&self) -> Result<(), ExclusionError> {
        let bad = |m: String| Err(ExclusionError::InvalidRecord(m));
        self.geometry.validate().map_err(CslError::from)?;
        let [lo, hi] = self.band;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
            return bad(format!("band must satisfy 0 <= lo < hi, got [{lo}, {hi}]"));
        }
        if let Some(c) = &self.colored {
            c.validate()?;
        }
        let two_body = matches!(self.geometry, MassGeometry::TwoBody { .. });
        if two_body != (self.channel == Channel::ForceTwoBody) {
            return bad("the force_two_body channel needs a two_body geometry and vice versa".into());
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ExclusionError::InvalidRecord(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        match (self.channel, &self.budget) {
            (Channel::TemperatureShift, Budget::Temperature { max_shift, damping }) => {
                positive("budget", *max_shift)?;
                match damping {
                    Damping::Translational { mass, gamma } => {
                        positive("damping mass", *mass)?;
                        positive("damping gamma", *gamma)
                    }
                    Damping::Rotational { d_phi } => positive("d_phi", *d_phi),
                }
            }
            (Channel::TemperatureShift, Budget::Psd { .. }) => {
                bad("the temperature_shift channel needs a temperature budget".into())
            }
            (_, Budget::Psd { value }) => positive("budget", *value),
            (_, Budget::Temperature { .. }) => bad("a temperature budget needs the temperature_shift channel".into()),
        }
    }

    pub fn band_midpoint(&self) -> f64 {
        0.5 * (self.band[0] + self.band[1])
    }
}

/// One bound evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub lambda_ub: f64,
    /// Absolute uncertainty on `lambda_ub` propagated from quadrature.
    pub error_est: f64,
}

/// The channel's CSL signal at λ = 1 with the colored filter applied.
pub fn unit_signal(
    rec: &ExperimentRecord,
    rc: f64,
    spec: &QuadratureSpec,
    c: &PhysicalConstants,
) -> Result<Estimate, ExclusionError> {
    let p = CollapseParams {
        lambda: 1.0,
        rc,
        colored: rec.colored,
    };
    let g = &rec.geometry;
    let s = match (rec.channel, &rec.budget) {
        (Channel::ForceTranslational, _) => csl_force_spectrum_with(g, &p, spec, c)?,
        (Channel::ForceTwoBody, _) => csl_force_spectrum_two_body_with(g, &p, spec, c)?,
        (Channel::Torque, _) => csl_torque_spectrum_with(g, &p, spec, c)?,
        (Channel::TemperatureShift, Budget::Temperature { damping, .. }) => match damping {
            Damping::Translational { .. } => csl_force_spectrum_with(g, &p, spec, c)?,
            Damping::Rotational { .. } => csl_torque_spectrum_with(g, &p, spec, c)?,
        },
        (Channel::TemperatureShift, Budget::Psd { .. }) => unreachable!("rejected by validate"),
    };
    Ok(s.scale(p.filter(rec.band_midpoint())))
}

fn budget_in_spectrum_units(rec: &ExperimentRecord, c: &PhysicalConstants) -> f64 {
    match rec.budget {
        Budget::Psd { value } => value,
        Budget::Temperature { max_shift, damping } => match damping {
            Damping::Translational { mass, gamma } => max_shift * 2.0 * mass * gamma * c.k_b,
            Damping::Rotational { d_phi } => max_shift * 2.0 * c.k_b * d_phi,
        },
    }
}

pub fn lambda_upper_bound(rec: &ExperimentRecord, rc: f64) -> Result<BoundPoint, ExclusionError> {
    lambda_upper_bound_with(rec, rc, &QuadratureSpec::default(), &PhysicalConstants::SI)
}

pub fn lambda_upper_bound_with(
    rec: &ExperimentRecord,
    rc: f64,
    spec: &QuadratureSpec,
    c: &PhysicalConstants,
) -> Result<BoundPoint, ExclusionError> {
    rec.validate()?;
    let s = unit_signal(rec, rc, spec, c)?;
    bound_from_signal(rec, rc, s, c)
}

fn bound_from_signal(rec: &ExperimentRecord, rc: f64, s: Estimate, c: &PhysicalConstants) -> Result<BoundPoint, ExclusionError> {
    let lambda_ub = budget_in_spectrum_units(rec, c) / s.value;
    if !(s.value > 0.0 && lambda_ub.is_finite() && lambda_ub > 0.0) {
        return Err(ExclusionError::DegenerateBound { rc });
    }
    Ok(BoundPoint {
        lambda_ub,
        error_est: lambda_ub * s.relative_error(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PointStatus {
    Ok { lambda_ub: f64, error_est: f64 },
    /// The CSL signal vanishes: no bound at this rC.
    Degenerate,
    /// Quadrature ran out of evaluations; values are the best estimate.
    NonConverged { lambda_ub: f64, error_est: f64 },
    Failed { message: String },
}

impl PointStatus {
    pub fn label(&self) -> &'static str {
        match self {
            PointStatus::Ok { .. } => "ok",
            PointStatus::Degenerate => "degenerate",
            PointStatus::NonConverged { .. } => "nonconverged",
            PointStatus::Failed { .. } => "failed",
        }
    }

    /// The converged bound, if any.
    pub fn bound(&self) -> Option<f64> {
        match self {
            PointStatus::Ok { lambda_ub, .. } => Some(*lambda_ub),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub rc: f64,
    #[serde(flatten)]
    pub status: PointStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionCurve {
    pub experiment: String,
    pub points: Vec<CurvePoint>,
}

impl ExclusionCurve {
    pub fn rcs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.rc).collect()
    }

    /// Converged bounds; `None` at sentinel points.
    pub fn lambda_ub(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.status.bound()).collect()
    }

    pub fn count(&self, label: &str) -> usize {
        self.points.iter().filter(|p| p.status.label() == label).count()
    }
}

/// `per_decade` log-spaced points per decade from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, per_decade: u32) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && per_decade > 0);
    let decades = (hi / lo).log10();
    let n = (decades * f64::from(per_decade)).round() as usize;
    if n == 0 {
        return vec![lo];
    }
    (0..=n)
        .map(|i| lo * 10f64.powf(decades * i as f64 / n as f64))
        .collect()
}

/// 1e-9 … 1e-3 m, 50 points per decade.
pub fn default_rc_grid() -> Vec<f64> {
    log_grid(1e-9, 1e-3, 50)
}

/// λ bound at each rC of the grid. Per-point failures become sentinel
/// points; the scan itself only fails on an invalid record or grid.
pub fn exclusion_scan(rec: &ExperimentRecord, rcs: &[f64]) -> Result<ExclusionCurve, ExclusionError> {
    exclusion_scan_with(rec, rcs, &QuadratureSpec::default(), &PhysicalConstants::SI)
}

pub fn exclusion_scan_with(
    rec: &ExperimentRecord,
    rcs: &[f64],
    spec: &QuadratureSpec,
    c: &PhysicalConstants,
) -> Result<ExclusionCurve, ExclusionError> {
    rec.validate()?;
    spec.validate().map_err(CslError::from)?;
    if rcs.is_empty() || rcs.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(ExclusionError::InvalidRecord("rC grid must be non-empty, finite and positive".into()));
    }
    if rcs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ExclusionError::InvalidRecord("rC grid must be strictly increasing".into()));
    }
    let points = rcs
        .par_iter()
        .map(|&rc| {
            let status = match unit_signal(rec, rc, spec, c) {
                Ok(s) => match bound_from_signal(rec, rc, s, c) {
                    Ok(b) => PointStatus::Ok {
                        lambda_ub: b.lambda_ub,
                        error_est: b.error_est,
                    },
                    Err(_) => PointStatus::Degenerate,
                },
                Err(ExclusionError::Csl(CslError::Quadrature(q @ QuadError::NonConvergence { .. }))) => {
                    let best = q.best_estimate().unwrap_or_default();
                    match bound_from_signal(rec, rc, best, c) {
                        Ok(b) => PointStatus::NonConverged {
                            lambda_ub: b.lambda_ub,
                            error_est: b.error_est.min(f64::MAX),
                        },
                        Err(_) => PointStatus::Failed {
                            message: q.to_string(),
                        },
                    }
                }
                Err(e) => PointStatus::Failed { message: e.to_string() },
            };
            CurvePoint { rc, status }
        })
        .collect();
    Ok(ExclusionCurve {
        experiment: rec.name.clone(),
        points,
    })
}

/// Pointwise minimum of converged bounds over curves sharing one rC grid.
pub fn combine_exclusions(curves: &[ExclusionCurve]) -> Result<ExclusionCurve, ExclusionError> {
    let first = curves
        .first()
        .ok_or_else(|| ExclusionError::InvalidRecord("nothing to combine".into()))?;
    for c in &curves[1..] {
        let same = c.points.len() == first.points.len()
            && c
                .points
                .iter()
                .zip(&first.points)
                .all(|(a, b)| (a.rc - b.rc).abs() <= 1e-12 * b.rc.abs());
        if !same {
            return Err(ExclusionError::GridMismatch);
        }
    }
    let points = (0..first.points.len())
        .map(|i| {
            let best = curves
                .iter()
                .map(|c| &c.points[i])
                .filter(|p| p.status.bound().is_some())
                .min_by(|a, b| a.status.bound().unwrap().total_cmp(&b.status.bound().unwrap()));
            match best {
                Some(p) => CurvePoint {
                    rc: first.points[i].rc,
                    status: p.status.clone(),
                },
                None => first.points[i].clone(),
            }
        })
        .collect();
    let experiment = curves.iter().map(|c| c.experiment.as_str()).collect::<Vec<_>>().join("+");
    Ok(ExclusionCurve { experiment, points })
}
