//! Displacement noise of a mechanical oscillator read out through a driven
//! cavity, and a Langevin Monte Carlo check of the mechanical part.

pub mod langevin;
pub mod trajectory;
pub mod welch;

pub use langevin::{
    fit_cubic_coefficient, fit_power_law, simulate_langevin, simulate_langevin_with, PowerLawFit, SimConfig, SimResult,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::PhysicalConstants;
use crate::csl::{csl_force_spectrum_any, csl_temperature_shift_with, CollapseParams, CslError};
use crate::geometry::MassGeometry;
use crate::quadrature::QuadratureSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptomechError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("effective damping {gamma_eff:e} 1/s is not positive at omega = {omega:e} rad/s (optical anti-damping)")]
    NonPositiveDamping { omega: f64, gamma_eff: f64 },
    #[error("negative spectral density {value:e} at omega = {omega:e} rad/s; the effective-mechanics model is broken")]
    NegativeSpectrum { omega: f64, value: f64 },
    #[error("trajectory {trajectory} left the expected range at step {step}; reduce dt")]
    UnstableStep { trajectory: u64, step: u64 },
    #[error(transparent)]
    Csl(#[from] CslError),
}

/// Mechanical and optical parameters of the readout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptomechConfig {
    /// kg
    pub mass: f64,
    /// rad/s
    pub omega_m: f64,
    /// 1/s
    pub gamma_m: f64,
    /// K
    pub temperature: f64,
    /// Cavity dissipation, 1/s.
    pub kappa: f64,
    /// Laser-cavity detuning, rad/s.
    pub delta: f64,
    /// Optomechanical coupling, rad/(s·m).
    pub chi: f64,
    /// Intracavity photon number |α|².
    pub alpha_sq: f64,
}

fn require(ok: bool, msg: impl FnOnce() -> String) -> Result<(), OptomechError> {
    if ok {
        Ok(())
    } else {
        Err(OptomechError::InvalidConfig(msg()))
    }
}

impl OptomechConfig {
    /// A bare oscillator with the cavity switched off.
    pub fn mechanical(mass: f64, omega_m: f64, gamma_m: f64, temperature: f64) -> Self {
        Self {
            mass,
            omega_m,
            gamma_m,
            temperature,
            kappa: 1.0,
            delta: 0.0,
            chi: 0.0,
            alpha_sq: 0.0,
        }
    }

    /// Requirements of the mechanical equations of motion alone.
    pub fn validate_mechanical(&self) -> Result<(), OptomechError> {
        require(self.mass.is_finite() && self.mass > 0.0, || format!("mass must be > 0, got {}", self.mass))?;
        require(self.omega_m.is_finite() && self.omega_m >= 0.0, || {
            format!("omega_m must be >= 0, got {}", self.omega_m)
        })?;
        require(self.gamma_m.is_finite() && self.gamma_m >= 0.0, || {
            format!("gamma_m must be >= 0, got {}", self.gamma_m)
        })?;
        require(self.temperature.is_finite() && self.temperature >= 0.0, || {
            format!("temperature must be >= 0, got {}", self.temperature)
        })
    }

    pub fn validate(&self) -> Result<(), OptomechError> {
        self.validate_mechanical()?;
        require(self.omega_m > 0.0, || format!("omega_m must be > 0, got {}", self.omega_m))?;
        require(self.kappa.is_finite() && self.kappa > 0.0, || format!("kappa must be > 0, got {}", self.kappa))?;
        require(self.delta.is_finite(), || "delta must be finite".into())?;
        require(self.chi.is_finite(), || "chi must be finite".into())?;
        require(self.alpha_sq.is_finite() && self.alpha_sq >= 0.0, || {
            format!("alpha_sq must be >= 0, got {}", self.alpha_sq)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    Displacement,
    Force,
    Torque,
}

impl SpectrumKind {
    pub fn unit(&self) -> &'static str {
        match self {
            SpectrumKind::Displacement => "m^2*s",
            SpectrumKind::Force => "N^2*s",
            SpectrumKind::Torque => "N^2*m^2*s",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpectrum {
    /// rad/s, strictly increasing.
    pub omegas: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: SpectrumKind,
}

impl NoiseSpectrum {
    /// Same spectrum on the one-sided convention (twice the double-sided value).
    pub fn one_sided(&self) -> NoiseSpectrum {
        NoiseSpectrum {
            omegas: self.omegas.clone(),
            values: self.values.iter().map(|v| 2.0 * v).collect(),
            kind: self.kind,
        }
    }
}

/// Optically modified mechanical response: ω_eff²(ω) and γ_eff(ω).
pub trait EffectiveMechanics: Sync {
    fn omega_eff_sq(&self, cfg: &OptomechConfig, omega: f64, c: &PhysicalConstants) -> f64;
    fn gamma_eff(&self, cfg: &OptomechConfig, omega: f64, c: &PhysicalConstants) -> f64;
}

/// Linearised optomechanics with D(ω) = [κ² + (ω − Δ)²][κ² + (ω + Δ)²]:
///
/// ```text
/// ω_eff² = ωm² − 2ħχ²|α|²Δ(κ² + Δ² − ω²)/(m D)
/// γ_eff  = γm + 4ħχ²|α|²Δκ/(m D)
/// ```
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearizedOptomechanics;

fn cavity_denominator(cfg: &OptomechConfig, omega: f64) -> f64 {
    let k2 = cfg.kappa * cfg.kappa;
    (k2 + (omega - cfg.delta).powi(2)) * (k2 + (omega + cfg.delta).powi(2))
}

impl EffectiveMechanics for LinearizedOptomechanics {
    fn omega_eff_sq(&self, cfg: &OptomechConfig, omega: f64, c: &PhysicalConstants) -> f64 {
        let drive = c.hbar * cfg.chi * cfg.chi * cfg.alpha_sq * cfg.delta;
        if drive == 0.0 {
            return cfg.omega_m * cfg.omega_m;
        }
        let d = cavity_denominator(cfg, omega);
        cfg.omega_m * cfg.omega_m
            - 2.0 * drive * (cfg.kappa * cfg.kappa + cfg.delta * cfg.delta - omega * omega) / (cfg.mass * d)
    }

    fn gamma_eff(&self, cfg: &OptomechConfig, omega: f64, c: &PhysicalConstants) -> f64 {
        let drive = c.hbar * cfg.chi * cfg.chi * cfg.alpha_sq * cfg.delta;
        if drive == 0.0 {
            return cfg.gamma_m;
        }
        cfg.gamma_m + 4.0 * drive * cfg.kappa / (cfg.mass * cavity_denominator(cfg, omega))
    }
}

/// ħ m γ ω coth(ħω/2kBT), the symmetrised thermal force spectrum, evaluated
/// stably at T = 0 and in the classical limit.
pub fn thermal_force_spectrum(mass: f64, gamma: f64, omega: f64, temperature: f64, c: &PhysicalConstants) -> f64 {
    let w = omega.abs();
    let quantum = c.hbar * w;
    let energy = if temperature == 0.0 {
        quantum
    } else {
        let x = quantum / (2.0 * c.k_b * temperature);
        if x < 1e-3 {
            // x coth x = 1 + x²/3 − x⁴/45 + …
            let x2 = x * x;
            2.0 * c.k_b * temperature * (1.0 + x2 / 3.0 - x2 * x2 / 45.0)
        } else if x > 20.0 {
            quantum
        } else {
            quantum / x.tanh()
        }
    };
    mass * gamma * energy
}

/// The three additive contributions to S_x(ω) and their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnsComponents {
    pub omegas: Vec<f64>,
    pub backaction: Vec<f64>,
    pub thermal: Vec<f64>,
    pub csl: Vec<f64>,
    pub total: Vec<f64>,
    /// White CSL force spectrum used for the CSL term, N²·s.
    pub s_ff: f64,
}

impl DnsComponents {
    pub fn spectrum(&self) -> NoiseSpectrum {
        NoiseSpectrum {
            omegas: self.omegas.clone(),
            values: self.total.clone(),
            kind: SpectrumKind::Displacement,
        }
    }
}

pub fn validate_grid(omegas: &[f64]) -> Result<(), OptomechError> {
    require(!omegas.is_empty(), || "frequency grid is empty".into())?;
    require(omegas.iter().all(|w| w.is_finite()), || "frequency grid has non-finite entries".into())?;
    require(omegas.windows(2).all(|w| w[1] > w[0]), || {
        "frequency grid must be strictly increasing".into()
    })
}

/// S_x(ω) with the default effective mechanics, SI constants and default
/// quadrature settings.
pub fn displacement_dns(
    cfg: &OptomechConfig,
    p: &CollapseParams,
    g: &MassGeometry,
    omegas: &[f64],
) -> Result<NoiseSpectrum, OptomechError> {
    let c = PhysicalConstants::SI;
    let s_ff = csl_force_spectrum_any(g, p, &QuadratureSpec::default(), &c)?.value;
    Ok(dns_components(cfg, s_ff, p, omegas, &LinearizedOptomechanics, &c)?.spectrum())
}

/// S_x(ω) split into its backaction, thermal and CSL parts, given a
/// precomputed white CSL force spectrum `s_ff`.
pub fn dns_components(
    cfg: &OptomechConfig,
    s_ff: f64,
    p: &CollapseParams,
    omegas: &[f64],
    model: &dyn EffectiveMechanics,
    c: &PhysicalConstants,
) -> Result<DnsComponents, OptomechError> {
    cfg.validate()?;
    validate_grid(omegas)?;
    let m2 = cfg.mass * cfg.mass;
    let n = omegas.len();
    let mut out = DnsComponents {
        omegas: omegas.to_vec(),
        backaction: Vec::with_capacity(n),
        thermal: Vec::with_capacity(n),
        csl: Vec::with_capacity(n),
        total: Vec::with_capacity(n),
        s_ff,
    };
    for &w in omegas {
        let gamma = model.gamma_eff(cfg, w, c);
        if !(gamma > 0.0) {
            return Err(OptomechError::NonPositiveDamping { omega: w, gamma_eff: gamma });
        }
        let d2 = (model.omega_eff_sq(cfg, w, c) - w * w).powi(2) + gamma * gamma * w * w;
        let backaction = 2.0 * c.hbar * c.hbar * cfg.alpha_sq * cfg.kappa * cfg.chi * cfg.chi
            / (m2 * (cfg.kappa * cfg.kappa + (cfg.delta - w).powi(2)) * d2);
        let thermal = thermal_force_spectrum(cfg.mass, cfg.gamma_m, w, cfg.temperature, c) / (m2 * d2);
        let csl = s_ff * p.filter(w.abs()) / (m2 * d2);
        let total = backaction + thermal + csl;
        if !(total >= 0.0) {
            return Err(OptomechError::NegativeSpectrum { omega: w, value: total });
        }
        out.backaction.push(backaction);
        out.thermal.push(thermal);
        out.csl.push(csl);
        out.total.push(total);
    }
    Ok(out)
}

/// The force-noise numerator at `omega`, exactly (coth form plus CSL) and in
/// the high-temperature limit 2mγm kB(T + ΔT_CSL).
pub fn high_temperature_limit_check(
    cfg: &OptomechConfig,
    p: &CollapseParams,
    g: &MassGeometry,
    omega: f64,
) -> Result<(f64, f64), OptomechError> {
    let c = PhysicalConstants::SI;
    let s_ff = csl_force_spectrum_any(g, p, &QuadratureSpec::default(), &c)?.value;
    high_temperature_limit_from_sff(cfg, s_ff, p, omega, &c)
}

pub fn high_temperature_limit_from_sff(
    cfg: &OptomechConfig,
    s_ff: f64,
    p: &CollapseParams,
    omega: f64,
    c: &PhysicalConstants,
) -> Result<(f64, f64), OptomechError> {
    cfg.validate()?;
    require(cfg.temperature > 0.0 && cfg.gamma_m > 0.0, || {
        "the high-temperature limit needs T > 0 and gamma_m > 0".into()
    })?;
    let x = c.hbar * omega.abs() / (2.0 * c.k_b * cfg.temperature);
    require(x < 1e-3, || format!("hbar*omega/(2 kB T) = {x:e} is not below 1e-3"))?;
    let s = s_ff * p.filter(omega.abs());
    let exact = thermal_force_spectrum(cfg.mass, cfg.gamma_m, omega, cfg.temperature, c) + s;
    let dt = csl_temperature_shift_with(s, cfg.mass, cfg.gamma_m, c)?;
    let limit = 2.0 * cfg.mass * cfg.gamma_m * c.k_b * (cfg.temperature + dt);
    Ok((exact, limit))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SI: PhysicalConstants = PhysicalConstants::SI;

    fn driven() -> OptomechConfig {
        OptomechConfig {
            mass: 1e-12,
            omega_m: 2.0 * std::f64::consts::PI * 1e4,
            gamma_m: 10.0,
            temperature: 1.0,
            kappa: 1e6,
            delta: -5e5,
            chi: 1e15,
            alpha_sq: 1e4,
        }
    }

    #[test]
    fn uncoupled_mechanics_are_bare() {
        let mut cfg = driven();
        cfg.chi = 0.0;
        let m = LinearizedOptomechanics;
        assert_eq!(m.omega_eff_sq(&cfg, 3.0, &SI), cfg.omega_m * cfg.omega_m);
        assert_eq!(m.gamma_eff(&cfg, 3.0, &SI), cfg.gamma_m);
    }

    #[test]
    fn resonance_value_high_temperature() {
        let mut cfg = driven();
        cfg.chi = 0.0;
        cfg.temperature = 300.0;
        let w = cfg.omega_m;
        let d = dns_components(&cfg, 0.0, &CollapseParams::new(0.0, 1e-7), &[w], &LinearizedOptomechanics, &SI).unwrap();
        let expected = 2.0 * SI.k_b * cfg.temperature / (cfg.mass * cfg.gamma_m * w * w);
        assert!((d.total[0] / expected - 1.0).abs() < 1e-8);
        assert_eq!(d.backaction[0], 0.0);
    }

    #[test]
    fn sign_of_detuning_sets_sign_of_optical_damping() {
        let m = LinearizedOptomechanics;
        let mut cfg = driven();
        cfg.delta = 5e5;
        assert!(m.gamma_eff(&cfg, cfg.omega_m, &SI) > cfg.gamma_m);
        cfg.delta = -5e5;
        assert!(m.gamma_eff(&cfg, cfg.omega_m, &SI) < cfg.gamma_m);
        cfg.alpha_sq = 1e12;
        let r = dns_components(&cfg, 0.0, &CollapseParams::new(0.0, 1e-7), &[cfg.omega_m], &m, &SI);
        assert!(matches!(r, Err(OptomechError::NonPositiveDamping { .. })));
    }

    #[test]
    fn thermal_spectrum_limits() {
        let w = 1e3;
        assert_eq!(thermal_force_spectrum(2.0, 3.0, w, 0.0, &SI), 6.0 * SI.hbar * w);
        let hot = thermal_force_spectrum(2.0, 3.0, w, 300.0, &SI);
        assert!((hot / (2.0 * 6.0 * SI.k_b * 300.0) - 1.0).abs() < 1e-12);
        // Mid-range uses the closed form; continuity with the series at x = 1e-3.
        let t = SI.hbar * w / (2.0 * SI.k_b * 1e-3);
        let a = thermal_force_spectrum(1.0, 1.0, w, t * (1.0 + 1e-9), &SI);
        let b = thermal_force_spectrum(1.0, 1.0, w, t * (1.0 - 1e-9), &SI);
        assert!((a / b - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_grid() {
        let cfg = driven();
        let p = CollapseParams::new(0.0, 1e-7);
        for grid in [vec![], vec![2.0, 1.0], vec![1.0, f64::NAN]] {
            assert!(dns_components(&cfg, 0.0, &p, &grid, &LinearizedOptomechanics, &SI).is_err());
        }
    }
}
