//! Monte Carlo integration of the mechanical Langevin equations
//!
//! ```text
//! dx = (p/m) dt
//! dp = (−m ωm² x − γm p) dt + dW_thermal + dW_CSL
//! ```
//!
//! with white forces of double-sided spectra 2mγm kB T and S_FF. The step is
//! Euler–Maruyama applied in semi-implicit order (momentum first, position
//! from the new momentum), which keeps the undamped oscillator bounded.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::welch::Welch;
use super::{NoiseSpectrum, OptomechConfig, OptomechError, SpectrumKind};
use crate::constants::PhysicalConstants;
use crate::csl::{csl_force_spectrum_any, CollapseParams, ColoredNoiseModel};
use crate::geometry::MassGeometry;
use crate::quadrature::{neumaier_sum, QuadratureSpec};

fn default_record_every() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// s
    pub dt: f64,
    pub steps: u64,
    pub trajectories: u64,
    pub seed: u64,
    /// Keep every n-th step in recorded trajectories and ensemble moments.
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    /// Steps discarded before stationary averages and the spectrum.
    #[serde(default)]
    pub burn_in: u64,
    /// Welch segment length in samples; 0 disables the spectrum estimate.
    #[serde(default)]
    pub welch_segment: u64,
    /// Return the recorded (t, x, p) series of every trajectory.
    #[serde(default)]
    pub keep_trajectories: bool,
}

impl SimConfig {
    pub fn validate(&self, cfg: &OptomechConfig) -> Result<(), OptomechError> {
        let bad = |m: String| Err(OptomechError::InvalidConfig(m));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if self.dt * cfg.omega_m >= 0.1 {
            return bad(format!("dt*omega_m = {} must be below 0.1", self.dt * cfg.omega_m));
        }
        if self.steps == 0 || self.trajectories == 0 || self.record_every == 0 {
            return bad("steps, trajectories and record_every must be >= 1".into());
        }
        if self.burn_in >= self.steps {
            return bad(format!("burn_in ({}) must be below steps ({})", self.burn_in, self.steps));
        }
        if self.welch_segment != 0 && (self.welch_segment < 16 || self.welch_segment > self.steps - self.burn_in) {
            return bad(format!(
                "welch_segment must be 0 or within [16, steps - burn_in], got {}",
                self.welch_segment
            ));
        }
        Ok(())
    }
}

/// Recorded series of one trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Recording times, starting at t = 0.
    pub times: Vec<f64>,
    /// Ensemble ⟨x²⟩ at each recording time.
    pub mean_x2: Vec<f64>,
    /// Ensemble ⟨p²⟩ at each recording time.
    pub mean_p2: Vec<f64>,
    /// ⟨x²⟩ averaged over time after burn-in and over trajectories.
    pub stationary_x2: f64,
    /// Standard error of `stationary_x2` from the spread of per-trajectory means.
    pub stationary_x2_stderr: f64,
    pub stationary_p2: f64,
    pub stationary_p2_stderr: f64,
    /// Total white force spectrum driving the momentum, N²·s.
    pub force_spectrum: f64,
    /// Welch estimate of S_x(ω), double-sided, ω ≥ 0.
    pub spectrum: Option<NoiseSpectrum>,
    pub trajectories: Vec<Trajectory>,
}

struct TrajectoryOutput {
    x2: Vec<f64>,
    p2: Vec<f64>,
    mean_x2: f64,
    mean_p2: f64,
    psd: Option<(Vec<f64>, usize)>,
    record: Option<Trajectory>,
}

/// Characteristic |x| the dynamics can reach; used to flag blow-ups.
fn expected_spread(cfg: &OptomechConfig, s: f64, horizon: f64) -> f64 {
    let m2 = cfg.mass * cfg.mass;
    let mut var = s * horizon.powi(3) / (3.0 * m2);
    if cfg.gamma_m > 0.0 {
        var = var.max(s * horizon / (m2 * cfg.gamma_m * cfg.gamma_m));
        if cfg.omega_m > 0.0 {
            var = var.max(s / (2.0 * m2 * cfg.gamma_m * cfg.omega_m * cfg.omega_m));
        }
    }
    var.sqrt()
}

/// Integrate `sim.trajectories` independent trajectories from rest.
///
/// Trajectory `i` draws from the ChaCha8 stream `i` of `sim.seed`, so results
/// do not depend on how work is spread over threads.
pub fn simulate_langevin(
    cfg: &OptomechConfig,
    p: &CollapseParams,
    g: &MassGeometry,
    sim: &SimConfig,
) -> Result<SimResult, OptomechError> {
    simulate_langevin_with(cfg, p, g, sim, &QuadratureSpec::default(), &PhysicalConstants::SI)
}

pub fn simulate_langevin_with(
    cfg: &OptomechConfig,
    p: &CollapseParams,
    g: &MassGeometry,
    sim: &SimConfig,
    spec: &QuadratureSpec,
    c: &PhysicalConstants,
) -> Result<SimResult, OptomechError> {
    cfg.validate_mechanical()?;
    sim.validate(cfg)?;
    if !matches!(p.colored, None | Some(ColoredNoiseModel::White)) {
        return Err(OptomechError::InvalidConfig(
            "the Monte Carlo integrator supports white collapse noise only".into(),
        ));
    }
    let s_ff = csl_force_spectrum_any(g, p, spec, c)?.value;
    let s_total = 2.0 * cfg.mass * cfg.gamma_m * c.k_b * cfg.temperature + s_ff;
    let kick = (s_total * sim.dt).sqrt();
    let horizon = sim.dt * sim.steps as f64;
    let spread = expected_spread(cfg, s_total, horizon);
    let limit = 1e6 * spread;
    let welch = (sim.welch_segment > 0).then(|| Welch::new(sim.welch_segment as usize, sim.dt));
    let n_records = (sim.steps / sim.record_every + 1) as usize;
    let stationary_len = (sim.steps - sim.burn_in) as f64;
    let (m, w2, gamma, dt) = (cfg.mass, cfg.omega_m * cfg.omega_m, cfg.gamma_m, sim.dt);

    let run = |index: u64| -> Result<TrajectoryOutput, OptomechError> {
        let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
        rng.set_stream(index);
        let (mut x, mut mom) = (0.0f64, 0.0f64);
        let mut x2 = Vec::with_capacity(n_records);
        let mut p2 = Vec::with_capacity(n_records);
        let mut record = sim.keep_trajectories.then(Trajectory::default);
        let mut series = welch.as_ref().map(|_| Vec::with_capacity(stationary_len as usize));
        let (mut sum_x2, mut sum_p2) = (0.0, 0.0);
        let mut push = |step: u64, x: f64, mom: f64, x2: &mut Vec<f64>, p2: &mut Vec<f64>| {
            x2.push(x * x);
            p2.push(mom * mom);
            if let Some(r) = record.as_mut() {
                r.t.push(step as f64 * dt);
                r.x.push(x);
                r.p.push(mom);
            }
        };
        push(0, x, mom, &mut x2, &mut p2);
        for step in 1..=sim.steps {
            let noise: f64 = StandardNormal.sample(&mut rng);
            mom += (-m * w2 * x - gamma * mom) * dt + kick * noise;
            x += mom / m * dt;
            if !(x.abs() <= limit) {
                return Err(OptomechError::UnstableStep { trajectory: index, step });
            }
            if step > sim.burn_in {
                sum_x2 += x * x;
                sum_p2 += mom * mom;
                if let Some(s) = series.as_mut() {
                    s.push(x);
                }
            }
            if step % sim.record_every == 0 {
                push(step, x, mom, &mut x2, &mut p2);
            }
        }
        let psd = match (&welch, &series) {
            (Some(w), Some(s)) => Some(w.accumulate(s)),
            _ => None,
        };
        Ok(TrajectoryOutput {
            x2,
            p2,
            mean_x2: sum_x2 / stationary_len,
            mean_p2: sum_p2 / stationary_len,
            psd,
            record,
        })
    };

    let outputs: Vec<TrajectoryOutput> = (0..sim.trajectories)
        .into_par_iter()
        .map(run)
        .collect::<Result<Vec<_>, _>>()?;

    let n = outputs.len() as f64;
    let column_mean = |pick: &dyn Fn(&TrajectoryOutput) -> &Vec<f64>, i: usize| {
        neumaier_sum(outputs.iter().map(|o| pick(o)[i])) / n
    };
    let times: Vec<f64> = (0..n_records).map(|i| i as f64 * sim.record_every as f64 * dt).collect();
    let mean_x2 = (0..n_records).map(|i| column_mean(&|o| &o.x2, i)).collect();
    let mean_p2 = (0..n_records).map(|i| column_mean(&|o| &o.p2, i)).collect();
    let (stationary_x2, stationary_x2_stderr) = mean_and_stderr(outputs.iter().map(|o| o.mean_x2));
    let (stationary_p2, stationary_p2_stderr) = mean_and_stderr(outputs.iter().map(|o| o.mean_p2));

    let spectrum = welch.as_ref().map(|w| {
        let mut acc = vec![0.0; w.segment() / 2 + 1];
        let mut segments = 0usize;
        for o in &outputs {
            if let Some((psd, count)) = &o.psd {
                for (a, v) in acc.iter_mut().zip(psd) {
                    *a += v;
                }
                segments += count;
            }
        }
        NoiseSpectrum {
            omegas: w.omegas(),
            values: acc.iter().map(|a| a / segments.max(1) as f64).collect(),
            kind: SpectrumKind::Displacement,
        }
    });

    let trajectories = outputs.into_iter().filter_map(|o| o.record).collect();
    Ok(SimResult {
        times,
        mean_x2,
        mean_p2,
        stationary_x2,
        stationary_x2_stderr,
        stationary_p2,
        stationary_p2_stderr,
        force_spectrum: s_total,
        spectrum,
        trajectories,
    })
}

fn mean_and_stderr(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = neumaier_sum(v.iter().copied()) / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = neumaier_sum(v.iter().map(|x| (x - mean) * (x - mean))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Least-squares fit of y = A·tⁿ in log-log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
}

/// Fit over the points with t in [t_min, t_max] and y > 0.
pub fn fit_power_law(ts: &[f64], ys: &[f64], t_min: f64, t_max: f64) -> Option<PowerLawFit> {
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(ys)
        .filter(|(t, y)| **t >= t_min && **t <= t_max && **t > 0.0 && **y > 0.0)
        .map(|(t, y)| (t.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let exponent = sxy / sxx;
    Some(PowerLawFit {
        exponent,
        prefactor: (my - exponent * mx).exp(),
    })
}

/// Least-squares C in y = C·t³ over t in [t_min, t_max].
pub fn fit_cubic_coefficient(ts: &[f64], ys: &[f64], t_min: f64, t_max: f64) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (t, y) in ts.iter().zip(ys) {
        if *t >= t_min && *t <= t_max {
            num += y * t.powi(3);
            den += t.powi(6);
        }
    }
    (den > 0.0).then(|| num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(trajectories: u64, steps: u64) -> SimConfig {
        SimConfig {
            dt: 1e-3,
            steps,
            trajectories,
            seed: 7,
            record_every: 1,
            burn_in: 0,
            welch_segment: 0,
            keep_trajectories: false,
        }
    }

    #[test]
    fn zero_noise_stays_at_rest() {
        let cfg = OptomechConfig::mechanical(1.0, 10.0, 1.0, 0.0);
        let r = simulate_langevin(&cfg, &CollapseParams::new(0.0, 1e-7), &MassGeometry::Point { mass: 1.0 }, &sim(3, 100))
            .unwrap();
        assert!(r.mean_x2.iter().all(|v| *v == 0.0));
        assert_eq!(r.times.len(), 101);
    }

    #[test]
    fn seed_determinism_and_thread_independence() {
        let cfg = OptomechConfig::mechanical(1e-15, 50.0, 5.0, 1.0);
        let g = MassGeometry::Point { mass: 1e-15 };
        let p = CollapseParams::new(0.0, 1e-7);
        let s = sim(16, 500);
        let a = simulate_langevin(&cfg, &p, &g, &s).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate_langevin(&cfg, &p, &g, &s).unwrap());
        assert_eq!(a.mean_x2, b.mean_x2);
        let mut other = s;
        other.seed = 8;
        let c = simulate_langevin(&cfg, &p, &g, &other).unwrap();
        assert_ne!(a.mean_x2, c.mean_x2);
    }

    #[test]
    fn dt_guard_and_colored_rejection() {
        let cfg = OptomechConfig::mechanical(1.0, 200.0, 1.0, 1.0);
        let g = MassGeometry::Point { mass: 1.0 };
        assert!(simulate_langevin(&cfg, &CollapseParams::new(0.0, 1e-7), &g, &sim(1, 10)).is_err());
        let ok = OptomechConfig::mechanical(1.0, 10.0, 1.0, 1.0);
        let mut p = CollapseParams::new(1e-16, 1e-7);
        p.colored = Some(ColoredNoiseModel::LorentzianCutoff { omega_c: 1.0 });
        assert!(simulate_langevin(&ok, &p, &g, &sim(1, 10)).is_err());
    }

    #[test]
    fn power_law_fit_recovers_exponent() {
        let ts: Vec<f64> = (1..50).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.5 * t.powi(3)).collect();
        let f = fit_power_law(&ts, &ys, 0.0, 10.0).unwrap();
        assert!((f.exponent - 3.0).abs() < 1e-12);
        assert!((f.prefactor - 2.5).abs() < 1e-12);
        assert!((fit_cubic_coefficient(&ts, &ys, 0.0, 10.0).unwrap() - 2.5).abs() < 1e-12);
    }
}
