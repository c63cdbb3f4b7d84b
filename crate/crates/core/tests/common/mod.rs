//! Independent oracles shared by the integration and acceptance tests.
//!
//! Nothing here calls into the library's numerics: constants are retyped,
//! bodies are discretised on a lattice and the CSL pair kernel is summed in
//! real space.

#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub const HBAR: f64 = 1.054_571_817e-34;
pub const M0: f64 = 1.672_62e-27;
pub const KB: f64 = 1.380_649e-23;
pub const YEAR: f64 = 3.155_76e7;

/// ħ²λm²/(2m0²rC²).
pub fn point_mass_sff(mass: f64, lambda: f64, rc: f64) -> f64 {
    HBAR * HBAR * lambda * mass * mass / (2.0 * M0 * M0 * rc * rc)
}

#[derive(Debug, Clone, Copy)]
pub enum Shape {
    Sphere { mass: f64, radius: f64 },
    Cuboid { mass: f64, lx: f64, ly: f64, lz: f64 },
    /// Symmetry axis along z.
    Cylinder { mass: f64, radius: f64, length: f64 },
}

impl Shape {
    pub fn mass(&self) -> f64 {
        match *self {
            Shape::Sphere { mass, .. } | Shape::Cuboid { mass, .. } | Shape::Cylinder { mass, .. } => mass,
        }
    }

    pub fn extent(&self) -> [f64; 3] {
        match *self {
            Shape::Sphere { radius, .. } => [2.0 * radius; 3],
            Shape::Cuboid { lx, ly, lz, .. } => [lx, ly, lz],
            Shape::Cylinder { radius, length, .. } => [2.0 * radius, 2.0 * radius, length],
        }
    }

    /// Largest extent.
    pub fn size(&self) -> f64 {
        self.extent().iter().copied().fold(0.0, f64::max)
    }

    fn contains(&self, p: [f64; 3]) -> bool {
        match *self {
            Shape::Sphere { radius, .. } => p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= radius * radius,
            Shape::Cuboid { .. } => true,
            Shape::Cylinder { radius, length, .. } => {
                p[0] * p[0] + p[1] * p[1] <= radius * radius && p[2].abs() <= 0.5 * length
            }
        }
    }
}

/// Cell-centred lattice over the bounding box; each weight is the cell's
/// mass, from the fraction of `sub³` sample points inside the body.
pub struct Lattice {
    pub n: usize,
    pub h: [f64; 3],
    pub weights: Vec<f64>,
}

impl Lattice {
    pub fn new(shape: &Shape, n: usize, sub: usize) -> Self {
        let ext = shape.extent();
        let h = ext.map(|e| e / n as f64);
        let mut weights = vec![0.0; n * n * n];
        let coord = |i: usize, s: usize, axis: usize| {
            -0.5 * ext[axis] + (i as f64 + (s as f64 + 0.5) / sub as f64) * h[axis]
        };
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut inside = 0usize;
                    for a in 0..sub {
                        for b in 0..sub {
                            for c in 0..sub {
                                if shape.contains([coord(i, a, 0), coord(j, b, 1), coord(k, c, 2)]) {
                                    inside += 1;
                                }
                            }
                        }
                    }
                    weights[(i * n + j) * n + k] = inside as f64;
                }
            }
        }
        let total: f64 = weights.iter().sum();
        let scale = shape.mass() / total;
        weights.iter_mut().for_each(|w| *w *= scale);
        Self { n, h, weights }
    }

    pub fn position(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let c = |idx: usize, axis: usize| (idx as f64 + 0.5 - 0.5 * self.n as f64) * self.h[axis];
        [c(i, 0), c(j, 1), c(k, 2)]
    }

    /// Non-empty cells as (position, mass).
    pub fn points(&self) -> Vec<([f64; 3], f64)> {
        let n = self.n;
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let w = self.weights[(i * n + j) * n + k];
                    if w > 0.0 {
                        out.push((self.position(i, j, k), w));
                    }
                }
            }
        }
        out
    }

    /// Σ_ij w_i w_j K(r_i − r_j) with the real-space CSL force kernel
    /// K(r) ∝ (1 − x²/2rC²) e^{−r²/4rC²}/(2rC²), normalised so that the
    /// result is S_FF along x. The kernel factorises over axes, so the sum is
    /// three one-dimensional convolutions.
    pub fn force_spectrum(&self, lambda: f64, rc: f64) -> f64 {
        let n = self.n;
        let g = |d: f64| (-d * d / (4.0 * rc * rc)).exp();
        let kx: Vec<f64> = (0..n)
            .map(|d| {
                let x = d as f64 * self.h[0];
                (1.0 - x * x / (2.0 * rc * rc)) * g(x)
            })
            .collect();
        let ky: Vec<f64> = (0..n).map(|d| g(d as f64 * self.h[1])).collect();
        let kz: Vec<f64> = (0..n).map(|d| g(d as f64 * self.h[2])).collect();
        let idx = |i: usize, j: usize, k: usize| (i * n + j) * n + k;
        let mut a = self.weights.clone();
        let mut b = vec![0.0; n * n * n];
        // Convolve along z, then y, then x.
        for (axis, kern) in [(2, &kz), (1, &ky), (0, &kx)] {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let mut s = 0.0;
                        for t in 0..n {
                            let (src, d) = match axis {
                                2 => (idx(i, j, t), k.abs_diff(t)),
                                1 => (idx(i, t, k), j.abs_diff(t)),
                                _ => (idx(t, j, k), i.abs_diff(t)),
                            };
                            s += kern[d] * a[src];
                        }
                        b[idx(i, j, k)] = s;
                    }
                }
            }
            std::mem::swap(&mut a, &mut b);
        }
        let sum: f64 = self.weights.iter().zip(&a).map(|(w, c)| w * c).sum();
        HBAR * HBAR * lambda / (M0 * M0) * sum / (2.0 * rc * rc)
    }

    /// Σ w e^{ik·r}.
    pub fn form_factor(&self, k: [f64; 3]) -> (f64, f64) {
        let (mut re, mut im) = (0.0, 0.0);
        for (p, w) in self.points() {
            let phase = k[0] * p[0] + k[1] * p[1] + k[2] * p[2];
            re += w * phase.cos();
            im += w * phase.sin();
        }
        (re, im)
    }
}

/// Pairwise version of [`Lattice::force_spectrum`] for arbitrary points.
pub fn pair_force_spectrum(points: &[([f64; 3], f64)], lambda: f64, rc: f64) -> f64 {
    let mut sum = 0.0;
    for (ri, wi) in points {
        for (rj, wj) in points {
            let d = [ri[0] - rj[0], ri[1] - rj[1], ri[2] - rj[2]];
            let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            sum += wi * wj * (1.0 - d[0] * d[0] / (2.0 * rc * rc)) * (-r2 / (4.0 * rc * rc)).exp();
        }
    }
    HBAR * HBAR * lambda / (M0 * M0) * sum / (2.0 * rc * rc)
}

pub fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cslbounds"))
        .args(args)
        .env_remove("CSLBOUNDS_THREADS")
        .output()
        .expect("run cslbounds")
}

pub fn cli_in(dir: &Path, config: &str, command: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("config.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let mut args = vec![command, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    cli(&args)
}

/// Rows of a CSV written by the tool, header skipped.
pub fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

pub fn relative(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}
