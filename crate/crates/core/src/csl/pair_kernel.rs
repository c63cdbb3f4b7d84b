//! Closed-form CSL sums over discrete point masses.
//!
//! Carrying the Gaussian k-integral analytically over point masses gives
//!
//! ```text
//! ∫ k_a k_b e^{ik·d} e^{−k²rC²} d³k = (π/rC²)^{3/2} e^{−d²/4rC²} [δ_ab/(2rC²) − d_a d_b/(4rC⁴)]
//! ```
//!
//! so every spectrum of a point lattice is a double sum over pairs. Rows are
//! summed in parallel and combined in index order, which keeps the result
//! independent of the thread count.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::quadrature::{neumaier_sum, Vec3};

/// A point mass with a possibly negative weight (differential configurations).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPoint {
    pub position: Vec3,
    pub weight: f64,
}

/// Σ_ij w_i w_j ∫ k_x² e^{ik·(r_i − r_j)} e^{−k²rC²} d³k, i.e. the force
/// k-integral of a point set.
pub fn force_pair_sum(points: &[WeightedPoint], rc: f64) -> f64 {
    let inv4 = 1.0 / (4.0 * rc * rc);
    let inv2 = 1.0 / (2.0 * rc * rc);
    let rows: Vec<f64> = points
        .par_iter()
        .enumerate()
        .map(|(i, pi)| {
            // Diagonal once, off-diagonal pairs twice (j > i).
            let mut row = 0.5 * pi.weight * pi.weight;
            let mut comp = 0.0;
            for pj in &points[i + 1..] {
                let dx = pi.position[0] - pj.position[0];
                let dy = pi.position[1] - pj.position[1];
                let dz = pi.position[2] - pj.position[2];
                let d2 = dx * dx + dy * dy + dz * dz;
                let term = pi.weight * pj.weight * (1.0 - dx * dx * inv2) * (-d2 * inv4).exp();
                // Kahan within the row
                let y = term - comp;
                let t = row + y;
                comp = (t - row) - y;
                row = t;
            }
            2.0 * row
        })
        .collect();
    PI.powf(1.5) / (2.0 * rc.powi(5)) * neumaier_sum(rows)
}

/// Σ_ij w_i w_j ∫ (A_i·k)(A_j·k) e^{ik·(r_i − r_j)} e^{−k²rC²} d³k with
/// lever vectors A = (0, z, −y): the torque k-integral about x.
pub fn torque_pair_sum(points: &[WeightedPoint], rc: f64) -> f64 {
    let inv4 = 1.0 / (4.0 * rc * rc);
    let inv2 = 1.0 / (2.0 * rc * rc);
    let lever = |p: &WeightedPoint| [0.0, p.position[2], -p.position[1]];
    let rows: Vec<f64> = points
        .par_iter()
        .enumerate()
        .map(|(i, pi)| {
            let ai = lever(pi);
            let self_term = pi.weight * pi.weight * inv2 * (ai[1] * ai[1] + ai[2] * ai[2]);
            let mut row = 0.5 * self_term;
            let mut comp = 0.0;
            for pj in &points[i + 1..] {
                let aj = lever(pj);
                let d = [
                    pi.position[0] - pj.position[0],
                    pi.position[1] - pj.position[1],
                    pi.position[2] - pj.position[2],
                ];
                let d2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                let ai_d = ai[1] * d[1] + ai[2] * d[2];
                let aj_d = aj[1] * d[1] + aj[2] * d[2];
                let ai_aj = ai[1] * aj[1] + ai[2] * aj[2];
                let m = inv2 * ai_aj - ai_d * aj_d * inv2 * inv2;
                let term = pi.weight * pj.weight * m * (-d2 * inv4).exp();
                let y = term - comp;
                let t = row + y;
                comp = (t - row) - y;
                row = t;
            }
            2.0 * row
        })
        .collect();
    PI.powf(1.5) / rc.powi(3) * neumaier_sum(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_matches_gaussian_moment() {
        let rc: f64 = 1e-7;
        let p = [WeightedPoint {
            position: [0.3e-7, 0.0, -1e-7],
            weight: 2.0,
        }];
        let exact = 4.0 * PI.powf(1.5) / (2.0 * rc.powi(5));
        assert!((force_pair_sum(&p, rc) - exact).abs() / exact < 1e-14);
    }

    #[test]
    fn point_on_rotation_axis_has_no_torque() {
        let p = [WeightedPoint {
            position: [5e-7, 0.0, 0.0],
            weight: 1.0,
        }];
        assert_eq!(torque_pair_sum(&p, 1e-7), 0.0);
    }

    #[test]
    fn opposite_weights_cancel_when_coincident() {
        let p = [
            WeightedPoint {
                position: [0.0; 3],
                weight: 1.0,
            },
            WeightedPoint {
                position: [0.0; 3],
                weight: -1.0,
            },
        ];
        assert!(force_pair_sum(&p, 1e-7).abs() < 1e-6 * PI.powf(1.5) / (2.0 * 1e-35));
    }
}
