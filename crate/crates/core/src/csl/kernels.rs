//! The bare k-space integrals behind the CSL spectra, per geometry:
//!
//! * force:  `∫ |μ̃(k)|² e^{−k²rC²} k_x² d³k`
//! * cross:  `∫ |μ̃(k)|² e^{−k²rC²} k_x² cos(a k_x) d³k` (two-body coupling)
//! * torque: `∫ |k_y ∂_{k_z}μ̃ − k_z ∂_{k_y}μ̃|² e^{−k²rC²} d³k`
//!
//! Bodies whose |μ̃|² factorises (cuboid, cylinder, multilayer) are reduced to
//! products of one-dimensional integrals; the rest go through the spherical
//! routes of the quadrature module.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::pair_kernel::{force_pair_sum, torque_pair_sum, WeightedPoint};
use super::CslError;
use crate::geometry::{
    disc_profile, disc_profile_prime, dot, form_factor, normalize,
    sinc, sinc_prime, sphere_profile, MassGeometry, Multilayer,
};
use crate::quadrature::{
    integrate_k3_with, integrate_line_even, integrate_planar_radial, Estimate, KHints, KIntegrand,
    QuadratureSpec, Vec3,
};

const X_HAT: Vec3 = [1.0, 0.0, 0.0];

// Each factor of a product gets a share of the requested tolerance.
fn factor_spec(spec: &QuadratureSpec, factors: usize) -> QuadratureSpec {
    spec.with_rel_tol(spec.rel_tol / (factors as f64 + 1.0))
}

/// Extra factor along k_x: none, the two-body cross term cos(a k_x), or the
/// self-minus-cross combination 1 − cos(a k_x) = 2 sin²(a k_x/2).
#[derive(Debug, Clone, Copy, PartialEq)]
enum Coupling {
    None,
    Cos(f64),
    OneMinusCos(f64),
}

impl Coupling {
    fn at(self, k: f64) -> f64 {
        match self {
            Coupling::None => 1.0,
            Coupling::Cos(a) => (a * k).cos(),
            Coupling::OneMinusCos(a) => {
                let s = (0.5 * a * k).sin();
                2.0 * s * s
            }
        }
    }

    fn separation(self) -> f64 {
        match self {
            Coupling::None => 0.0,
            Coupling::Cos(a) | Coupling::OneMinusCos(a) => a,
        }
    }

    fn is_none(self) -> bool {
        self == Coupling::None
    }
}

fn gauss(k: f64, rc: f64) -> f64 {
    (-k * k * rc * rc).exp()
}

fn lattice_points(g: &MassGeometry) -> Option<Vec<WeightedPoint>> {
    match g {
        MassGeometry::PointLattice { points } => Some(
            points
                .iter()
                .map(|p| WeightedPoint {
                    position: p.position,
                    weight: p.mass,
                })
                .collect(),
        ),
        _ => None,
    }
}

/// `∫ sinc²(kL/2) k^p e^{−k²rC²} dk` over the line, times the coupling.
///
/// With sinc²(kL/2) k² = 2(1 − cos kL)/L² every case used by the force
/// integrals is a sum of Gaussian integrals:
///
/// ```text
/// p = 0:         (2/L²)[πL erf(L/2rC) − 2√π rC (1 − e^{−L²/4rC²})]
/// p = 2:         (2√π/L²rC)(1 − e^{−L²/4rC²})
/// p = 2, cos ak: (2√π/L²rC)[e^{−a²/4rC²} − ½e^{−(a−L)²/4rC²} − ½e^{−(a+L)²/4rC²}]
/// ```
///
/// These stay exact when L ≫ rC, where the integrand oscillates too often
/// for quadrature. Anything else falls back to quadrature.
fn box_line(length: f64, power: i32, coupling: Coupling, rc: f64, spec: &QuadratureSpec) -> Result<Estimate, CslError> {
    let l = length;
    let q = |x: f64| -(-x * x / (4.0 * rc * rc)).exp_m1();
    let g = |x: f64| (-x * x / (4.0 * rc * rc)).exp();
    let c2 = 2.0 * PI.sqrt() / (l * l * rc);
    let closed = match (power, coupling) {
        (0, Coupling::None) => Some(2.0 / (l * l) * (PI * l * libm::erf(l / (2.0 * rc)) - 2.0 * PI.sqrt() * rc * q(l))),
        (2, Coupling::None) => Some(c2 * q(l)),
        (2, Coupling::Cos(a)) => Some(c2 * (g(a) - 0.5 * g(a - l) - 0.5 * g(a + l))),
        (2, Coupling::OneMinusCos(a)) => Some(c2 * (q(l) - g(a) + 0.5 * g(a - l) + 0.5 * g(a + l))),
        _ => None,
    };
    if let Some(v) = closed {
        return Ok(Estimate::new(v, v.abs() * 1e-14));
    }
    let f = |k: f64| {
        let s = sinc(0.5 * k * length);
        s * s * k.powi(power) * coupling.at(k) * gauss(k, rc)
    };
    Ok(integrate_line_even(&f, rc, spec, length.max(coupling.separation()))?)
}

/// Force integral with a coupling factor along k_x.
fn force_like(g: &MassGeometry, rc: f64, spec: &QuadratureSpec, coupling: Coupling) -> Result<Estimate, CslError> {
    let a = coupling.separation();
    match g {
        MassGeometry::Point { mass } => {
            if coupling.is_none() {
                let f = |k: f64| k * k / 3.0 * gauss(k, rc);
                Ok(integrate_k3_with(KIntegrand::Isotropic(&f), rc, spec, KHints::default())?.scale(mass * mass))
            } else {
                let s = factor_spec(spec, 2);
                let along = |k: f64| k * k * coupling.at(k) * gauss(k, rc);
                let x = integrate_line_even(&along, rc, &s, a)?;
                let plane = integrate_planar_radial(&|q: f64| gauss(q, rc), rc, &s, 0.0)?;
                Ok(x.mul(plane).scale(mass * mass))
            }
        }
        MassGeometry::Sphere { mass, radius } => {
            let m2 = mass * mass;
            if coupling.is_none() {
                let f = |k: f64| {
                    let ff = sphere_profile(k * radius);
                    ff * ff * k * k / 3.0 * gauss(k, rc)
                };
                let hints = KHints::with_length(2.0 * radius);
                Ok(integrate_k3_with(KIntegrand::Isotropic(&f), rc, spec, hints)?.scale(m2))
            } else {
                let f = |kx: f64, kp: f64| {
                    let k = (kx * kx + kp * kp).sqrt();
                    let ff = sphere_profile(k * radius);
                    ff * ff * kx * kx * coupling.at(kx) * gauss(k, rc)
                };
                let hints = KHints::with_length((2.0 * radius).max(a));
                Ok(integrate_k3_with(KIntegrand::Axial { axis: X_HAT, f: &f }, rc, spec, hints)?.scale(m2))
            }
        }
        MassGeometry::Cuboid { mass, lx, ly, lz } => {
            let s = factor_spec(spec, 3);
            let x = box_line(*lx, 2, coupling, rc, &s)?;
            let y = box_line(*ly, 0, Coupling::None, rc, &s)?;
            let z = box_line(*lz, 0, Coupling::None, rc, &s)?;
            Ok(x.mul(y).mul(z).scale(mass * mass))
        }
        MassGeometry::Cylinder {
            mass,
            radius,
            length,
            axis,
        } => cylinder_force(*mass, *radius, *length, normalize(*axis), rc, spec, coupling),
        MassGeometry::Multilayer(ml) => multilayer_force(g, ml, rc, spec, coupling),
        MassGeometry::PointLattice { .. } => {
            let pts = lattice_points(g).expect("lattice");
            let single = force_pair_sum(&pts, rc);
            if coupling.is_none() {
                return Ok(Estimate::exact(single));
            }
            // Cross term = Σ_ij w_i w_j K(r_i − r_j − a x̂), symmetrised.
            let mut both = pts.clone();
            both.extend(pts.iter().map(|p| WeightedPoint {
                position: [p.position[0] + a, p.position[1], p.position[2]],
                weight: p.weight,
            }));
            let cross = 0.5 * (force_pair_sum(&both, rc) - 2.0 * single);
            Ok(Estimate::exact(match coupling {
                Coupling::OneMinusCos(_) => single - cross,
                _ => cross,
            }))
        }
        MassGeometry::TwoBody { .. } => Err(CslError::TwoBodyNotAllowed),
    }
}

fn cylinder_force(
    mass: f64,
    radius: f64,
    length: f64,
    n: Vec3,
    rc: f64,
    spec: &QuadratureSpec,
    coupling: Coupling,
) -> Result<Estimate, CslError> {
    let m2 = mass * mass;
    let nx2 = n[0] * n[0];
    let axial_along_x = (1.0 - nx2) < 1e-12;
    if !coupling.is_none() {
        let a = coupling.separation();
        if !axial_along_x {
            let f = |k: Vec3| {
                let kp = dot(k, n);
                let kq = (dot(k, k) - kp * kp).max(0.0).sqrt();
                let ff = disc_profile(kq * radius) * sinc(0.5 * kp * length);
                ff * ff * k[0] * k[0] * coupling.at(k[0]) * gauss(1.0, rc * (dot(k, k)).sqrt())
            };
            let hints = KHints::with_length((4.0 * radius * radius + length * length).sqrt().max(a));
            return Ok(integrate_k3_with(KIntegrand::General(&f), rc, spec, hints)?.scale(m2));
        }
    }
    let s = factor_spec(spec, 2);
    let axial = |power: i32| {
        let f = |p: f64| {
            let g = sinc(0.5 * p * length);
            g * g * p.powi(power) * coupling.at(p) * gauss(p, rc)
        };
        integrate_line_even(&f, rc, &s, length.max(coupling.separation()))
    };
    let radial = |power: i32| {
        let f = |q: f64| {
            let d = disc_profile(q * radius);
            d * d * q.powi(power) * gauss(q, rc)
        };
        integrate_planar_radial(&f, rc, &s, 2.0 * radius)
    };
    let mut total = Estimate::ZERO;
    if nx2 > 0.0 {
        total = total.add(axial(2)?.mul(radial(0)?).scale(nx2));
    }
    if !axial_along_x {
        total = total.add(axial(0)?.mul(radial(2)?).scale(0.5 * (1.0 - nx2)));
    }
    Ok(total.scale(m2))
}

fn multilayer_force(
    g: &MassGeometry,
    ml: &Multilayer,
    rc: f64,
    spec: &QuadratureSpec,
    coupling: Coupling,
) -> Result<Estimate, CslError> {
    let frame = ml.frame();
    let weights = frame.map(|e| e[0] * e[0]);
    let aligned = weights.iter().position(|w| (w - 1.0).abs() < 1e-12);
    if let (false, None) = (coupling.is_none(), aligned) {
        let f = |k: Vec3| {
            let v = form_factor(g, k).map(|v| v.value.norm_sqr()).unwrap_or(0.0);
            v * k[0] * k[0] * coupling.at(k[0]) * gauss(1.0, rc * dot(k, k).sqrt())
        };
        let hints = KHints::with_length(g.bounding_diameter().max(coupling.separation()));
        return Ok(integrate_k3_with(KIntegrand::General(&f), rc, spec, hints)?);
    }
    let s = factor_spec(spec, 3);
    let h = ml.thickness();
    let lengths = [ml.lx, ml.ly, h];
    // |μ̃|² = [lx² sinc²][ly² sinc²]|C(k_s)|², each factor even.
    let factor = |axis: usize, power: i32, with_cos: bool| -> Result<Estimate, CslError> {
        let c = if with_cos { coupling } else { Coupling::None };
        let f = |k: f64| {
            let profile = match axis {
                0 => (ml.lx * sinc(0.5 * k * ml.lx)).powi(2),
                1 => (ml.ly * sinc(0.5 * k * ml.ly)).powi(2),
                _ => ml.stack_transform(k).norm_sqr(),
            };
            profile * k.powi(power) * c.at(k) * gauss(k, rc)
        };
        Ok(integrate_line_even(&f, rc, &s, lengths[axis].max(c.separation()))?)
    };
    let mut total = Estimate::ZERO;
    for (axis, &w) in weights.iter().enumerate() {
        if w < 1e-15 {
            continue;
        }
        let with_cos = !coupling.is_none();
        let mut term = Estimate::exact(w);
        for other in 0..3 {
            let power = if other == axis { 2 } else { 0 };
            term = term.mul(factor(other, power, with_cos && other == axis)?);
        }
        total = total.add(term);
    }
    Ok(total)
}

/// `∫ |μ̃|² e^{−k²rC²} k_x² d³k`.
pub(crate) fn force_integral(g: &MassGeometry, rc: f64, spec: &QuadratureSpec) -> Result<Estimate, CslError> {
    force_like(g, rc, spec, Coupling::None)
}

/// `∫ |μ̃|² e^{−k²rC²} k_x² cos(a k_x) d³k` for the unit of a two-body system.
///
/// When the units' x-supports are separated by a gap much larger than rC the
/// real-space form of this integral, a Gaussian-damped overlap, is bounded by
/// `e^{−gap²/4rC²}` and is returned as zero with that bound as its error.
pub(crate) fn cross_integral(unit: &MassGeometry, a: f64, rc: f64, spec: &QuadratureSpec) -> Result<Estimate, CslError> {
    let half = unit.support_half_width(X_HAT);
    let gap = a - 2.0 * half;
    if gap > 0.0 && gap * gap / (4.0 * rc * rc) > 40.0 {
        let m = unit.total_mass();
        let scale = PI.powf(1.5) / (2.0 * rc.powi(5));
        let bound = m * m * scale * (1.0 + gap * gap / (2.0 * rc * rc)) * (-gap * gap / (4.0 * rc * rc)).exp();
        return Ok(Estimate::new(0.0, bound));
    }
    force_like(unit, rc, spec, Coupling::Cos(a))
}

/// Self minus cross term, `∫ |μ̃|² e^{−k²rC²} k_x² (1 − cos(a k_x)) d³k`.
///
/// Integrating the difference directly keeps it accurate when the cross
/// term is a tiny oscillatory remainder that cannot meet a relative
/// tolerance on its own.
pub(crate) fn two_body_difference(unit: &MassGeometry, a: f64, rc: f64, spec: &QuadratureSpec) -> Result<Estimate, CslError> {
    let half = unit.support_half_width(X_HAT);
    let gap = a - 2.0 * half;
    if gap > 0.0 && gap * gap / (4.0 * rc * rc) > 40.0 {
        let cross = cross_integral(unit, a, rc, spec)?;
        let own = force_integral(unit, rc, spec)?;
        return Ok(Estimate::new(own.value, own.error + cross.error));
    }
    force_like(unit, rc, spec, Coupling::OneMinusCos(a))
}

type Factor<'a> = &'a dyn Fn(f64) -> (Complex64, Complex64);

/// Torque integral of μ̃ = F₀(κ₀)F₁(κ₁)F₂(κ₂) in a right-handed body frame,
/// each factor given with its derivative and satisfying F(−κ) = F(κ)*.
///
/// The x generator is Σ_a n_a L_a with L_a the generator about body axis a
/// and n_a² = `weights[a]`. Parity kills every L_a·L_b cross term, and
///
/// ```text
/// ∫|L_a μ̃|² = N0_a [N2_b D_c + D_b N2_c − 2 X_b X_c]
/// ```
///
/// with N0 = ∫|F|², N2 = ∫κ²|F|², D = ∫|F'|², X = ∫κ Re(F F'*), (a, b, c) cyclic.
fn separable_torque(
    factors: [Factor<'_>; 3],
    lengths: [f64; 3],
    weights: [f64; 3],
    rc: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate, CslError> {
    let s = factor_spec(spec, 6);
    let moments = |i: usize| -> Result<[Estimate; 4], CslError> {
        let f = factors[i];
        let line = |g: &dyn Fn(f64, Complex64, Complex64) -> f64| {
            let h = |k: f64| {
                let (v, d) = f(k);
                g(k, v, d) * gauss(k, rc)
            };
            integrate_line_even(&h, rc, &s, lengths[i])
        };
        Ok([
            line(&|_, v, _| v.norm_sqr())?,
            line(&|k, v, _| k * k * v.norm_sqr())?,
            line(&|_, _, d| d.norm_sqr())?,
            line(&|k, v, d| k * (v * d.conj()).re)?,
        ])
    };
    let mut cache: [Option<[Estimate; 4]>; 3] = [None; 3];
    let mut get = |i: usize| -> Result<[Estimate; 4], CslError> {
        if cache[i].is_none() {
            cache[i] = Some(moments(i)?);
        }
        Ok(cache[i].unwrap())
    };
    let mut total = Estimate::ZERO;
    for a in 0..3 {
        if weights[a] < 1e-15 {
            continue;
        }
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        let [n0, _, _, _] = get(a)?;
        let [_, n2b, db, xb] = get(b)?;
        let [_, n2c, dc, xc] = get(c)?;
        let bracket = n2b.mul(dc).add(db.mul(n2c)).add(xb.mul(xc).scale(-2.0));
        total = total.add(n0.mul(bracket).scale(weights[a]));
    }
    Ok(total)
}

/// `∫ |k_y ∂_{k_z}μ̃ − k_z ∂_{k_y}μ̃|² e^{−k²rC²} d³k`.
pub(crate) fn torque_integral(g: &MassGeometry, rc: f64, spec: &QuadratureSpec) -> Result<Estimate, CslError> {
    match g {
        // μ̃ depends on |k| only; the rotation generator annihilates it.
        MassGeometry::Point { .. } | MassGeometry::Sphere { .. } => Ok(Estimate::ZERO),
        MassGeometry::Cuboid { mass, lx, ly, lz } => {
            let edge = |l: f64| {
                move |k: f64| {
                    let h = 0.5 * l;
                    (Complex64::new(sinc(h * k), 0.0), Complex64::new(h * sinc_prime(h * k), 0.0))
                }
            };
            let (fx, fy, fz) = (edge(*lx), edge(*ly), edge(*lz));
            let t = separable_torque([&fx, &fy, &fz], [*lx, *ly, *lz], [1.0, 0.0, 0.0], rc, spec)?;
            Ok(t.scale(mass * mass))
        }
        MassGeometry::Cylinder {
            mass,
            radius,
            length,
            axis,
        } => {
            let n = normalize(*axis);
            let weight = 0.5 * (1.0 - n[0] * n[0]);
            if weight < 1e-15 {
                return Ok(Estimate::ZERO);
            }
            let s = factor_spec(spec, 6);
            let h = 0.5 * length;
            let axial = |f: &dyn Fn(f64, f64, f64) -> f64| {
                let g = |p: f64| f(p, sinc(h * p), h * sinc_prime(h * p)) * gauss(p, rc);
                integrate_line_even(&g, rc, &s, *length)
            };
            let radial = |f: &dyn Fn(f64, f64, f64) -> f64| {
                let g = |q: f64| f(q, disc_profile(q * radius), radius * disc_profile_prime(q * radius)) * gauss(q, rc);
                integrate_planar_radial(&g, rc, &s, 2.0 * radius)
            };
            // (−F'G p + F G' q)² expanded into separable products.
            let t1 = axial(&|p, g, _| g * g * p * p)?.mul(radial(&|_, _, fp| fp * fp)?);
            let t2 = axial(&|p, g, gp| g * gp * p)?.mul(radial(&|q, f, fp| f * fp * q)?);
            let t3 = axial(&|_, _, gp| gp * gp)?.mul(radial(&|q, f, _| f * f * q * q)?);
            Ok(t1.add(t2.scale(-2.0)).add(t3).scale(weight * mass * mass))
        }
        MassGeometry::PointLattice { .. } => {
            let pts = lattice_points(g).expect("lattice");
            Ok(Estimate::exact(torque_pair_sum(&pts, rc)))
        }
        MassGeometry::Multilayer(ml) => {
            let edge = |l: f64| {
                move |k: f64| {
                    let h = 0.5 * l;
                    (Complex64::new(l * sinc(h * k), 0.0), Complex64::new(l * h * sinc_prime(h * k), 0.0))
                }
            };
            let (fu, fv) = (edge(ml.lx), edge(ml.ly));
            let fs = |k: f64| (ml.stack_transform(k), ml.stack_transform_prime(k));
            // The x-axis generator in body coordinates.
            let weights = ml.frame().map(|e| e[0] * e[0]);
            separable_torque([&fu, &fv, &fs], [ml.lx, ml.ly, ml.thickness()], weights, rc, spec)
        }
        MassGeometry::TwoBody { .. } => Err(CslError::TwoBodyNotAllowed),
    }
}
