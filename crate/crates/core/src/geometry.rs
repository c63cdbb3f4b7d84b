//! Rigid-body mass distributions and their Fourier-space form factors
//! `μ̃(k) = ∫ μ(x) e^{ik·x} d³x`, with every body centred on its centre of mass.

use num_complex::Complex64;
use thiserror::Error;

use crate::quadrature::{bessel_j1, bessel_jn, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid geometry: `{field}` {reason}")]
    Invalid { field: String, reason: String },
    #[error("a two-body geometry has no scalar form factor; use the pair kernel of its unit")]
    TwoBodyMisuse,
    #[error("two-body geometries cannot be nested")]
    NestedTwoBody,
}

fn invalid(field: &str, reason: impl Into<String>) -> GeometryError {
    GeometryError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticePoint {
    pub position: Vec3,
    pub mass: f64,
}

/// N alternating slabs of two materials, starting with material 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Multilayer {
    pub layer_count: u32,
    pub d1: f64,
    pub d2: f64,
    pub rho1: f64,
    pub rho2: f64,
    /// Cross-section edge along the first transverse axis.
    pub lx: f64,
    /// Cross-section edge along the second transverse axis.
    pub ly: f64,
    pub stacking_axis: Vec3,
}

/// One slab of a multilayer, positioned along the stacking axis relative to
/// the centre of mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slab {
    pub center: f64,
    pub thickness: f64,
    pub density: f64,
}

impl Multilayer {
    pub fn thickness(&self) -> f64 {
        (0..self.layer_count).map(|i| self.layer(i).0).sum()
    }

    fn layer(&self, i: u32) -> (f64, f64) {
        if i % 2 == 0 {
            (self.d1, self.rho1)
        } else {
            (self.d2, self.rho2)
        }
    }

    pub fn mass(&self) -> f64 {
        self.lx * self.ly * (0..self.layer_count).map(|i| self.layer(i)).map(|(d, rho)| d * rho).sum::<f64>()
    }

    pub fn slabs(&self) -> Vec<Slab> {
        let mut z = 0.0;
        let mut slabs = Vec::with_capacity(self.layer_count as usize);
        for i in 0..self.layer_count {
            let (d, rho) = self.layer(i);
            slabs.push(Slab {
                center: z + 0.5 * d,
                thickness: d,
                density: rho,
            });
            z += d;
        }
        let areal: f64 = slabs.iter().map(|s| s.density * s.thickness).sum();
        let com = slabs.iter().map(|s| s.density * s.thickness * s.center).sum::<f64>() / areal;
        for s in &mut slabs {
            s.center -= com;
        }
        slabs
    }

    /// Orthonormal body frame `(u, v, s)`: `s` is the stacking axis, `lx`
    /// runs along `u` and `ly` along `v`.
    pub fn frame(&self) -> [Vec3; 3] {
        orthonormal_frame(normalize(self.stacking_axis))
    }

    /// One-dimensional transform of the stack profile (per unit cross-section).
    pub fn stack_transform(&self, ks: f64) -> Complex64 {
        self.slabs()
            .iter()
            .map(|s| {
                Complex64::from_polar(s.density * s.thickness * sinc(0.5 * ks * s.thickness), ks * s.center)
            })
            .sum()
    }

    /// d/dk_s of [`Multilayer::stack_transform`].
    pub fn stack_transform_prime(&self, ks: f64) -> Complex64 {
        self.slabs()
            .iter()
            .map(|s| {
                let h = 0.5 * s.thickness;
                let amp = Complex64::new(h * sinc_prime(h * ks), s.center * sinc(h * ks));
                Complex64::from_polar(s.density * s.thickness, ks * s.center) * amp
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MassGeometry {
    Point {
        mass: f64,
    },
    Sphere {
        mass: f64,
        radius: f64,
    },
    /// Edges aligned with the x, y, z axes.
    Cuboid {
        mass: f64,
        lx: f64,
        ly: f64,
        lz: f64,
    },
    Cylinder {
        mass: f64,
        radius: f64,
        length: f64,
        axis: Vec3,
    },
    Multilayer(Multilayer),
    /// Point masses at fixed positions; rotations are taken about the origin.
    PointLattice {
        points: Vec<LatticePoint>,
    },
    /// Two copies of `unit` separated by `separation` along x.
    TwoBody {
        unit: Box<MassGeometry>,
        separation: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormFactorValue {
    /// μ̃(k) in kg.
    pub value: Complex64,
}

fn positive(field: &str, v: f64) -> Result<(), GeometryError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and > 0, got {v}")))
    }
}

fn unit_axis(field: &str, a: Vec3) -> Result<(), GeometryError> {
    let n = norm(a);
    if !(n.is_finite() && n > 0.0) {
        return Err(invalid(field, "must be a non-zero finite vector"));
    }
    if (n - 1.0).abs() > 1e-9 {
        return Err(invalid(field, format!("must be a unit vector, |axis| = {n}")));
    }
    Ok(())
}

impl MassGeometry {
    pub fn validate(&self) -> Result<(), GeometryError> {
        match self {
            MassGeometry::Point { mass } => positive("mass", *mass),
            MassGeometry::Sphere { mass, radius } => {
                positive("mass", *mass)?;
                positive("radius", *radius)
            }
            MassGeometry::Cuboid { mass, lx, ly, lz } => {
                positive("mass", *mass)?;
                positive("lx", *lx)?;
                positive("ly", *ly)?;
                positive("lz", *lz)
            }
            MassGeometry::Cylinder {
                mass,
                radius,
                length,
                axis,
            } => {
                positive("mass", *mass)?;
                positive("radius", *radius)?;
                positive("length", *length)?;
                unit_axis("axis", *axis)
            }
            MassGeometry::Multilayer(ml) => {
                if ml.layer_count < 1 {
                    return Err(invalid("layer_count", "must be >= 1"));
                }
                positive("d1", ml.d1)?;
                positive("d2", ml.d2)?;
                positive("rho1", ml.rho1)?;
                positive("rho2", ml.rho2)?;
                positive("lx", ml.lx)?;
                positive("ly", ml.ly)?;
                unit_axis("stacking_axis", ml.stacking_axis)
            }
            MassGeometry::PointLattice { points } => {
                if points.is_empty() {
                    return Err(invalid("points", "must contain at least one point"));
                }
                for (i, p) in points.iter().enumerate() {
                    positive(&format!("points[{i}].mass"), p.mass)?;
                    if !p.position.iter().all(|c| c.is_finite()) {
                        return Err(invalid(&format!("points[{i}].position"), "must be finite"));
                    }
                }
                Ok(())
            }
            MassGeometry::TwoBody { unit, separation } => {
                if matches!(**unit, MassGeometry::TwoBody { .. }) {
                    return Err(GeometryError::NestedTwoBody);
                }
                if !(separation.is_finite() && *separation >= 0.0) {
                    return Err(invalid("separation", format!("must be finite and >= 0, got {separation}")));
                }
                unit.validate()
            }
        }
    }

    /// Total mass in kg (both units for a two-body system).
    pub fn total_mass(&self) -> f64 {
        match self {
            MassGeometry::Point { mass }
            | MassGeometry::Sphere { mass, .. }
            | MassGeometry::Cuboid { mass, .. }
            | MassGeometry::Cylinder { mass, .. } => *mass,
            MassGeometry::Multilayer(ml) => ml.mass(),
            MassGeometry::PointLattice { points } => points.iter().map(|p| p.mass).sum(),
            MassGeometry::TwoBody { unit, .. } => 2.0 * unit.total_mass(),
        }
    }

    /// Diameter of a ball about the origin enclosing the body.
    pub fn bounding_diameter(&self) -> f64 {
        match self {
            MassGeometry::Point { .. } => 0.0,
            MassGeometry::Sphere { radius, .. } => 2.0 * radius,
            MassGeometry::Cuboid { lx, ly, lz, .. } => (lx * lx + ly * ly + lz * lz).sqrt(),
            MassGeometry::Cylinder { radius, length, .. } => (4.0 * radius * radius + length * length).sqrt(),
            MassGeometry::Multilayer(ml) => {
                let slabs = ml.slabs();
                let reach = slabs
                    .iter()
                    .map(|s| s.center.abs() + 0.5 * s.thickness)
                    .fold(0.0, f64::max);
                2.0 * (reach * reach + 0.25 * (ml.lx * ml.lx + ml.ly * ml.ly)).sqrt()
            }
            MassGeometry::PointLattice { points } => 2.0 * points.iter().map(|p| norm(p.position)).fold(0.0, f64::max),
            MassGeometry::TwoBody { unit, separation } => unit.bounding_diameter() + separation,
        }
    }

    /// Largest value of |r·dir| over the body (dir a unit vector).
    pub fn support_half_width(&self, dir: Vec3) -> f64 {
        match self {
            MassGeometry::Point { .. } => 0.0,
            MassGeometry::Sphere { radius, .. } => *radius,
            MassGeometry::Cuboid { lx, ly, lz, .. } => {
                0.5 * (lx * dir[0].abs() + ly * dir[1].abs() + lz * dir[2].abs())
            }
            MassGeometry::Cylinder {
                radius, length, axis, ..
            } => {
                let c = dot(normalize(*axis), dir).abs();
                0.5 * length * c + radius * (1.0 - c * c).max(0.0).sqrt()
            }
            MassGeometry::Multilayer(ml) => {
                let [u, v, s] = ml.frame();
                let reach = ml
                    .slabs()
                    .iter()
                    .map(|sl| sl.center.abs() + 0.5 * sl.thickness)
                    .fold(0.0, f64::max);
                0.5 * (ml.lx * dot(u, dir).abs() + ml.ly * dot(v, dir).abs()) + reach * dot(s, dir).abs()
            }
            MassGeometry::PointLattice { points } => {
                points.iter().map(|p| dot(p.position, dir).abs()).fold(0.0, f64::max)
            }
            MassGeometry::TwoBody { unit, separation } => unit.support_half_width(dir) + separation * dir[0].abs(),
        }
    }

    /// Returns a copy with every mass and density multiplied by `factor`.
    pub fn scaled_mass(&self, factor: f64) -> MassGeometry {
        match self {
            MassGeometry::Point { mass } => MassGeometry::Point { mass: mass * factor },
            MassGeometry::Sphere { mass, radius } => MassGeometry::Sphere {
                mass: mass * factor,
                radius: *radius,
            },
            MassGeometry::Cuboid { mass, lx, ly, lz } => MassGeometry::Cuboid {
                mass: mass * factor,
                lx: *lx,
                ly: *ly,
                lz: *lz,
            },
            MassGeometry::Cylinder {
                mass,
                radius,
                length,
                axis,
            } => MassGeometry::Cylinder {
                mass: mass * factor,
                radius: *radius,
                length: *length,
                axis: *axis,
            },
            MassGeometry::Multilayer(ml) => MassGeometry::Multilayer(Multilayer {
                rho1: ml.rho1 * factor,
                rho2: ml.rho2 * factor,
                ..ml.clone()
            }),
            MassGeometry::PointLattice { points } => MassGeometry::PointLattice {
                points: points
                    .iter()
                    .map(|p| LatticePoint {
                        position: p.position,
                        mass: p.mass * factor,
                    })
                    .collect(),
            },
            MassGeometry::TwoBody { unit, separation } => MassGeometry::TwoBody {
                unit: Box::new(unit.scaled_mass(factor)),
                separation: *separation,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            MassGeometry::Point { .. } => "point",
            MassGeometry::Sphere { .. } => "sphere",
            MassGeometry::Cuboid { .. } => "cuboid",
            MassGeometry::Cylinder { .. } => "cylinder",
            MassGeometry::Multilayer(_) => "multilayer",
            MassGeometry::PointLattice { .. } => "point_lattice",
            MassGeometry::TwoBody { .. } => "two_body",
        }
    }
}

// ---------------------------------------------------------------------------
// Scalar profile functions

/// sin(x)/x, with the removable singularity handled by its Taylor series.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// d/dx sinc(x).
pub fn sinc_prime(x: f64) -> f64 {
    // The closed form loses ~ε/x² to cancellation; the series is used below 0.1.
    if x.abs() < 0.1 {
        let x2 = x * x;
        x * (-1.0 / 3.0 + x2 * (1.0 / 30.0 + x2 * (-1.0 / 840.0 + x2 / 45360.0)))
    } else {
        (x.cos() - x.sin() / x) / x
    }
}

/// Normalised sphere profile 3[sin q − q cos q]/q³.
pub fn sphere_profile(q: f64) -> f64 {
    let q = q.abs();
    // Series below 0.05; the closed form loses ~3ε/q² to cancellation.
    if q < 0.05 {
        let q2 = q * q;
        let mut term = 1.0;
        let mut sum = 1.0;
        for n in 2..=6u32 {
            let nf = f64::from(n);
            // ratio of consecutive terms 3(−1)^{n+1} 2n q^{2n−2}/(2n+1)!
            term *= -q2 * nf / ((nf - 1.0) * (2.0 * nf) * (2.0 * nf + 1.0));
            sum += term;
        }
        sum
    } else {
        3.0 * (q.sin() - q * q.cos()) / (q * q * q)
    }
}

/// Normalised disc profile 2J₁(u)/u.
pub fn disc_profile(u: f64) -> f64 {
    if u.abs() < 1e-6 {
        1.0 - u * u / 8.0
    } else {
        2.0 * bessel_j1(u) / u
    }
}

/// d/du [2J₁(u)/u] = −2J₂(u)/u.
pub fn disc_profile_prime(u: f64) -> f64 {
    if u.abs() < 1e-6 {
        -u / 4.0
    } else {
        -2.0 * bessel_jn(2, u) / u
    }
}

// ---------------------------------------------------------------------------
// Vector helpers

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Right-handed frame `(u, v, s)` with `s` given. For `s = ẑ` this is the lab frame.
pub fn orthonormal_frame(s: Vec3) -> [Vec3; 3] {
    let seed = if s[0].abs() > 0.9 { [0.0, 1.0, 0.0] } else { [1.0, 0.0, 0.0] };
    let proj = dot(seed, s);
    let u = normalize([seed[0] - proj * s[0], seed[1] - proj * s[1], seed[2] - proj * s[2]]);
    let v = cross(s, u);
    [u, v, s]
}

// ---------------------------------------------------------------------------
// Form factors

/// μ̃(k) of a single rigid body.
pub fn form_factor(g: &MassGeometry, k: Vec3) -> Result<FormFactorValue, GeometryError> {
    let value = match g {
        MassGeometry::Point { mass } => Complex64::new(*mass, 0.0),
        MassGeometry::Sphere { mass, radius } => Complex64::new(mass * sphere_profile(norm(k) * radius), 0.0),
        MassGeometry::Cuboid { mass, lx, ly, lz } => Complex64::new(
            mass * sinc(0.5 * k[0] * lx) * sinc(0.5 * k[1] * ly) * sinc(0.5 * k[2] * lz),
            0.0,
        ),
        MassGeometry::Cylinder {
            mass,
            radius,
            length,
            axis,
        } => {
            let n = normalize(*axis);
            let k_par = dot(k, n);
            let k_perp = (dot(k, k) - k_par * k_par).max(0.0).sqrt();
            Complex64::new(mass * disc_profile(k_perp * radius) * sinc(0.5 * k_par * length), 0.0)
        }
        MassGeometry::Multilayer(ml) => {
            let [u, v, s] = ml.frame();
            let transverse = ml.lx * ml.ly * sinc(0.5 * dot(k, u) * ml.lx) * sinc(0.5 * dot(k, v) * ml.ly);
            ml.stack_transform(dot(k, s)) * transverse
        }
        MassGeometry::PointLattice { points } => points
            .iter()
            .map(|p| Complex64::from_polar(p.mass, dot(k, p.position)))
            .sum(),
        MassGeometry::TwoBody { .. } => return Err(GeometryError::TwoBodyMisuse),
    };
    Ok(FormFactorValue { value })
}

/// `k_y ∂_{k_z} μ̃ − k_z ∂_{k_y} μ̃`: the generator of rotations about x acting
/// on the form factor. Geometries without closed-form derivatives fall back to
/// central differences with step `1e-6·max(|k|, 1/d)` where `d` is the
/// bounding diameter.
pub fn form_factor_angular_derivative(g: &MassGeometry, k: Vec3) -> Result<Complex64, GeometryError> {
    let d = g.bounding_diameter();
    let hint = if d > 0.0 { d } else { 1.0 };
    form_factor_angular_derivative_with_hint(g, k, hint)
}

/// As [`form_factor_angular_derivative`], with the finite-difference floor
/// set by `length_hint` (typically rC).
pub fn form_factor_angular_derivative_with_hint(
    g: &MassGeometry,
    k: Vec3,
    length_hint: f64,
) -> Result<Complex64, GeometryError> {
    let zero = Complex64::new(0.0, 0.0);
    match g {
        MassGeometry::Point { .. } | MassGeometry::Sphere { .. } => Ok(zero),
        MassGeometry::Cuboid { mass, lx, ly, lz } => {
            let (ax, ay, az) = (0.5 * lx, 0.5 * ly, 0.5 * lz);
            let sx = sinc(ax * k[0]);
            let sy = sinc(ay * k[1]);
            let sz = sinc(az * k[2]);
            let dy = ay * sinc_prime(ay * k[1]);
            let dz = az * sinc_prime(az * k[2]);
            Ok(Complex64::new(mass * sx * (k[1] * sy * dz - k[2] * dy * sz), 0.0))
        }
        MassGeometry::Cylinder {
            mass,
            radius,
            length,
            axis,
        } => {
            let n = normalize(*axis);
            let grad = cylinder_gradient(*mass, *radius, *length, n, k);
            Ok(Complex64::new(k[1] * grad[2] - k[2] * grad[1], 0.0))
        }
        MassGeometry::PointLattice { points } => Ok(points
            .iter()
            .map(|p| {
                let lever = k[1] * p.position[2] - k[2] * p.position[1];
                Complex64::from_polar(p.mass, dot(k, p.position)) * Complex64::new(0.0, lever)
            })
            .sum()),
        MassGeometry::Multilayer(_) => {
            let h = 1e-6 * norm(k).max(1.0 / length_hint);
            let eval = |dk: Vec3| form_factor(g, [k[0] + dk[0], k[1] + dk[1], k[2] + dk[2]]).map(|v| v.value);
            let d_z = (eval([0.0, 0.0, h])? - eval([0.0, 0.0, -h])?) / (2.0 * h);
            let d_y = (eval([0.0, h, 0.0])? - eval([0.0, -h, 0.0])?) / (2.0 * h);
            Ok(d_z * k[1] - d_y * k[2])
        }
        MassGeometry::TwoBody { .. } => Err(GeometryError::TwoBodyMisuse),
    }
}

/// ∇_k μ̃ for a cylinder of symmetry axis `n` (unit).
fn cylinder_gradient(mass: f64, radius: f64, length: f64, n: Vec3, k: Vec3) -> Vec3 {
    let k_par = dot(k, n);
    let perp = [k[0] - k_par * n[0], k[1] - k_par * n[1], k[2] - k_par * n[2]];
    let k_perp = norm(perp);
    let half = 0.5 * length;
    let radial = disc_profile(k_perp * radius);
    let axial = sinc(half * k_par);
    let d_axial = half * sinc_prime(half * k_par);
    // d/dk_perp of the disc profile, divided by k_perp: R² · (−2J₂(u)/u²).
    let u = k_perp * radius;
    let d_radial_over_kperp = if u < 1e-4 {
        radius * radius * (-0.25 + u * u / 48.0)
    } else {
        radius * disc_profile_prime(u) / k_perp
    };
    let mut g = [0.0; 3];
    for i in 0..3 {
        g[i] = mass * (d_radial_over_kperp * axial * perp[i] + radial * d_axial * n[i]);
    }
    g
}
