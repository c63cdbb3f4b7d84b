//! k-space integration of Gaussian-damped integrands.
//!
//! Every routine integrates in the scaled radial variable `u = |k|·rC` over
//! `[0, cutoff_factor]`, so the `e^{−k²rC²}` envelope always occupies the
//! same node range. When the integrand carries oscillations from a body of
//! size `L`, the radial interval starts out split into panels no wider than
//! half an oscillation period of `sin²(kL/2)`.

use std::f64::consts::PI;

use super::gauss_kronrod::{adaptive, finish, EvalBudget, Tolerance};
use super::{Estimate, QuadError, QuadratureSpec};

pub type Vec3 = [f64; 3];

/// Symmetry class of a k-space integrand.
pub enum KIntegrand<'a> {
    /// Function of |k| only.
    Isotropic(&'a dyn Fn(f64) -> f64),
    /// Independent of the azimuth about `axis`; called with `(k_par, k_perp)`.
    Axial {
        axis: Vec3,
        f: &'a dyn Fn(f64, f64) -> f64,
    },
    /// No symmetry; full spherical (r, θ, φ) nesting.
    General(&'a dyn Fn(Vec3) -> f64),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct KHints {
    /// Largest extent of the body in metres, or 0 when the integrand does not
    /// oscillate on scales finer than 1/rC.
    pub length_scale: f64,
}

impl KHints {
    pub fn with_length(length_scale: f64) -> Self {
        Self { length_scale }
    }
}

// Inner levels run a decade tighter than the level that consumes them.
const NESTED_TIGHTENING: f64 = 0.1;
const MAX_ANGULAR_PANELS: usize = 4096;

fn check_inputs(rc: f64, spec: &QuadratureSpec) -> Result<(), QuadError> {
    spec.validate()?;
    if !(rc.is_finite() && rc > 0.0) {
        return Err(QuadError::InvalidSpec(format!("rC must be finite and positive, got {rc}")));
    }
    Ok(())
}

/// Initial radial panel count in the scaled variable.
fn radial_panels(rc: f64, spec: &QuadratureSpec, length: f64) -> usize {
    let floor = (spec.cutoff_factor.ceil() as usize).max(8);
    if !(length > 0.0 && length.is_finite()) {
        return floor;
    }
    let width = PI * rc / length;
    let wanted = (spec.cutoff_factor / width).ceil();
    // Leave at least half the budget for refinement.
    let cap = (spec.max_evals / 30).max(1) as f64;
    (wanted.min(cap) as usize).max(floor)
}

fn angular_panels(k: f64, length: f64, minimum: usize) -> usize {
    if !(length > 0.0) {
        return minimum;
    }
    let wanted = (k * length / PI).ceil();
    (wanted.min(MAX_ANGULAR_PANELS as f64) as usize).max(minimum)
}

/// ∫_{ℝ³} f(k) d³k truncated to |k| ≤ cutoff_factor/rC, with no symmetry assumed.
pub fn integrate_k3(f: &dyn Fn(Vec3) -> f64, rc: f64, spec: &QuadratureSpec) -> Result<Estimate, QuadError> {
    integrate_k3_with(KIntegrand::General(f), rc, spec, KHints::default())
}

/// ∫_{ℝ³} f(k) d³k over the ball |k| ≤ cutoff_factor/rC, exploiting the
/// declared symmetry of the integrand.
pub fn integrate_k3_with(
    integrand: KIntegrand<'_>,
    rc: f64,
    spec: &QuadratureSpec,
    hints: KHints,
) -> Result<Estimate, QuadError> {
    check_inputs(rc, spec)?;
    let budget = EvalBudget::new(spec.max_evals);
    let n_radial = radial_panels(rc, spec, hints.length_scale);
    let length = hints.length_scale;
    let outer = Tolerance::new(spec.rel_tol, spec.abs_tol);
    let middle = Tolerance::nested(spec.rel_tol * NESTED_TIGHTENING);
    let inner = Tolerance::nested(spec.rel_tol * NESTED_TIGHTENING * NESTED_TIGHTENING);
    let jac = 1.0 / (rc * rc * rc);

    let out = match integrand {
        KIntegrand::Isotropic(f) => adaptive(
            |u| {
                let k = u / rc;
                Estimate::exact(4.0 * PI * u * u * f(k) * jac)
            },
            0.0,
            spec.cutoff_factor,
            n_radial,
            outer,
            &budget,
        ),
        KIntegrand::Axial { axis: _, f } => adaptive(
            |u| {
                let k = u / rc;
                let polar = adaptive(
                    |theta: f64| {
                        let (s, c) = theta.sin_cos();
                        Estimate::exact(s * f(k * c, k * s))
                    },
                    0.0,
                    PI,
                    angular_panels(k, length, 2),
                    middle,
                    &budget,
                );
                polar.estimate.scale(2.0 * PI * u * u * jac)
            },
            0.0,
            spec.cutoff_factor,
            n_radial,
            outer,
            &budget,
        ),
        KIntegrand::General(f) => adaptive(
            |u| {
                let k = u / rc;
                let polar = adaptive(
                    |theta: f64| {
                        let (s, c) = theta.sin_cos();
                        let azimuthal = adaptive(
                            |phi: f64| {
                                let (sp, cp) = phi.sin_cos();
                                Estimate::exact(f([k * s * cp, k * s * sp, k * c]))
                            },
                            0.0,
                            2.0 * PI,
                            angular_panels(k * s, length, 4),
                            inner,
                            &budget,
                        );
                        azimuthal.estimate.scale(s)
                    },
                    0.0,
                    PI,
                    angular_panels(k, length, 2),
                    middle,
                    &budget,
                );
                polar.estimate.scale(u * u * jac)
            },
            0.0,
            spec.cutoff_factor,
            n_radial,
            outer,
            &budget,
        ),
    };
    finish(out, &budget)
}

/// ∫_{−K}^{K} f(k) dk for an even `f`, K = cutoff_factor/rC. `length` is the
/// body extent along this axis (0 if non-oscillatory).
pub fn integrate_line_even(
    f: &dyn Fn(f64) -> f64,
    rc: f64,
    spec: &QuadratureSpec,
    length: f64,
) -> Result<Estimate, QuadError> {
    check_inputs(rc, spec)?;
    let budget = EvalBudget::new(spec.max_evals);
    let out = adaptive(
        |u| Estimate::exact(2.0 * f(u / rc) / rc),
        0.0,
        spec.cutoff_factor,
        radial_panels(rc, spec, length),
        Tolerance::new(spec.rel_tol, spec.abs_tol),
        &budget,
    );
    finish(out, &budget)
}

/// ∫_{|q| ≤ K} f(|q|) d²q = ∫_0^K 2π q f(q) dq over a plane.
pub fn integrate_planar_radial(
    f: &dyn Fn(f64) -> f64,
    rc: f64,
    spec: &QuadratureSpec,
    length: f64,
) -> Result<Estimate, QuadError> {
    check_inputs(rc, spec)?;
    let budget = EvalBudget::new(spec.max_evals);
    let out = adaptive(
        |u| Estimate::exact(2.0 * PI * u * f(u / rc) / (rc * rc)),
        0.0,
        spec.cutoff_factor,
        radial_panels(rc, spec, length),
        Tolerance::new(spec.rel_tol, spec.abs_tol),
        &budget,
    );
    finish(out, &budget)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn gaussian_second_moment_general() {
        let rc = 1e-7;
        let spec = QuadratureSpec::default();
        let f = |k: Vec3| (-(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) * rc * rc).exp() * k[0] * k[0];
        let got = integrate_k3(&f, rc, &spec).unwrap();
        let exact = PI.powf(1.5) / (2.0 * rc.powi(5));
        assert!(rel(got.value, exact) < 1e-6, "{} vs {exact}", got.value);
        assert!((exact / 1e35 - PI.powf(1.5) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_normalisation_all_symmetry_classes() {
        let rc = 2.5e-8;
        let spec = QuadratureSpec::default();
        let exact = (PI / (rc * rc)).powf(1.5);
        let g = |k: f64| (-k * k * rc * rc).exp();
        let iso = integrate_k3_with(KIntegrand::Isotropic(&g), rc, &spec, KHints::default()).unwrap();
        let ax_f = |p: f64, q: f64| (-(p * p + q * q) * rc * rc).exp();
        let ax = integrate_k3_with(
            KIntegrand::Axial { axis: [0.0, 0.0, 1.0], f: &ax_f },
            rc,
            &spec,
            KHints::default(),
        )
        .unwrap();
        let gen_f = |k: Vec3| (-(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) * rc * rc).exp();
        let gen = integrate_k3(&gen_f, rc, &spec).unwrap();
        for v in [iso.value, ax.value, gen.value] {
            assert!(rel(v, exact) < 1e-6, "{v} vs {exact}");
        }
    }

    #[test]
    fn zero_integrand() {
        let f = |_: Vec3| 0.0;
        let got = integrate_k3(&f, 1e-7, &QuadratureSpec::default()).unwrap();
        assert_eq!(got.value, 0.0);
    }

    #[test]
    fn separable_product_matches_full_3d() {
        let rc = 1e-7;
        let spec = QuadratureSpec::default();
        let g = |k: f64| (-k * k * rc * rc).exp();
        let g2 = |k: f64| k * k * (-k * k * rc * rc).exp();
        let x = integrate_line_even(&g2, rc, &spec, 0.0).unwrap();
        let y = integrate_line_even(&g, rc, &spec, 0.0).unwrap();
        let product = x.value * y.value * y.value;
        let exact = PI.powf(1.5) / (2.0 * rc.powi(5));
        assert!(rel(product, exact) < 1e-6);
        let planar = integrate_planar_radial(&g, rc, &spec, 0.0).unwrap();
        assert!(rel(planar.value, PI / (rc * rc)) < 1e-6);
    }

    #[test]
    fn oscillatory_line_integral_resolved() {
        // ∫ 4 sin²(kL/2)/L² e^{−k²rC²} dk = (2/L²)·√π/rC·(1 − e^{−L²/4rC²})
        let rc = 1e-9;
        let length = 2e-6;
        let spec = QuadratureSpec::default();
        let f = |k: f64| {
            let s = (0.5 * k * length).sin();
            4.0 * s * s / (length * length) * (-k * k * rc * rc).exp()
        };
        let got = integrate_line_even(&f, rc, &spec, length).unwrap();
        let exact = 2.0 / (length * length) * PI.sqrt() / rc * (1.0 - (-length * length / (4.0 * rc * rc)).exp());
        assert!(rel(got.value, exact) < 1e-6, "{} vs {exact}", got.value);
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = |_: f64| 1.0;
        assert!(integrate_line_even(&f, 0.0, &QuadratureSpec::default(), 0.0).is_err());
        let spec = QuadratureSpec {
            cutoff_factor: 3.0,
            ..QuadratureSpec::default()
        };
        assert!(matches!(
            integrate_line_even(&f, 1e-7, &spec, 0.0),
            Err(QuadError::InvalidSpec(_))
        ));
    }
}
