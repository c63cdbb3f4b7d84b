use cslbounds::cli::config::parse_config;
use cslbounds::csl::{csl_force_spectrum, csl_torque_spectrum, CollapseParams, ColoredNoiseModel};
use cslbounds::geometry::{form_factor, form_factor_angular_derivative, LatticePoint, MassGeometry, Multilayer};
use cslbounds::quadrature::QuadratureSpec;
use proptest::prelude::*;

fn unit_axis(theta: f64, phi: f64) -> [f64; 3] {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

fn body() -> impl Strategy<Value = MassGeometry> {
    prop_oneof![
        (1e-15..1e-9f64, 1e-7..1e-4f64).prop_map(|(mass, radius)| MassGeometry::Sphere { mass, radius }),
        (1e-15..1e-9f64, 1e-7..1e-4f64, 1e-7..1e-4f64, 1e-7..1e-4f64)
            .prop_map(|(mass, lx, ly, lz)| MassGeometry::Cuboid { mass, lx, ly, lz }),
        (1e-15..1e-9f64, 1e-7..1e-4f64, 1e-7..1e-4f64, 0.0..3.14f64, 0.0..6.28f64).prop_map(
            |(mass, radius, length, t, p)| MassGeometry::Cylinder {
                mass,
                radius,
                length,
                axis: unit_axis(t, p),
            }
        ),
    ]
}

fn wavevector() -> impl Strategy<Value = [f64; 3]> {
    [-5e6..5e6f64, -5e6..5e6f64, -5e6..5e6f64]
}

fn rotate_x(k: [f64; 3], t: f64) -> [f64; 3] {
    let (s, c) = t.sin_cos();
    [k[0], c * k[1] - s * k[2], s * k[1] + c * k[2]]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn centrosymmetric_form_factors_are_real_and_bounded(g in body(), k in wavevector()) {
        let v = form_factor(&g, k).unwrap().value;
        prop_assert_eq!(v.im, 0.0);
        prop_assert!(v.re.abs() <= g.total_mass() * (1.0 + 1e-12));
        let minus = form_factor(&g, k.map(|x| -x)).unwrap().value;
        prop_assert!((minus.re - v.re).abs() <= 1e-12 * g.total_mass());
    }

    #[test]
    fn lattice_form_factor_is_hermitian(
        pts in prop::collection::vec(([-1e-6..1e-6f64, -1e-6..1e-6f64, -1e-6..1e-6f64], 1e-16..1e-14f64), 1..20),
        k in wavevector(),
    ) {
        let g = MassGeometry::PointLattice {
            points: pts.iter().map(|(position, mass)| LatticePoint { position: *position, mass: *mass }).collect(),
        };
        let a = form_factor(&g, k).unwrap().value;
        let b = form_factor(&g, k.map(|x| -x)).unwrap().value;
        let m = g.total_mass();
        prop_assert!((a.re - b.re).abs() <= 1e-12 * m && (a.im + b.im).abs() <= 1e-12 * m);
    }

    #[test]
    fn angular_derivative_matches_finite_difference(g in body(), k in wavevector()) {
        let h = 1e-5;
        let f = |t: f64| form_factor(&g, rotate_x(k, t)).unwrap().value.re;
        let fd = (f(h) - f(-h)) / (2.0 * h);
        let analytic = form_factor_angular_derivative(&g, k).unwrap();
        let scale = g.total_mass() * (1.0 + g.bounding_diameter() * (k[0].abs() + k[1].abs() + k[2].abs()));
        prop_assert!((analytic.re - fd).abs() <= 1e-6 * scale, "{} vs {}", analytic.re, fd);
        prop_assert_eq!(analytic.im, 0.0);
    }

    #[test]
    fn multilayer_angular_derivative_matches_finite_difference(
        n in 1u32..8,
        d1 in 1e-8..1e-6f64,
        d2 in 1e-8..1e-6f64,
        rho1 in 1e3..2e4f64,
        rho2 in 1e3..2e4f64,
        t in 0.0..3.14f64,
        p in 0.0..6.28f64,
        k in wavevector(),
    ) {
        let g = MassGeometry::Multilayer(Multilayer {
            layer_count: n, d1, d2, rho1, rho2, lx: 2e-6, ly: 3e-6, stacking_axis: unit_axis(t, p),
        });
        let h = 1e-5;
        let f = |t: f64| form_factor(&g, rotate_x(k, t)).unwrap().value;
        let fd = (f(h) - f(-h)) / (2.0 * h);
        let analytic = form_factor_angular_derivative(&g, k).unwrap();
        let scale = g.total_mass() * (1.0 + g.bounding_diameter() * (k[0].abs() + k[1].abs() + k[2].abs()));
        prop_assert!((analytic - fd).norm() <= 1e-6 * scale, "{} vs {}", analytic, fd);
    }

    #[test]
    fn filter_is_monotone_and_bounded(omega_c in 1e-3..1e12f64, a in 0.0..1e9f64, b in 0.0..1e9f64) {
        let m = ColoredNoiseModel::LorentzianCutoff { omega_c };
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(m.filter(lo) >= m.filter(hi));
        prop_assert!(m.filter(hi) > 0.0 && m.filter(lo) <= 1.0);
        prop_assert_eq!(ColoredNoiseModel::White.filter(a), 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spectra_are_linear_in_lambda_and_quadratic_in_mass(
        g in body(),
        lambda in 1e-20..1e-4f64,
        factor in 0.01..100.0f64,
        rc_exp in -8.0..-4.0f64,
    ) {
        let spec = QuadratureSpec::default();
        let rc = 10f64.powf(rc_exp);
        let base = csl_force_spectrum(&g, &CollapseParams::new(1.0, rc), &spec).unwrap().value;
        let scaled_lambda = csl_force_spectrum(&g, &CollapseParams::new(lambda, rc), &spec).unwrap().value;
        prop_assert!((scaled_lambda / (lambda * base) - 1.0).abs() < 1e-12);
        let heavy = csl_force_spectrum(&g.scaled_mass(factor), &CollapseParams::new(1.0, rc), &spec).unwrap().value;
        prop_assert!((heavy / (factor * factor * base) - 1.0).abs() < 1e-12);
        if let MassGeometry::Cuboid { .. } = g {
            let t = csl_torque_spectrum(&g, &CollapseParams::new(1.0, rc), &spec).unwrap().value;
            let t2 = csl_torque_spectrum(&g, &CollapseParams::new(lambda, rc), &spec).unwrap().value;
            prop_assert!((t2 / (lambda * t) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn config_round_trips(
        mass in 1e-15..1e-3f64,
        radius in 1e-7..1e-2f64,
        lambda in 1e-20..1e-2f64,
        rc in 1e-9..1e-2f64,
        f_m in 1.0..1e6f64,
        budget in 1e-45..1e-25f64,
        seed in 0u64..1_000_000,
        points in 2usize..500,
    ) {
        let text = format!(r#"
[run]
name = "generated"
seed = {seed}

[collapse]
lambda_per_s = {lambda:e}
rc_m = {rc:e}

[geometry]
kind = "sphere"
mass_kg = {mass:e}
radius_m = {radius:e}

[optomech]
f_m_hz = {f_m:e}
gamma_m_per_s = 1.0
temperature_k = 1.0

[spectrum]
f_min_hz = 1.0
f_max_hz = 1e4
points = {points}

[[experiment]]
name = "e"
channel = "force_translational"
budget_force_psd_n2_s = {budget:e}
band_lo_hz = 1.0
band_hi_hz = 2.0
[experiment.geometry]
kind = "sphere"
mass_kg = {mass:e}
radius_m = {radius:e}
"#);
        let (cfg, _) = parse_config(&text).unwrap();
        let canonical = cfg.to_toml();
        let (again, _) = parse_config(&canonical).unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.to_toml(), canonical);
        prop_assert_eq!(again.hash(), cfg.hash());
    }
}
