mod common;

use std::fs;
use std::path::Path;

use cslbounds::cli::config::parse_config;
use cslbounds::cli::output::parse_exclusion_csv;
use cslbounds::exclusion::{exclusion_scan, Budget, Channel, ExperimentRecord};
use cslbounds::geometry::MassGeometry;

use common::{cli, cli_in, read_csv, HBAR, KB};

fn displacement_config(lambda: f64, chi: f64, delta_hz: f64) -> String {
    format!(
        r#"
[run]
name = "membrane"
seed = 11

[collapse]
lambda_per_s = {lambda:e}
rc_nm = 100

[geometry]
kind = "cuboid"
mass_kg = 1e-12
lx_um = 10
ly_um = 10
lz_um = 5

[optomech]
f_m_hz = 1000
gamma_m_per_s = 2.0
temperature_k = 0.5
kappa_per_s = 1e6
delta_hz = {delta_hz:e}
chi_rad_s_m = {chi:e}
alpha_sq = 1e8

[spectrum]
f_min_hz = 100
f_max_hz = 1e4
points = 50
"#
    )
}

fn column(rows: &[Vec<String>], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn code(out: &std::process::Output) -> Option<i32> {
    out.status.code()
}

#[test]
fn zero_lambda_leaves_thermal_plus_backaction() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli_in(dir.path(), &displacement_config(0.0, 1e9, 1e4), "spectrum", &[]);
    assert_eq!(code(&out), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.path().join("out/spectrum.csv"));
    assert_eq!(rows.len(), 50);
    let (total, back, thermal, csl) = (
        column(&rows, 1),
        column(&rows, 2),
        column(&rows, 3),
        column(&rows, 4),
    );
    for i in 0..rows.len() {
        assert_eq!(csl[i], 0.0);
        assert!((total[i] - back[i] - thermal[i]).abs() <= 1e-15 * total[i]);
        assert!(back[i] > 0.0);
    }
}

#[test]
fn zero_coupling_has_no_backaction_and_lorentzian_thermal() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli_in(dir.path(), &displacement_config(0.0, 0.0, 0.0), "spectrum", &[]);
    assert_eq!(code(&out), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.path().join("out/spectrum.csv"));
    let m: f64 = 1e-12;
    let wm = 2.0 * std::f64::consts::PI * 1000.0;
    for r in &rows {
        let w: f64 = r[0].parse().unwrap();
        assert_eq!(r[2].parse::<f64>().unwrap(), 0.0);
        let x = HBAR * w / (2.0 * KB * 0.5);
        let s_th = HBAR * m * 2.0 * w / x.tanh();
        let expected = s_th / (m * m * ((wm * wm - w * w).powi(2) + 4.0 * w * w));
        let got: f64 = r[3].parse().unwrap();
        assert!(common::relative(got, expected) < 1e-12, "{got} vs {expected}");
    }
}

fn same_bytes(a: &Path, b: &Path) {
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap(), "{}", a.display());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = displacement_config(1e-8, 1e9, 1e4);
    let first = cli_in(dir.path(), &cfg, "spectrum", &["--svg"]);
    assert_eq!(code(&first), Some(0));
    fs::rename(dir.path().join("out"), dir.path().join("first")).unwrap();
    let second = cli_in(dir.path(), &cfg, "spectrum", &["--svg"]);
    assert_eq!(code(&second), Some(0));
    for f in ["spectrum.csv", "spectrum.json", "spectrum.svg"] {
        same_bytes(&dir.path().join("first").join(f), &dir.path().join("out").join(f));
    }
    let svg = fs::read_to_string(dir.path().join("out/spectrum.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "spectrum");
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["configHash"].as_str().unwrap().len(), 64);
    assert!(manifest["unitConversions"].as_array().unwrap().len() >= 5);
}

#[test]
fn one_sided_doubles_the_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = displacement_config(1e-8, 1e9, 1e4);
    assert_eq!(code(&cli_in(dir.path(), &cfg, "spectrum", &[])), Some(0));
    let double = column(&read_csv(&dir.path().join("out/spectrum.csv")), 1);
    assert_eq!(code(&cli_in(dir.path(), &cfg, "spectrum", &["--one-sided"])), Some(0));
    let single = column(&read_csv(&dir.path().join("out/spectrum.csv")), 1);
    for (d, s) in double.iter().zip(&single) {
        assert_eq!(2.0 * d, *s);
    }
}

#[test]
fn negative_damping_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
[geometry]
kind = "point"
mass_kg = 1e-15

[optomech]
omega_m_rad_s = 1e5
gamma_m_per_s = 1e-3
kappa_per_s = 1e6
delta_rad_s = -1e6
chi_rad_s_m = 1e10
alpha_sq = 1e10

[spectrum]
omega_min_rad_s = 1e4
omega_max_rad_s = 1e6
points = 10
"#;
    let out = cli_in(dir.path(), cfg, "spectrum", &[]);
    assert_eq!(code(&out), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_errors_exit_2_with_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[geometry]\nkind = \"sphere\"\nmass_kg = 1e-12\nradius_um = 1\nradius_m = 1e-6\n\n[spectrum]\nkind = \"force\"\nf_min_hz = 1\nf_max_hz = 2\npoints = 2\n";
    let out = cli_in(dir.path(), cfg, "spectrum", &[]);
    assert_eq!(code(&out), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4") || err.contains("line 5"), "{err}");
    assert!(err.contains("radius"), "{err}");

    let out = cli_in(dir.path(), "[geometry]\nkind = \"sphere\"\nmas_kg = 1\n", "spectrum", &[]);
    assert_eq!(code(&out), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let out = cli(&["spectrum", "--config", "/nonexistent/config.toml"]);
    assert_eq!(code(&out), Some(2));
    let out = cli(&["exclusion"]);
    assert_eq!(code(&out), Some(2));
}

#[test]
fn quadrature_budget_exhaustion_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
[geometry]
kind = "cylinder"
mass_kg = 1e-14
radius_um = 1
length_um = 4
axis = [0.6, 0.0, 0.8]

[spectrum]
kind = "force"
f_min_hz = 1
f_max_hz = 10
points = 3

[quadrature]
max_evals = 1000
rel_tol = 1e-12
"#;
    let out = cli_in(dir.path(), cfg, "spectrum", &[]);
    assert_eq!(code(&out), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn exclusion_csv_round_trips_against_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
[[experiment]]
name = "disk"
channel = "force_translational"
budget_force_psd_n2_s = 1e-38
band_lo_hz = 1
band_hi_hz = 10
[experiment.geometry]
kind = "cylinder"
mass_kg = 1e-13
radius_um = 5
length_um = 1

[scan]
rc_min_m = 1e-7
rc_max_m = 1e-5
points_per_decade = 3
"#;
    let out = cli_in(dir.path(), cfg, "exclusion", &["--svg"]);
    assert_eq!(code(&out), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("out/exclusion_disk.csv")).unwrap();
    let parsed = parse_exclusion_csv("disk", &text).unwrap();
    let rec = ExperimentRecord {
        name: "disk".into(),
        geometry: MassGeometry::Cylinder {
            mass: 1e-13,
            radius: 5e-6,
            length: 1e-6,
            axis: [0.0, 0.0, 1.0],
        },
        channel: Channel::ForceTranslational,
        budget: Budget::Psd { value: 1e-38 },
        band: [2.0 * std::f64::consts::PI, 20.0 * std::f64::consts::PI],
        colored: None,
    };
    let direct = exclusion_scan(&rec, &parsed.rcs()).unwrap();
    assert_eq!(parsed.points.len(), 7);
    for (a, b) in parsed.lambda_ub().iter().zip(direct.lambda_ub()) {
        assert!(common::relative(a.unwrap(), b.unwrap()) < 1e-12);
    }
    assert!(dir.path().join("out/exclusion.svg").exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("strongest bound"));
}

fn simulate_config(seed: u64, omega_m: f64) -> String {
    format!(
        r#"
[run]
seed = {seed}

[collapse]
lambda_per_s = 1e-6
rc_nm = 100

[optomech]
mass_kg = 1e-15
omega_m_rad_s = {omega_m:e}
gamma_m_per_s = {gamma:e}
temperature_k = 1e-3

[simulation]
dt_s = 1e-6
steps = 20000
trajectories = 64
record_every = 10
burn_in = 5000
welch_segment = 1024
write_trajectories = true
"#,
        gamma = if omega_m > 0.0 { 500.0 } else { 0.0 }
    )
}

#[test]
fn simulate_is_deterministic_in_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: u64, sub: &str| {
        let out = cli_in(dir.path(), &simulate_config(seed, 2e4), "simulate", &[]);
        assert_eq!(code(&out), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        fs::rename(dir.path().join("out"), dir.path().join(sub)).unwrap();
        String::from_utf8_lossy(&out.stdout).to_string()
    };
    let a = run(7, "a");
    run(7, "b");
    run(8, "c");
    for f in ["moments.csv", "sim_spectrum.csv", "trajectories.bin", "summary.json"] {
        same_bytes(&dir.path().join("a").join(f), &dir.path().join("b").join(f));
    }
    assert_ne!(
        fs::read(dir.path().join("a/moments.csv")).unwrap(),
        fs::read(dir.path().join("c/moments.csv")).unwrap()
    );
    assert!(a.contains("equipartition") && a.contains("PASS"), "{a}");
}

#[test]
fn free_particle_summary_reports_cubic_growth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulate_config(3, 0.0)
        .replace("steps = 20000", "steps = 2000")
        .replace("trajectories = 64", "trajectories = 4000")
        .replace("burn_in = 5000", "burn_in = 0")
        .replace("welch_segment = 1024", "welch_segment = 0")
        .replace("write_trajectories = true", "write_trajectories = false");
    let out = cli_in(dir.path(), &cfg, "simulate", &[]);
    assert_eq!(code(&out), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    let fp = &summary["free_particle"];
    assert!((fp["exponent"].as_f64().unwrap() - 3.0).abs() < 0.05, "{fp}");
    assert!(fp["relative_deviation"].as_f64().unwrap().abs() < 0.1, "{fp}");
}

#[test]
fn pointcheck_exit_codes() {
    let out = cli(&["pointcheck"]);
    assert_eq!(code(&out), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.matches("PASS").count(), 3, "{text}");

    let out = cli(&["pointcheck", "--hbar", "1.06e-34"]);
    assert_eq!(code(&out), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));

    assert_eq!(code(&cli(&["pointcheck", "--lambda", "0"])), Some(0));
    assert_eq!(code(&cli(&["pointcheck", "--lambda", "-1"])), Some(2));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let text = fs::read_to_string(&path).unwrap();
            let (cfg, _) = parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(!cfg.experiments.is_empty());
            n += 1;
        }
    }
    assert_eq!(n, 3);
}
