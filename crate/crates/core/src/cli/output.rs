//! CSV, JSON and manifest writers.
//!
//! Numbers are written with `{:e}`, the shortest representation that
//! reads back to the same f64, so identical inputs give identical bytes and
//! CSV files round-trip losslessly.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::Conversion;
use crate::exclusion::{CurvePoint, ExclusionCurve, PointStatus};

pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub const EXCLUSION_HEADER: [&str; 4] = ["rC_m", "lambda_ub_per_s", "error_est_per_s", "status"];

/// One row per rC. Sentinel rows leave the numeric fields empty.
pub fn exclusion_csv(curve: &ExclusionCurve) -> String {
    let mut csv = Csv::new(&EXCLUSION_HEADER);
    for p in &curve.points {
        let (lam, err) = match &p.status {
            PointStatus::Ok { lambda_ub, error_est } | PointStatus::NonConverged { lambda_ub, error_est } => {
                (num(*lambda_ub), num(*error_est))
            }
            _ => (String::new(), String::new()),
        };
        csv.row(&[num(p.rc), lam, err, p.status.label().to_string()]);
    }
    csv.into_string()
}

/// Inverse of [`exclusion_csv`]. Failure messages are not stored in the CSV
/// and come back empty.
pub fn parse_exclusion_csv(name: &str, text: &str) -> Result<ExclusionCurve, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    if header != EXCLUSION_HEADER.join(",") {
        return Err(format!("unexpected header `{header}`"));
    }
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(format!("row {}: expected 4 fields", i + 2));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| format!("row {}: {e}", i + 2));
        let rc = parse(f[0])?;
        let status = match f[3] {
            "ok" => PointStatus::Ok {
                lambda_ub: parse(f[1])?,
                error_est: parse(f[2])?,
            },
            "nonconverged" => PointStatus::NonConverged {
                lambda_ub: parse(f[1])?,
                error_est: parse(f[2])?,
            },
            "degenerate" => PointStatus::Degenerate,
            "failed" => PointStatus::Failed { message: String::new() },
            other => return Err(format!("row {}: unknown status `{other}`", i + 2)),
        };
        points.push(CurvePoint { rc, status });
    }
    Ok(ExclusionCurve {
        experiment: name.to_string(),
        points,
    })
}

#[derive(Debug, Clone, Serialize, Default)]
#[serde(rename_all = "camelCase")]
pub struct QuadratureSummary {
    pub label: String,
    pub points: usize,
    pub ok: usize,
    pub nonconverged: usize,
    pub degenerate: usize,
    pub failed: usize,
    /// Largest error_est / value over points that produced a value.
    pub max_relative_error: f64,
}

impl QuadratureSummary {
    pub fn of_curve(curve: &ExclusionCurve) -> Self {
        let max_relative_error = curve
            .points
            .iter()
            .filter_map(|p| match p.status {
                PointStatus::Ok { lambda_ub, error_est } | PointStatus::NonConverged { lambda_ub, error_est } => {
                    Some(error_est / lambda_ub)
                }
                _ => None,
            })
            .fold(0.0, f64::max);
        Self {
            label: curve.experiment.clone(),
            points: curve.points.len(),
            ok: curve.count("ok"),
            nonconverged: curve.count("nonconverged"),
            degenerate: curve.count("degenerate"),
            failed: curve.count("failed"),
            max_relative_error,
        }
    }

    pub fn single(label: &str, relative_error: f64) -> Self {
        Self {
            label: label.to_string(),
            points: 1,
            ok: 1,
            max_relative_error: relative_error,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub started_utc: String,
    pub finished_utc: String,
    pub threads: usize,
    pub spectral_convention: String,
    pub unit_conversions: Vec<Conversion>,
    pub quadrature: Vec<QuadratureSummary>,
    pub outputs: Vec<String>,
    pub notes: Vec<String>,
}

/// Collects output files in one directory and records their names.
pub struct OutputDir {
    pub dir: PathBuf,
    pub written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> io::Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        self.written.push(name.to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        text.push('\n');
        self.write(name, text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, 1e-7, 5.5606e-71, 1.0 / 3.0, -2.5e300, f64::MIN_POSITIVE] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn exclusion_csv_round_trip() {
        let curve = ExclusionCurve {
            experiment: "x".into(),
            points: vec![
                CurvePoint {
                    rc: 1e-7,
                    status: PointStatus::Ok {
                        lambda_ub: 1.0 / 7.0,
                        error_est: 3e-9,
                    },
                },
                CurvePoint {
                    rc: 2e-7,
                    status: PointStatus::Degenerate,
                },
                CurvePoint {
                    rc: 3e-7,
                    status: PointStatus::NonConverged {
                        lambda_ub: 2.0,
                        error_est: 0.5,
                    },
                },
            ],
        };
        let text = exclusion_csv(&curve);
        assert!(text.contains("2e-7,,,degenerate"));
        assert_eq!(parse_exclusion_csv("x", &text).unwrap(), curve);
    }
}
