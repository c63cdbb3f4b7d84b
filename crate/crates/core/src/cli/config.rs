//! TOML run configuration.
//!
//! Keys carry their unit in the name (`radius_m`, `f_m_hz`, `temperature_mk`).
//! Convenience units are converted to SI while parsing and every conversion
//! is reported back so it can be echoed in the manifest. Serialisation
//! always writes the SI keys, so parse → serialise → parse is the identity.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;

use serde::Serialize;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::csl::{CollapseParams, ColoredNoiseModel};
use crate::exclusion::{Budget, Channel, Damping, ExperimentRecord};
use crate::geometry::{GeometryError, LatticePoint, MassGeometry, Multilayer};
use crate::optomech::{OptomechConfig, SimConfig, SpectrumKind};
use crate::quadrature::QuadratureSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: `{}`: {}", self.field, self.message),
            None => write!(f, "`{}`: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// A convenience-unit value converted at parse time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Conversion {
    pub from: String,
    pub input: f64,
    pub to: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
    pub log_spaced: bool,
    pub kind: SpectrumKind,
}

impl FrequencyGrid {
    pub fn omegas(&self) -> Vec<f64> {
        let n = self.points;
        if n == 1 {
            return vec![self.omega_min];
        }
        (0..n)
            .map(|i| {
                let f = i as f64 / (n - 1) as f64;
                if self.log_spaced {
                    self.omega_min * (self.omega_max / self.omega_min).powf(f)
                } else {
                    self.omega_min + f * (self.omega_max - self.omega_min)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSpec {
    pub rc_min: f64,
    pub rc_max: f64,
    pub points_per_decade: u32,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            rc_min: 1e-9,
            rc_max: 1e-3,
            points_per_decade: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub sim: SimConfig,
    pub write_trajectories: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub name: String,
    pub seed: u64,
    pub collapse: CollapseParams,
    pub geometry: Option<MassGeometry>,
    pub optomech: Option<OptomechConfig>,
    pub frequencies: Option<FrequencyGrid>,
    pub experiments: Vec<ExperimentRecord>,
    pub scan: ScanSpec,
    pub quadrature: QuadratureSpec,
    pub simulation: Option<Simulation>,
}

// ---------------------------------------------------------------------------
// Line lookup for diagnostics

/// Header of the table a section lives in plus which `[[array]]` entry.
#[derive(Debug, Clone)]
struct Origin {
    header: String,
    index: Option<usize>,
}

fn parse_header(line: &str) -> Option<(String, bool)> {
    let t = line.trim();
    if let Some(rest) = t.strip_prefix("[[") {
        return rest.split("]]").next().map(|h| (h.trim().to_string(), true));
    }
    if let Some(rest) = t.strip_prefix('[') {
        return rest.split(']').next().map(|h| (h.trim().to_string(), false));
    }
    None
}

fn locate(text: &str, origin: &Origin, key: Option<&str>) -> Option<usize> {
    let top = origin.header.split('.').next().unwrap_or("");
    let mut current = String::new();
    let mut array_seen: Option<usize> = None;
    let mut header_line = None;
    for (n, line) in text.lines().enumerate() {
        if let Some((h, is_array)) = parse_header(line) {
            if is_array && h == top {
                array_seen = Some(array_seen.map_or(0, |i| i + 1));
            }
            current = h;
            let in_entry = origin.index.is_none() || array_seen == origin.index;
            if current == origin.header && in_entry && header_line.is_none() {
                header_line = Some(n + 1);
                if key.is_none() {
                    return header_line;
                }
            }
            continue;
        }
        let in_entry = origin.index.is_none() || array_seen == origin.index;
        let at_root = origin.header.is_empty() && current.is_empty();
        if (current == origin.header && in_entry) || at_root {
            if let Some(k) = key {
                let t = line.trim_start();
                if let Some(rest) = t.strip_prefix(k) {
                    if rest.trim_start().starts_with('=') {
                        return Some(n + 1);
                    }
                }
            }
        }
    }
    header_line
}

// ---------------------------------------------------------------------------
// Section reader

struct Section<'a> {
    table: &'a Table,
    origin: Origin,
    text: &'a str,
    used: RefCell<BTreeSet<String>>,
    conversions: &'a RefCell<Vec<Conversion>>,
}

type Units = &'static [(&'static str, f64)];

const MASS: Units = &[("mass_kg", 1.0), ("mass_g", 1e-3), ("mass_mg", 1e-6)];
const RADIUS: Units = &[("radius_m", 1.0), ("radius_mm", 1e-3), ("radius_um", 1e-6), ("radius_nm", 1e-9)];
const LENGTH: Units = &[("length_m", 1.0), ("length_mm", 1e-3), ("length_um", 1e-6), ("length_nm", 1e-9)];
const LX: Units = &[("lx_m", 1.0), ("lx_mm", 1e-3), ("lx_um", 1e-6), ("lx_nm", 1e-9)];
const LY: Units = &[("ly_m", 1.0), ("ly_mm", 1e-3), ("ly_um", 1e-6), ("ly_nm", 1e-9)];
const LZ: Units = &[("lz_m", 1.0), ("lz_mm", 1e-3), ("lz_um", 1e-6), ("lz_nm", 1e-9)];
const D1: Units = &[("d1_m", 1.0), ("d1_um", 1e-6), ("d1_nm", 1e-9)];
const D2: Units = &[("d2_m", 1.0), ("d2_um", 1e-6), ("d2_nm", 1e-9)];
const SEPARATION: Units = &[("separation_m", 1.0), ("separation_mm", 1e-3), ("separation_um", 1e-6)];
const RC: Units = &[("rc_m", 1.0), ("rc_nm", 1e-9), ("rc_um", 1e-6)];
const RC_MIN: Units = &[("rc_min_m", 1.0)];
const RC_MAX: Units = &[("rc_max_m", 1.0)];
const OMEGA_C: Units = &[("omega_c_rad_s", 1.0), ("f_c_hz", 2.0 * PI)];
const OMEGA_M: Units = &[("omega_m_rad_s", 1.0), ("f_m_hz", 2.0 * PI)];
const OMEGA_MIN: Units = &[("omega_min_rad_s", 1.0), ("f_min_hz", 2.0 * PI)];
const OMEGA_MAX: Units = &[("omega_max_rad_s", 1.0), ("f_max_hz", 2.0 * PI)];
const BAND_LO: Units = &[("band_lo_rad_s", 1.0), ("band_lo_hz", 2.0 * PI)];
const BAND_HI: Units = &[("band_hi_rad_s", 1.0), ("band_hi_hz", 2.0 * PI)];
const DELTA: Units = &[("delta_rad_s", 1.0), ("delta_hz", 2.0 * PI)];
const TEMPERATURE: Units = &[("temperature_k", 1.0), ("temperature_mk", 1e-3)];
const BUDGET_T: Units = &[("budget_temperature_k", 1.0), ("budget_temperature_mk", 1e-3)];

impl<'a> Section<'a> {
    fn new(table: &'a Table, origin: Origin, text: &'a str, conversions: &'a RefCell<Vec<Conversion>>) -> Self {
        Self {
            table,
            origin,
            text,
            used: RefCell::new(BTreeSet::new()),
            conversions,
        }
    }

    fn child(&self, key: &str) -> Result<Option<Section<'a>>, ConfigError> {
        self.used.borrow_mut().insert(key.to_string());
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Table(t)) => {
                let header = if self.origin.header.is_empty() {
                    key.to_string()
                } else {
                    format!("{}.{key}", self.origin.header)
                };
                Ok(Some(Section::new(
                    t,
                    Origin {
                        header,
                        index: self.origin.index,
                    },
                    self.text,
                    self.conversions,
                )))
            }
            Some(_) => Err(self.err(key, "must be a table")),
        }
    }

    fn path(&self, key: &str) -> String {
        let mut p = self.origin.header.clone();
        if let Some(i) = self.origin.index {
            let top = p.split('.').next().unwrap_or("").to_string();
            p = p.replacen(&top, &format!("{top}[{i}]"), 1);
        }
        if p.is_empty() {
            key.to_string()
        } else {
            format!("{p}.{key}")
        }
    }

    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: locate(self.text, &self.origin, Some(key)),
            field: self.path(key),
            message: message.into(),
        }
    }

    fn section_err(&self, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: locate(self.text, &self.origin, None),
            field: if self.origin.header.is_empty() {
                "(root)".into()
            } else {
                self.path("").trim_end_matches('.').to_string()
            },
            message: message.into(),
        }
    }

    fn raw(&self, key: &str) -> Option<&'a Value> {
        self.used.borrow_mut().insert(key.to_string());
        self.table.get(key)
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(self.err(key, "must be a number")),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.opt_f64(key)?.unwrap_or(default))
    }

    fn opt_u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(Value::Float(f)) if *f >= 0.0 && f.fract() == 0.0 && *f < 9.0e15 => Ok(Some(*f as u64)),
            Some(_) => Err(self.err(key, "must be a non-negative integer")),
        }
    }

    fn u64_req(&self, key: &str) -> Result<u64, ConfigError> {
        self.opt_u64(key)?.ok_or_else(|| self.section_err(format!("missing `{key}`")))
    }

    fn opt_str(&self, key: &str) -> Result<Option<&'a str>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.as_str())),
            Some(_) => Err(self.err(key, "must be a string")),
        }
    }

    fn opt_bool(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(self.err(key, "must be true or false")),
        }
    }

    fn numbers(&self, key: &str, v: &Value) -> Result<Vec<f64>, ConfigError> {
        let Value::Array(items) = v else {
            return Err(self.err(key, "must be an array of numbers"));
        };
        items
            .iter()
            .map(|x| match x {
                Value::Float(f) => Ok(*f),
                Value::Integer(i) => Ok(*i as f64),
                _ => Err(self.err(key, "must be an array of numbers")),
            })
            .collect()
    }

    fn opt_vec3(&self, key: &str) -> Result<Option<[f64; 3]>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => {
                let n = self.numbers(key, v)?;
                if n.len() != 3 {
                    return Err(self.err(key, "must have exactly 3 components"));
                }
                Ok(Some([n[0], n[1], n[2]]))
            }
        }
    }

    /// A quantity that may be given in any of `units`; converted to SI.
    fn quantity(&self, units: Units) -> Result<Option<f64>, ConfigError> {
        let mut found: Option<(&str, f64, f64)> = None;
        for (key, factor) in units {
            if let Some(v) = self.opt_f64(key)? {
                if let Some((other, _, _)) = found {
                    return Err(self.err(key, format!("conflicts with `{other}`; give one of them")));
                }
                found = Some((key, v, *factor));
            }
        }
        Ok(found.map(|(key, v, factor)| {
            let si = v * factor;
            if factor != 1.0 {
                self.conversions.borrow_mut().push(Conversion {
                    from: self.path(key),
                    input: v,
                    to: self.path(units[0].0),
                    value: si,
                });
            }
            si
        }))
    }

    fn quantity_req(&self, units: Units) -> Result<f64, ConfigError> {
        self.quantity(units)?.ok_or_else(|| {
            let names: Vec<&str> = units.iter().map(|u| u.0).collect();
            let missing = format!("missing `{}`", names.join("` or `"));
            // A misspelt key with a known unit suffix is the likely culprit.
            let used = self.used.borrow();
            let suffix = |k: &str| k.rsplit('_').next().unwrap_or("").to_string();
            let typo = self
                .table
                .keys()
                .find(|k| !used.contains(*k) && names.iter().any(|n| suffix(n) == suffix(k)));
            match typo {
                Some(k) => self.err(k, format!("unknown key; {missing}")),
                None => self.section_err(missing),
            }
        })
    }

    fn finish(&self) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        for key in self.table.keys() {
            if !used.contains(key) {
                return Err(self.err(key, "unknown key"));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Parsing

fn geometry_error(sec: &Section<'_>, e: GeometryError) -> ConfigError {
    match e {
        GeometryError::Invalid { field, reason } => {
            let key = sec
                .table
                .keys()
                .find(|k| k.as_str() == field || k.starts_with(&format!("{field}_")))
                .cloned()
                .unwrap_or(field);
            sec.err(&key, reason)
        }
        other => sec.section_err(other.to_string()),
    }
}

fn parse_geometry(sec: &Section<'_>, allow_two_body: bool) -> Result<MassGeometry, ConfigError> {
    let kind = sec
        .opt_str("kind")?
        .ok_or_else(|| sec.section_err("missing `kind`"))?;
    let mass = || sec.quantity_req(MASS);
    let g = match kind {
        "point" => MassGeometry::Point { mass: mass()? },
        "sphere" => MassGeometry::Sphere {
            mass: mass()?,
            radius: sec.quantity_req(RADIUS)?,
        },
        "cuboid" => MassGeometry::Cuboid {
            mass: mass()?,
            lx: sec.quantity_req(LX)?,
            ly: sec.quantity_req(LY)?,
            lz: sec.quantity_req(LZ)?,
        },
        "cylinder" => MassGeometry::Cylinder {
            mass: mass()?,
            radius: sec.quantity_req(RADIUS)?,
            length: sec.quantity_req(LENGTH)?,
            axis: sec.opt_vec3("axis")?.unwrap_or([0.0, 0.0, 1.0]),
        },
        "multilayer" => MassGeometry::Multilayer(Multilayer {
            layer_count: sec
                .u64_req("layer_count")?
                .try_into()
                .map_err(|_| sec.err("layer_count", "too large"))?,
            d1: sec.quantity_req(D1)?,
            d2: sec.quantity_req(D2)?,
            rho1: sec
                .opt_f64("rho1_kg_m3")?
                .ok_or_else(|| sec.section_err("missing `rho1_kg_m3`"))?,
            rho2: sec
                .opt_f64("rho2_kg_m3")?
                .ok_or_else(|| sec.section_err("missing `rho2_kg_m3`"))?,
            lx: sec.quantity_req(LX)?,
            ly: sec.quantity_req(LY)?,
            stacking_axis: sec.opt_vec3("stacking_axis")?.unwrap_or([0.0, 0.0, 1.0]),
        }),
        "point_lattice" => {
            let raw = sec
                .raw("points_m_kg")
                .ok_or_else(|| sec.section_err("missing `points_m_kg`"))?;
            let Value::Array(rows) = raw else {
                return Err(sec.err("points_m_kg", "must be an array of [x, y, z, mass] rows"));
            };
            let mut points = Vec::with_capacity(rows.len());
            for row in rows {
                let v = sec.numbers("points_m_kg", row)?;
                if v.len() != 4 {
                    return Err(sec.err("points_m_kg", "each row must be [x_m, y_m, z_m, mass_kg]"));
                }
                points.push(LatticePoint {
                    position: [v[0], v[1], v[2]],
                    mass: v[3],
                });
            }
            MassGeometry::PointLattice { points }
        }
        "two_body" => {
            if !allow_two_body {
                return Err(sec.err("kind", "two_body geometries cannot be nested"));
            }
            let separation = sec.quantity_req(SEPARATION)?;
            let unit_sec = sec
                .child("unit")?
                .ok_or_else(|| sec.section_err("a two_body geometry needs a `unit` sub-table"))?;
            let unit = parse_geometry(&unit_sec, false)?;
            unit_sec.finish()?;
            MassGeometry::TwoBody {
                unit: Box::new(unit),
                separation,
            }
        }
        other => {
            return Err(sec.err(
                "kind",
                format!(
                    "unknown geometry `{other}` (expected point, sphere, cuboid, cylinder, multilayer, point_lattice, two_body)"
                ),
            ))
        }
    };
    g.validate().map_err(|e| geometry_error(sec, e))?;
    if let MassGeometry::Multilayer(ml) = &g {
        let sum: f64 = ml.slabs().iter().map(|s| s.density * s.thickness).sum::<f64>() * ml.lx * ml.ly;
        if ((sum - ml.mass()) / ml.mass()).abs() > 1e-12 {
            return Err(sec.section_err("multilayer mass does not match its layers"));
        }
    }
    sec.finish()?;
    Ok(g)
}

fn parse_colored(sec: &Section<'_>) -> Result<Option<ColoredNoiseModel>, ConfigError> {
    let family = sec.opt_str("colored")?;
    let omega_c = sec.quantity(OMEGA_C)?;
    let model = match (family, omega_c) {
        (None, None) => None,
        (Some("white"), None) => Some(ColoredNoiseModel::White),
        (Some("white"), Some(_)) => return Err(sec.err("colored", "white noise takes no cutoff frequency")),
        (Some("lorentzian"), Some(w)) | (None, Some(w)) => Some(ColoredNoiseModel::LorentzianCutoff { omega_c: w }),
        (Some("lorentzian"), None) => {
            return Err(sec.err("colored", "lorentzian noise needs `omega_c_rad_s` or `f_c_hz`"))
        }
        (Some(other), _) => {
            return Err(sec.err("colored", format!("unknown family `{other}` (expected white or lorentzian)")))
        }
    };
    if let Some(m) = &model {
        m.validate().map_err(|e| sec.err("omega_c_rad_s", e.to_string()))?;
    }
    Ok(model)
}

fn parse_experiment(sec: &Section<'_>) -> Result<ExperimentRecord, ConfigError> {
    let name = sec
        .opt_str("name")?
        .ok_or_else(|| sec.section_err("missing `name`"))?
        .to_string();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(sec.err("name", "use letters, digits, '-' and '_' only"));
    }
    let channel = match sec.opt_str("channel")?.ok_or_else(|| sec.section_err("missing `channel`"))? {
        "force_translational" => Channel::ForceTranslational,
        "force_two_body" => Channel::ForceTwoBody,
        "torque" => Channel::Torque,
        "temperature_shift" => Channel::TemperatureShift,
        other => {
            return Err(sec.err(
                "channel",
                format!("unknown channel `{other}` (expected force_translational, force_two_body, torque, temperature_shift)"),
            ))
        }
    };
    let force_psd = sec.opt_f64("budget_force_psd_n2_s")?;
    let torque_psd = sec.opt_f64("budget_torque_psd_n2m2_s")?;
    let temp = sec.quantity(BUDGET_T)?;
    let budget = match channel {
        Channel::ForceTranslational | Channel::ForceTwoBody => Budget::Psd {
            value: force_psd.ok_or_else(|| sec.section_err("missing `budget_force_psd_n2_s`"))?,
        },
        Channel::Torque => Budget::Psd {
            value: torque_psd.ok_or_else(|| sec.section_err("missing `budget_torque_psd_n2m2_s`"))?,
        },
        Channel::TemperatureShift => {
            let max_shift = temp.ok_or_else(|| sec.section_err("missing `budget_temperature_k`"))?;
            let m = sec.opt_f64("damping_mass_kg")?;
            let g = sec.opt_f64("damping_gamma_per_s")?;
            let d = sec.opt_f64("damping_d_phi_kg_m2_s")?;
            let damping = match (m, g, d) {
                (Some(mass), Some(gamma), None) => Damping::Translational { mass, gamma },
                (None, None, Some(d_phi)) => Damping::Rotational { d_phi },
                _ => {
                    return Err(sec.section_err(
                        "give either `damping_mass_kg` and `damping_gamma_per_s`, or `damping_d_phi_kg_m2_s`",
                    ))
                }
            };
            Budget::Temperature { max_shift, damping }
        }
    };
    let extra = match channel {
        Channel::ForceTranslational | Channel::ForceTwoBody => [("budget_torque_psd_n2m2_s", torque_psd.is_some()), ("budget_temperature_k", temp.is_some())],
        Channel::Torque => [("budget_force_psd_n2_s", force_psd.is_some()), ("budget_temperature_k", temp.is_some())],
        Channel::TemperatureShift => [("budget_force_psd_n2_s", force_psd.is_some()), ("budget_torque_psd_n2m2_s", torque_psd.is_some())],
    };
    for (key, present) in extra {
        if present {
            return Err(sec.err(key, "does not apply to this channel"));
        }
    }
    let band = [sec.quantity_req(BAND_LO)?, sec.quantity_req(BAND_HI)?];
    let colored = parse_colored(sec)?;
    let geo_sec = sec
        .child("geometry")?
        .ok_or_else(|| sec.section_err("missing `geometry` sub-table"))?;
    let geometry = parse_geometry(&geo_sec, true)?;
    sec.finish()?;
    let rec = ExperimentRecord {
        name,
        geometry,
        channel,
        budget,
        band,
        colored,
    };
    rec.validate().map_err(|e| sec.section_err(e.to_string()))?;
    Ok(rec)
}

/// Parse and validate a configuration. Returns the configuration and the
/// unit conversions applied on the way.
pub fn parse_config(text: &str) -> Result<(Config, Vec<Conversion>), ConfigError> {
    let root: Table = text.parse::<Table>().map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1));
        ConfigError {
            line,
            field: "(syntax)".into(),
            message: e.message().to_string(),
        }
    })?;
    let conversions = RefCell::new(Vec::new());
    let origin = |header: &str, index: Option<usize>| Origin {
        header: header.to_string(),
        index,
    };
    let top = Section::new(&root, origin("", None), text, &conversions);

    let run = top.child("run")?;
    let (name, seed) = match &run {
        Some(s) => {
            let name = s.opt_str("name")?.unwrap_or("run").to_string();
            let seed = s.opt_u64("seed")?.unwrap_or(0);
            s.finish()?;
            (name, seed)
        }
        None => ("run".to_string(), 0),
    };

    let collapse = match top.child("collapse")? {
        Some(s) => {
            let lambda = s.opt_f64("lambda_per_s")?.ok_or_else(|| s.section_err("missing `lambda_per_s`"))?;
            let rc = s.quantity_req(RC)?;
            let colored = parse_colored(&s)?;
            s.finish()?;
            let p = CollapseParams { lambda, rc, colored };
            p.validate().map_err(|e| s.section_err(e.to_string()))?;
            p
        }
        None => CollapseParams::grw(),
    };

    let geometry = match top.child("geometry")? {
        Some(s) => Some(parse_geometry(&s, true)?),
        None => None,
    };

    let optomech = match top.child("optomech")? {
        Some(s) => {
            let mass = match s.quantity(MASS)? {
                Some(m) => m,
                None => geometry
                    .as_ref()
                    .map(|g| g.total_mass())
                    .ok_or_else(|| s.section_err("missing `mass_kg` and no [geometry] to take it from"))?,
            };
            let cfg = OptomechConfig {
                mass,
                omega_m: s.quantity_req(OMEGA_M)?,
                gamma_m: s.f64_or("gamma_m_per_s", 0.0)?,
                temperature: s.quantity(TEMPERATURE)?.unwrap_or(0.0),
                kappa: s.f64_or("kappa_per_s", 1.0)?,
                delta: s.quantity(DELTA)?.unwrap_or(0.0),
                chi: s.f64_or("chi_rad_s_m", 0.0)?,
                alpha_sq: s.f64_or("alpha_sq", 0.0)?,
            };
            s.finish()?;
            cfg.validate_mechanical().map_err(|e| s.section_err(e.to_string()))?;
            if !(cfg.kappa.is_finite() && cfg.kappa > 0.0) {
                return Err(s.err("kappa_per_s", "must be > 0"));
            }
            if !(cfg.alpha_sq.is_finite() && cfg.alpha_sq >= 0.0) {
                return Err(s.err("alpha_sq", "must be >= 0"));
            }
            Some(cfg)
        }
        None => None,
    };

    let frequencies = match top.child("spectrum")? {
        Some(s) => {
            let g = FrequencyGrid {
                omega_min: s.quantity_req(OMEGA_MIN)?,
                omega_max: s.quantity_req(OMEGA_MAX)?,
                points: s.u64_req("points")? as usize,
                log_spaced: match s.opt_str("spacing")?.unwrap_or("log") {
                    "log" => true,
                    "linear" => false,
                    other => return Err(s.err("spacing", format!("unknown spacing `{other}` (expected log or linear)"))),
                },
                kind: match s.opt_str("kind")? {
                    None if optomech.is_some() => SpectrumKind::Displacement,
                    None | Some("force") => SpectrumKind::Force,
                    Some("displacement") => SpectrumKind::Displacement,
                    Some("torque") => SpectrumKind::Torque,
                    Some(other) => {
                        return Err(s.err(
                            "kind",
                            format!("unknown spectrum kind `{other}` (expected displacement, force or torque)"),
                        ))
                    }
                },
            };
            s.finish()?;
            if g.kind == SpectrumKind::Displacement && optomech.is_none() {
                return Err(s.err("kind", "a displacement spectrum needs an [optomech] section"));
            }
            if g.points == 0 {
                return Err(s.err("points", "must be >= 1"));
            }
            if !(g.omega_min.is_finite() && g.omega_max.is_finite() && g.omega_max >= g.omega_min && g.omega_min >= 0.0) {
                return Err(s.section_err("need 0 <= omega_min <= omega_max"));
            }
            if g.log_spaced && g.omega_min <= 0.0 {
                return Err(s.section_err("log spacing needs omega_min > 0"));
            }
            if g.points > 1 && g.omega_max == g.omega_min {
                return Err(s.section_err("several points need omega_max > omega_min"));
            }
            Some(g)
        }
        None => None,
    };

    let mut experiments = Vec::new();
    match top.raw("experiment") {
        None => {}
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                let Value::Table(t) = item else {
                    return Err(top.err("experiment", "use [[experiment]] tables"));
                };
                let s = Section::new(t, origin("experiment", Some(i)), text, &conversions);
                experiments.push(parse_experiment(&s)?);
            }
        }
        Some(_) => return Err(top.err("experiment", "use [[experiment]] tables")),
    }
    for (i, e) in experiments.iter().enumerate() {
        if experiments[..i].iter().any(|o| o.name == e.name) {
            let s = Section::new(&root, origin("experiment", Some(i)), text, &conversions);
            return Err(s.err("name", format!("duplicate experiment name `{}`", e.name)));
        }
    }

    let scan = match top.child("scan")? {
        Some(s) => {
            let d = ScanSpec::default();
            let sc = ScanSpec {
                rc_min: s.quantity(RC_MIN)?.unwrap_or(d.rc_min),
                rc_max: s.quantity(RC_MAX)?.unwrap_or(d.rc_max),
                points_per_decade: s
                    .opt_u64("points_per_decade")?
                    .unwrap_or(u64::from(d.points_per_decade))
                    .try_into()
                    .map_err(|_| s.err("points_per_decade", "too large"))?,
            };
            s.finish()?;
            if !(sc.rc_min > 0.0 && sc.rc_max >= sc.rc_min && sc.rc_max.is_finite()) {
                return Err(s.section_err("need 0 < rc_min_m <= rc_max_m"));
            }
            if sc.points_per_decade == 0 {
                return Err(s.err("points_per_decade", "must be >= 1"));
            }
            sc
        }
        None => ScanSpec::default(),
    };

    let quadrature = match top.child("quadrature")? {
        Some(s) => {
            let d = QuadratureSpec::default();
            let q = QuadratureSpec {
                rel_tol: s.f64_or("rel_tol", d.rel_tol)?,
                abs_tol: s.f64_or("abs_tol", d.abs_tol)?,
                max_evals: s.opt_u64("max_evals")?.unwrap_or(d.max_evals),
                cutoff_factor: s.f64_or("cutoff_factor", d.cutoff_factor)?,
            };
            s.finish()?;
            q.validate().map_err(|e| s.section_err(e.to_string()))?;
            q
        }
        None => QuadratureSpec::default(),
    };

    let simulation = match top.child("simulation")? {
        Some(s) => {
            let sim = SimConfig {
                dt: s.opt_f64("dt_s")?.ok_or_else(|| s.section_err("missing `dt_s`"))?,
                steps: s.u64_req("steps")?,
                trajectories: s.u64_req("trajectories")?,
                seed,
                record_every: s.opt_u64("record_every")?.unwrap_or(1),
                burn_in: s.opt_u64("burn_in")?.unwrap_or(0),
                welch_segment: s.opt_u64("welch_segment")?.unwrap_or(0),
                keep_trajectories: false,
            };
            let write_trajectories = s.opt_bool("write_trajectories")?.unwrap_or(false);
            s.finish()?;
            let mech = optomech.unwrap_or(OptomechConfig::mechanical(1.0, 0.0, 0.0, 0.0));
            sim.validate(&mech).map_err(|e| s.section_err(e.to_string()))?;
            Some(Simulation {
                sim: SimConfig {
                    keep_trajectories: write_trajectories,
                    ..sim
                },
                write_trajectories,
            })
        }
        None => None,
    };

    top.finish()?;
    let cfg = Config {
        name,
        seed,
        collapse,
        geometry,
        optomech,
        frequencies,
        experiments,
        scan,
        quadrature,
        simulation,
    };
    Ok((cfg, conversions.into_inner()))
}

// ---------------------------------------------------------------------------
// Canonical serialisation

fn vec3(v: [f64; 3]) -> Value {
    Value::Array(v.iter().map(|x| Value::Float(*x)).collect())
}

fn geometry_table(g: &MassGeometry) -> Table {
    let mut t = Table::new();
    let mut put = |k: &str, v: Value| {
        t.insert(k.to_string(), v);
    };
    match g {
        MassGeometry::Point { mass } => {
            put("kind", "point".into());
            put("mass_kg", (*mass).into());
        }
        MassGeometry::Sphere { mass, radius } => {
            put("kind", "sphere".into());
            put("mass_kg", (*mass).into());
            put("radius_m", (*radius).into());
        }
        MassGeometry::Cuboid { mass, lx, ly, lz } => {
            put("kind", "cuboid".into());
            put("mass_kg", (*mass).into());
            put("lx_m", (*lx).into());
            put("ly_m", (*ly).into());
            put("lz_m", (*lz).into());
        }
        MassGeometry::Cylinder {
            mass,
            radius,
            length,
            axis,
        } => {
            put("kind", "cylinder".into());
            put("mass_kg", (*mass).into());
            put("radius_m", (*radius).into());
            put("length_m", (*length).into());
            put("axis", vec3(*axis));
        }
        MassGeometry::Multilayer(ml) => {
            put("kind", "multilayer".into());
            put("layer_count", i64::from(ml.layer_count).into());
            put("d1_m", ml.d1.into());
            put("d2_m", ml.d2.into());
            put("rho1_kg_m3", ml.rho1.into());
            put("rho2_kg_m3", ml.rho2.into());
            put("lx_m", ml.lx.into());
            put("ly_m", ml.ly.into());
            put("stacking_axis", vec3(ml.stacking_axis));
        }
        MassGeometry::PointLattice { points } => {
            put("kind", "point_lattice".into());
            put(
                "points_m_kg",
                Value::Array(
                    points
                        .iter()
                        .map(|p| {
                            Value::Array(
                                [p.position[0], p.position[1], p.position[2], p.mass]
                                    .iter()
                                    .map(|x| Value::Float(*x))
                                    .collect(),
                            )
                        })
                        .collect(),
                ),
            );
        }
        MassGeometry::TwoBody { unit, separation } => {
            put("kind", "two_body".into());
            put("separation_m", (*separation).into());
            put("unit", Value::Table(geometry_table(unit)));
        }
    }
    t
}

fn colored_into(t: &mut Table, c: &Option<ColoredNoiseModel>) {
    match c {
        None => {}
        Some(ColoredNoiseModel::White) => {
            t.insert("colored".into(), "white".into());
        }
        Some(ColoredNoiseModel::LorentzianCutoff { omega_c }) => {
            t.insert("colored".into(), "lorentzian".into());
            t.insert("omega_c_rad_s".into(), (*omega_c).into());
        }
    }
}

fn int(v: u64) -> Value {
    Value::Integer(v as i64)
}

impl Config {
    /// Canonical TOML form, SI keys only.
    pub fn to_toml(&self) -> String {
        let mut root = Table::new();
        let mut run = Table::new();
        run.insert("name".into(), self.name.clone().into());
        run.insert("seed".into(), int(self.seed));
        root.insert("run".into(), Value::Table(run));

        let mut c = Table::new();
        c.insert("lambda_per_s".into(), self.collapse.lambda.into());
        c.insert("rc_m".into(), self.collapse.rc.into());
        colored_into(&mut c, &self.collapse.colored);
        root.insert("collapse".into(), Value::Table(c));

        if let Some(g) = &self.geometry {
            root.insert("geometry".into(), Value::Table(geometry_table(g)));
        }
        if let Some(o) = &self.optomech {
            let mut t = Table::new();
            t.insert("mass_kg".into(), o.mass.into());
            t.insert("omega_m_rad_s".into(), o.omega_m.into());
            t.insert("gamma_m_per_s".into(), o.gamma_m.into());
            t.insert("temperature_k".into(), o.temperature.into());
            t.insert("kappa_per_s".into(), o.kappa.into());
            t.insert("delta_rad_s".into(), o.delta.into());
            t.insert("chi_rad_s_m".into(), o.chi.into());
            t.insert("alpha_sq".into(), o.alpha_sq.into());
            root.insert("optomech".into(), Value::Table(t));
        }
        if let Some(f) = &self.frequencies {
            let mut t = Table::new();
            t.insert("omega_min_rad_s".into(), f.omega_min.into());
            t.insert("omega_max_rad_s".into(), f.omega_max.into());
            t.insert("points".into(), int(f.points as u64));
            t.insert("spacing".into(), if f.log_spaced { "log" } else { "linear" }.into());
            let kind = match f.kind {
                SpectrumKind::Displacement => "displacement",
                SpectrumKind::Force => "force",
                SpectrumKind::Torque => "torque",
            };
            t.insert("kind".into(), kind.into());
            root.insert("spectrum".into(), Value::Table(t));
        }
        if !self.experiments.is_empty() {
            let items = self
                .experiments
                .iter()
                .map(|e| {
                    let mut t = Table::new();
                    t.insert("name".into(), e.name.clone().into());
                    let channel = match e.channel {
                        Channel::ForceTranslational => "force_translational",
                        Channel::ForceTwoBody => "force_two_body",
                        Channel::Torque => "torque",
                        Channel::TemperatureShift => "temperature_shift",
                    };
                    t.insert("channel".into(), channel.into());
                    match (e.channel, e.budget) {
                        (Channel::Torque, Budget::Psd { value }) => {
                            t.insert("budget_torque_psd_n2m2_s".into(), value.into());
                        }
                        (_, Budget::Psd { value }) => {
                            t.insert("budget_force_psd_n2_s".into(), value.into());
                        }
                        (_, Budget::Temperature { max_shift, damping }) => {
                            t.insert("budget_temperature_k".into(), max_shift.into());
                            match damping {
                                Damping::Translational { mass, gamma } => {
                                    t.insert("damping_mass_kg".into(), mass.into());
                                    t.insert("damping_gamma_per_s".into(), gamma.into());
                                }
                                Damping::Rotational { d_phi } => {
                                    t.insert("damping_d_phi_kg_m2_s".into(), d_phi.into());
                                }
                            }
                        }
                    }
                    t.insert("band_lo_rad_s".into(), e.band[0].into());
                    t.insert("band_hi_rad_s".into(), e.band[1].into());
                    colored_into(&mut t, &e.colored);
                    t.insert("geometry".into(), Value::Table(geometry_table(&e.geometry)));
                    Value::Table(t)
                })
                .collect();
            root.insert("experiment".into(), Value::Array(items));
        }
        let mut s = Table::new();
        s.insert("rc_min_m".into(), self.scan.rc_min.into());
        s.insert("rc_max_m".into(), self.scan.rc_max.into());
        s.insert("points_per_decade".into(), int(u64::from(self.scan.points_per_decade)));
        root.insert("scan".into(), Value::Table(s));

        let mut q = Table::new();
        q.insert("rel_tol".into(), self.quadrature.rel_tol.into());
        q.insert("abs_tol".into(), self.quadrature.abs_tol.into());
        q.insert("max_evals".into(), int(self.quadrature.max_evals));
        q.insert("cutoff_factor".into(), self.quadrature.cutoff_factor.into());
        root.insert("quadrature".into(), Value::Table(q));

        if let Some(sim) = &self.simulation {
            let mut t = Table::new();
            t.insert("dt_s".into(), sim.sim.dt.into());
            t.insert("steps".into(), int(sim.sim.steps));
            t.insert("trajectories".into(), int(sim.sim.trajectories));
            t.insert("record_every".into(), int(sim.sim.record_every));
            t.insert("burn_in".into(), int(sim.sim.burn_in));
            t.insert("welch_segment".into(), int(sim.sim.welch_segment));
            t.insert("write_trajectories".into(), sim.write_trajectories.into());
            root.insert("simulation".into(), Value::Table(t));
        }
        toml::to_string(&root).expect("configuration tables always serialise")
    }

    /// SHA-256 of the canonical form.
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_toml().as_bytes()).into()
    }

    pub fn hash_hex(&self) -> String {
        self.hash().iter().map(|b| format!("{b:02x}")).collect()
    }
}
