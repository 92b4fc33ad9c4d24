//! Config files, preset scenarios and run output.
//!
//! A config is a flat list of `key = value` lines; `#` starts a comment.
//! Values are JSON literals (numbers, booleans, arrays, quoted strings) or a
//! bare string. See the README for the full key list.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use crate::diagnostics::{fit_growth_exponent, DiagnosticRecord, GrowthFit};
use crate::dynamics::{
    discretize, run_with_observer, PatchSpec, Profile, RunFailure, SimulationConfig,
};
use crate::error::{Error, Result};
use crate::geometry::{validate_map, ExteriorMapSpec, MapValidationReport, Point};
use crate::kernels::{inverse_distance_probe, KernelContext};

pub const CSV_COLUMNS: [&str; 17] = [
    "t",
    "mass",
    "alpha",
    "energy",
    "log_moment",
    "j_theta1",
    "j_theta2",
    "inertia",
    "center_x",
    "center_y",
    "r_support_phys",
    "r_support_mapped",
    "f_2",
    "f_4",
    "f_8",
    "f_16",
    "theta",
];

const DEFAULT_STRIDE: usize = 10;
const DEFAULT_PATCH_MASS: f64 = 1.0;
const DEFAULT_GRID_N: usize = 24;
const VALIDATE_R_MAX: f64 = 10.0;
const VALIDATE_SAMPLES: usize = 400;
const PROBE_POINTS: usize = 2000;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MapSection {
    pub preset: Option<String>,
    pub beta: Option<f64>,
    pub inverse_coeffs: Option<Vec<Complex64>>,
    pub newton_tol: Option<f64>,
    pub newton_max_iter: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartialPatch {
    pub center: Option<Point>,
    pub radius: Option<f64>,
    pub profile: Option<Profile>,
    pub mass: Option<f64>,
    pub grid_n: Option<usize>,
}

/// A config with every field optional. Layers are merged with
/// [`PartialConfig::merge`] and turned into a [`SimulationConfig`] by
/// [`PartialConfig::resolve`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartialConfig {
    pub map: Option<MapSection>,
    pub patches: BTreeMap<usize, PartialPatch>,
    pub boundary_circulation: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub diagnostic_stride: Option<usize>,
    pub blob_delta: Option<f64>,
    pub even_symmetric: Option<bool>,
    pub seed: Option<u64>,
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

struct Field<'a> {
    line: usize,
    key: &'a str,
    value: Value,
}

impl Field<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            key: self.key.to_string(),
            msg: msg.into(),
        }
    }

    fn f64(&self) -> Result<f64> {
        self.value
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| self.err(format!("expected a number, got {}", self.value)))
    }

    fn u64(&self) -> Result<u64> {
        self.value.as_u64().ok_or_else(|| {
            self.err(format!(
                "expected a nonnegative integer, got {}",
                self.value
            ))
        })
    }

    fn usize(&self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.err("integer out of range"))
    }

    fn bool(&self) -> Result<bool> {
        match &self.value {
            Value::Bool(b) => Ok(*b),
            v => Err(self.err(format!("expected true or false, got {v}"))),
        }
    }

    fn string(&self) -> Result<String> {
        match &self.value {
            Value::String(s) => Ok(s.clone()),
            v => Err(self.err(format!("expected a string, got {v}"))),
        }
    }

    fn pair(&self, v: &Value) -> Result<Complex64> {
        match v.as_array().map(|a| a.as_slice()) {
            Some([re, im]) => match (re.as_f64(), im.as_f64()) {
                (Some(re), Some(im)) if re.is_finite() && im.is_finite() => {
                    Ok(Complex64::new(re, im))
                }
                _ => Err(self.err(format!("expected [re, im] numbers, got {v}"))),
            },
            _ => Err(self.err(format!("expected a two-element array [x, y], got {v}"))),
        }
    }

    fn point(&self) -> Result<Complex64> {
        self.pair(&self.value)
    }

    fn points(&self) -> Result<Vec<Complex64>> {
        match &self.value {
            Value::Array(items) => items.iter().map(|v| self.pair(v)).collect(),
            v => Err(self.err(format!("expected an array of [re, im] pairs, got {v}"))),
        }
    }
}

fn split_patch_key(key: &str) -> Option<(usize, &str)> {
    let rest = key.strip_prefix("patch[")?;
    let (index, field) = rest.split_once("].")?;
    Some((index.parse().ok()?, field))
}

impl PartialConfig {
    /// Parses a config document. Only syntax and value types are checked here.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = PartialConfig::default();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                key: line.to_string(),
                msg: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            let raw = raw.trim();
            if let Some(first) = seen.insert(key.to_string(), line_no) {
                return Err(Error::Parse {
                    line: line_no,
                    key: key.to_string(),
                    msg: format!("duplicate key (first set on line {first})"),
                });
            }
            if raw.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    key: key.to_string(),
                    msg: "missing value".into(),
                });
            }
            let field = Field {
                line: line_no,
                key,
                value: parse_value(raw),
            };
            out.set(&field)?;
        }
        Ok(out)
    }

    fn set(&mut self, f: &Field) -> Result<()> {
        if let Some(map_key) = f.key.strip_prefix("map.") {
            let map = self.map.get_or_insert_with(MapSection::default);
            match map_key {
                "preset" => map.preset = Some(f.string()?),
                "beta" => map.beta = Some(f.f64()?),
                "inverse_coeffs" => map.inverse_coeffs = Some(f.points()?),
                "newton_tol" => map.newton_tol = Some(f.f64()?),
                "newton_max_iter" => map.newton_max_iter = Some(f.usize()?),
                _ => return Err(f.err("unknown key")),
            }
            return Ok(());
        }
        if let Some((index, field)) = split_patch_key(f.key) {
            let patch = self.patches.entry(index).or_default();
            match field {
                "center" => patch.center = Some(f.point()?),
                "radius" => patch.radius = Some(f.f64()?),
                "profile" => {
                    let name = f.string()?;
                    patch.profile = Some(Profile::parse(&name).ok_or_else(|| {
                        f.err(format!("unknown profile `{name}` (uniform or cosine-bump)"))
                    })?)
                }
                "mass" => patch.mass = Some(f.f64()?),
                "grid_n" => patch.grid_n = Some(f.usize()?),
                _ => return Err(f.err("unknown key")),
            }
            return Ok(());
        }
        match f.key {
            "boundary_circulation" => self.boundary_circulation = Some(f.f64()?),
            "dt" => self.dt = Some(f.f64()?),
            "t_end" => self.t_end = Some(f.f64()?),
            "diagnostic_stride" => self.diagnostic_stride = Some(f.usize()?),
            "blob_delta" => self.blob_delta = Some(f.f64()?),
            "even_symmetric" => self.even_symmetric = Some(f.bool()?),
            "seed" => self.seed = Some(f.u64()?),
            _ => return Err(f.err("unknown key")),
        }
        Ok(())
    }

    /// Layers `overlay` on top of `self`. A map section in the overlay
    /// replaces the base map as a whole; patches merge field by field.
    pub fn merge(mut self, overlay: PartialConfig) -> PartialConfig {
        if overlay.map.is_some() {
            self.map = overlay.map;
        }
        for (i, p) in overlay.patches {
            let base = self.patches.entry(i).or_default();
            base.center = p.center.or(base.center);
            base.radius = p.radius.or(base.radius);
            base.profile = p.profile.or(base.profile);
            base.mass = p.mass.or(base.mass);
            base.grid_n = p.grid_n.or(base.grid_n);
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if overlay.$f.is_some() { self.$f = overlay.$f; } )* };
        }
        take!(
            boundary_circulation,
            dt,
            t_end,
            diagnostic_stride,
            blob_delta,
            even_symmetric,
            seed
        );
        self
    }

    /// Fills defaults and validates.
    pub fn resolve(&self) -> Result<SimulationConfig> {
        let map = resolve_map(
            self.map
                .as_ref()
                .ok_or_else(|| Error::config("map", "missing"))?,
        )?;

        if self.patches.is_empty() {
            return Err(Error::config("patch[0]", "at least one patch is required"));
        }
        let mut patches = Vec::with_capacity(self.patches.len());
        for (expected, (&i, p)) in self.patches.iter().enumerate() {
            if i != expected {
                return Err(Error::config(
                    format!("patch[{expected}]"),
                    "patch indices must be contiguous from 0",
                ));
            }
            let key = |f: &str| format!("patch[{i}].{f}");
            let patch = PatchSpec {
                center: p
                    .center
                    .ok_or_else(|| Error::config(key("center"), "missing"))?,
                radius: p
                    .radius
                    .ok_or_else(|| Error::config(key("radius"), "missing"))?,
                profile: p.profile.unwrap_or(Profile::Uniform),
                total_mass: p.mass.unwrap_or(DEFAULT_PATCH_MASS),
                grid_n: p.grid_n.unwrap_or(DEFAULT_GRID_N),
            };
            if !(patch.radius.is_finite() && patch.radius > 0.0) {
                return Err(Error::config(key("radius"), "must be positive"));
            }
            if !(patch.total_mass.is_finite() && patch.total_mass > 0.0) {
                return Err(Error::config(key("mass"), "must be positive"));
            }
            if patch.grid_n == 0 {
                return Err(Error::config(key("grid_n"), "must be at least 1"));
            }
            crate::dynamics::check_patch(&map, &patch, i)?;
            patches.push(patch);
        }

        let dt = self.dt.ok_or_else(|| Error::config("dt", "missing"))?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::config("dt", "must be positive"));
        }
        let t_end = self
            .t_end
            .ok_or_else(|| Error::config("t_end", "missing"))?;
        if !(t_end.is_finite() && t_end >= 0.0) {
            return Err(Error::config("t_end", "must be nonnegative"));
        }
        let diagnostic_stride = self.diagnostic_stride.unwrap_or(DEFAULT_STRIDE);
        if diagnostic_stride == 0 {
            return Err(Error::config("diagnostic_stride", "must be at least 1"));
        }
        let boundary_circulation = self.boundary_circulation.unwrap_or(0.0);
        let even_symmetric = self.even_symmetric.unwrap_or(false);
        if even_symmetric && !map.is_unit_disk() {
            return Err(Error::config(
                "even_symmetric",
                "even-symmetric mode requires the unit disk map",
            ));
        }
        let blob_delta = match self.blob_delta {
            Some(d) if d.is_finite() && d >= 0.0 => d,
            Some(_) => return Err(Error::config("blob_delta", "must be nonnegative")),
            None => default_blob_delta(&map, &patches)?,
        };

        let config = SimulationConfig {
            map,
            patches,
            boundary_circulation,
            dt,
            t_end,
            diagnostic_stride,
            blob_delta,
            even_symmetric,
            seed: self.seed.unwrap_or(0),
        };
        // catches even-mode pairing and particles on the boundary
        discretize(
            &config.map,
            &config.patches,
            config.blob_delta,
            config.even_symmetric,
        )?;
        Ok(config)
    }
}

/// Twice the largest mapped grid spacing, `2 max_p |T'(c_p)| h_p`.
fn default_blob_delta(map: &ExteriorMapSpec, patches: &[PatchSpec]) -> Result<f64> {
    let mut d = 0.0f64;
    for p in patches {
        d = d.max(map.map_derivative(p.center)?.norm() * p.spacing());
    }
    Ok(2.0 * d)
}

fn build_map(section: &MapSection) -> Result<ExteriorMapSpec> {
    let base = match (&section.preset, section.beta, &section.inverse_coeffs) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
            return Err(Error::config(
                "map.preset",
                "cannot be combined with map.beta or map.inverse_coeffs",
            ))
        }
        (Some(name), None, None) => ExteriorMapSpec::preset(name)?,
        (None, beta, coeffs) => ExteriorMapSpec::new(
            beta.ok_or_else(|| Error::config("map.beta", "missing (or set map.preset)"))?,
            coeffs.clone().unwrap_or_default(),
        )?,
    };
    ExteriorMapSpec::with_newton(
        base.beta(),
        base.inverse_coeffs().to_vec(),
        section.newton_tol.unwrap_or(base.newton_tol()),
        section.newton_max_iter.unwrap_or(base.newton_max_iter()),
    )
}

/// Builds the map of a config's map section and rejects it unless it is
/// injective with finite derivative bounds.
pub fn resolve_map(section: &MapSection) -> Result<ExteriorMapSpec> {
    let map = build_map(section)?;
    let report = validate_map(&map, VALIDATE_R_MAX, VALIDATE_SAMPLES);
    if !report.injectivity_ok {
        return Err(Error::InvalidMap("map is not injective on |w| >= 1".into()));
    }
    if !report.all_finite() {
        return Err(Error::InvalidMap(
            "map derivative bounds are not finite".into(),
        ));
    }
    Ok(map)
}

/// Parses and validates a complete config document.
pub fn parse_config(text: &str) -> Result<SimulationConfig> {
    PartialConfig::parse(text)?.resolve()
}

pub fn parse_config_file(path: &Path) -> Result<SimulationConfig> {
    parse_config(&read_text(path)?)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Writes a config with every field explicit. Parsing the output gives back
/// the same config.
pub fn write_config(config: &SimulationConfig) -> String {
    let mut s = String::new();
    let map = &config.map;
    let coeffs: Vec<String> = map
        .inverse_coeffs()
        .iter()
        .map(|c| format!("[{:?}, {:?}]", c.re, c.im))
        .collect();
    let _ = writeln!(s, "map.beta = {:?}", map.beta());
    let _ = writeln!(s, "map.inverse_coeffs = [{}]", coeffs.join(", "));
    let _ = writeln!(s, "map.newton_tol = {:?}", map.newton_tol());
    let _ = writeln!(s, "map.newton_max_iter = {}", map.newton_max_iter());
    for (i, p) in config.patches.iter().enumerate() {
        let _ = writeln!(
            s,
            "patch[{i}].center = [{:?}, {:?}]",
            p.center.re, p.center.im
        );
        let _ = writeln!(s, "patch[{i}].radius = {:?}", p.radius);
        let _ = writeln!(s, "patch[{i}].profile = {}", p.profile.name());
        let _ = writeln!(s, "patch[{i}].mass = {:?}", p.total_mass);
        let _ = writeln!(s, "patch[{i}].grid_n = {}", p.grid_n);
    }
    let _ = writeln!(
        s,
        "boundary_circulation = {:?}",
        config.boundary_circulation
    );
    let _ = writeln!(s, "dt = {:?}", config.dt);
    let _ = writeln!(s, "t_end = {:?}", config.t_end);
    let _ = writeln!(s, "diagnostic_stride = {}", config.diagnostic_stride);
    let _ = writeln!(s, "blob_delta = {:?}", config.blob_delta);
    let _ = writeln!(s, "even_symmetric = {}", config.even_symmetric);
    let _ = writeln!(s, "seed = {}", config.seed);
    s
}

macro_rules! ellipse_preset {
    ($circulation:literal) => {
        concat!(
            "map.preset = ellipse:0.5\n",
            "patch[0].center = [2.0, 1.0]\n",
            "patch[0].radius = 0.5\n",
            "patch[0].profile = cosine-bump\n",
            "patch[0].mass = 1.0\n",
            "patch[0].grid_n = 24\n",
            "boundary_circulation = ",
            $circulation,
            "\n",
            "dt = 0.005\n",
            "t_end = 20.0\n",
            "diagnostic_stride = 20\n"
        )
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ScenarioName {
    DiskEven,
    DiskGeneric,
    EllipseTheta1,
    EllipseTheta2NegativeAlpha,
    EllipseTheta2LargeAlpha,
    OrbitRegression,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 6] = [
        ScenarioName::DiskEven,
        ScenarioName::DiskGeneric,
        ScenarioName::EllipseTheta1,
        ScenarioName::EllipseTheta2NegativeAlpha,
        ScenarioName::EllipseTheta2LargeAlpha,
        ScenarioName::OrbitRegression,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::DiskEven => "disk-even",
            ScenarioName::DiskGeneric => "disk-generic",
            ScenarioName::EllipseTheta1 => "ellipse-theta1",
            ScenarioName::EllipseTheta2NegativeAlpha => "ellipse-theta2-negative-alpha",
            ScenarioName::EllipseTheta2LargeAlpha => "ellipse-theta2-large-alpha",
            ScenarioName::OrbitRegression => "orbit-regression",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|n| n.as_str()).collect();
                Error::config(
                    "scenario",
                    format!("unknown scenario `{s}` (one of {})", names.join(", ")),
                )
            })
    }

    /// The preset as a config document.
    pub fn preset_text(self) -> &'static str {
        match self {
            ScenarioName::DiskEven => {
                "map.preset = disk\n\
                 patch[0].center = [2.5, 0.0]\n\
                 patch[0].radius = 0.75\n\
                 patch[0].profile = cosine-bump\n\
                 patch[0].mass = 0.5\n\
                 patch[0].grid_n = 26\n\
                 patch[1].center = [-2.5, 0.0]\n\
                 patch[1].radius = 0.75\n\
                 patch[1].profile = cosine-bump\n\
                 patch[1].mass = 0.5\n\
                 patch[1].grid_n = 26\n\
                 even_symmetric = true\n\
                 boundary_circulation = 0.0\n\
                 dt = 0.005\n\
                 t_end = 20.0\n\
                 diagnostic_stride = 20\n"
            }
            ScenarioName::DiskGeneric => {
                "map.preset = disk\n\
                 patch[0].center = [2.5, 0.0]\n\
                 patch[0].radius = 0.75\n\
                 patch[0].profile = cosine-bump\n\
                 patch[0].mass = 0.7\n\
                 patch[0].grid_n = 30\n\
                 patch[1].center = [1.2, 1.9]\n\
                 patch[1].radius = 0.5\n\
                 patch[1].profile = cosine-bump\n\
                 patch[1].mass = 0.3\n\
                 patch[1].grid_n = 20\n\
                 boundary_circulation = 0.0\n\
                 dt = 0.005\n\
                 t_end = 20.0\n\
                 diagnostic_stride = 20\n"
            }
            ScenarioName::EllipseTheta1 => ellipse_preset!("0.0"),
            ScenarioName::EllipseTheta2NegativeAlpha => ellipse_preset!("-2.0"),
            ScenarioName::EllipseTheta2LargeAlpha => ellipse_preset!("1.0"),
            ScenarioName::OrbitRegression => {
                "map.preset = disk\n\
                 patch[0].center = [2.0, 0.0]\n\
                 patch[0].radius = 0.1\n\
                 patch[0].mass = 6.283185307179586\n\
                 patch[0].grid_n = 1\n\
                 boundary_circulation = -6.283185307179586\n\
                 blob_delta = 0.0\n\
                 dt = 0.001\n\
                 t_end = 20.0\n\
                 diagnostic_stride = 100\n"
            }
        }
    }

    pub fn preset(self) -> PartialConfig {
        PartialConfig::parse(self.preset_text()).expect("preset text parses")
    }
}

impl std::fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Command-line overrides applied on top of the preset and config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CliOverrides {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    /// Grid cells per side for every patch.
    pub grid_n: Option<usize>,
    pub seed: Option<u64>,
}

/// A named preset plus overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// `None` for a run driven by a config file alone.
    pub name: Option<ScenarioName>,
    pub overrides: PartialConfig,
}

impl Scenario {
    pub fn preset(name: ScenarioName) -> Self {
        Self {
            name: Some(name),
            overrides: PartialConfig::default(),
        }
    }

    /// Stacks preset, config file and CLI flags, later layers winning.
    pub fn build(
        name: Option<ScenarioName>,
        file: Option<PartialConfig>,
        cli: &CliOverrides,
    ) -> Self {
        let mut overrides = file.unwrap_or_default();
        overrides.dt = cli.dt.or(overrides.dt);
        overrides.t_end = cli.t_end.or(overrides.t_end);
        overrides.seed = cli.seed.or(overrides.seed);
        if let Some(n) = cli.grid_n {
            let mut indices: Vec<usize> = overrides.patches.keys().copied().collect();
            if let Some(name) = name {
                indices.extend(name.preset().patches.keys());
            }
            for i in indices {
                overrides.patches.entry(i).or_default().grid_n = Some(n);
            }
        }
        Self { name, overrides }
    }

    pub fn label(&self) -> &str {
        self.name.map_or("custom", |n| n.as_str())
    }

    pub fn resolve(&self) -> Result<SimulationConfig> {
        let base = self.name.map(|n| n.preset()).unwrap_or_default();
        base.merge(self.overrides.clone()).resolve()
    }
}

/// Shortest round-trip formatting, as used in every output file.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn csv_header() -> String {
    format!("# {}", CSV_COLUMNS.join(","))
}

pub fn csv_row(r: &DiagnosticRecord) -> String {
    let mut fields = vec![
        r.t,
        r.mass,
        r.alpha,
        r.energy,
        r.log_moment,
        r.j_theta1,
        r.j_theta2,
        r.inertia,
        r.center.re,
        r.center.im,
        r.r_support_phys,
        r.r_support_mapped,
    ];
    fields.extend(r.tail_mass.iter().map(|&(_, f)| f));
    let mut s: Vec<String> = fields.into_iter().map(fmt_f64).collect();
    s.push(r.theta.to_string());
    s.join(",")
}

pub fn write_csv(records: &[DiagnosticRecord], aborted_at: Option<f64>) -> String {
    let mut s = csv_header();
    s.push('\n');
    for r in records {
        s.push_str(&csv_row(r));
        s.push('\n');
    }
    if let Some(t) = aborted_at {
        let _ = writeln!(s, "# ABORTED t={}", fmt_f64(t));
    }
    s
}

/// Reads `(t, value)` pairs of one CSV column. `col` is a column name or one
/// of the aliases `r_phys` and `r_mapped`.
pub fn read_csv_column(text: &str, col: &str) -> Result<Vec<(f64, f64)>> {
    let name = match col {
        "r_phys" => "r_support_phys",
        "r_mapped" => "r_support_mapped",
        other => other,
    };
    let bad = |line: usize, msg: String| Error::Parse {
        line,
        key: name.to_string(),
        msg,
    };
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l.trim_start_matches('#').trim(),
            None => return Err(bad(0, "empty CSV".into())),
        }
    };
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let ci = columns
        .iter()
        .position(|c| *c == name)
        .ok_or_else(|| bad(1, format!("no column `{name}`")))?;
    let ti = columns
        .iter()
        .position(|c| *c == "t")
        .ok_or_else(|| bad(1, "no column `t`".into()))?;
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let get = |i: usize| -> Result<f64> {
            fields
                .get(i)
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| bad(idx + 1, format!("bad or missing field {i}")))
        };
        out.push((get(ti)?, get(ci)?));
    }
    Ok(out)
}

/// Parses `lo:hi`.
pub fn parse_window(s: &str) -> Result<(f64, f64)> {
    let err = || Error::config("window", format!("expected <t_lo>:<t_hi>, got `{s}`"));
    let (lo, hi) = s.split_once(':').ok_or_else(err)?;
    let lo: f64 = lo.trim().parse().map_err(|_| err())?;
    let hi: f64 = hi.trim().parse().map_err(|_| err())?;
    Ok((lo, hi))
}

/// Period of a single blob of strength `gamma` on a circle of radius `rho`
/// outside the unit disk, driven by its own image and the harmonic field.
pub fn disk_orbit_period(rho: f64, gamma: f64, alpha: f64, blob_delta: f64) -> f64 {
    let d = rho - 1.0 / rho;
    let u = -gamma / (2.0 * PI) * d / (d * d + blob_delta * blob_delta) + alpha / (2.0 * PI * rho);
    2.0 * PI * rho / u.abs()
}

/// Tracks the unwrapped polar angle of one particle and reports the time of
/// its first full revolution.
#[derive(Debug, Clone, Default)]
pub struct RevolutionTimer {
    last: Option<(f64, f64)>,
    swept: f64,
    period: Option<f64>,
}

impl RevolutionTimer {
    pub fn observe(&mut self, t: f64, x: Point) {
        if self.period.is_some() {
            return;
        }
        let angle = x.arg();
        if let Some((t0, a0)) = self.last {
            let mut da = angle - a0;
            if da > PI {
                da -= 2.0 * PI;
            } else if da < -PI {
                da += 2.0 * PI;
            }
            let before = self.swept;
            self.swept += da;
            if self.swept.abs() >= 2.0 * PI {
                let frac = (2.0 * PI - before.abs()) / da.abs();
                self.period = Some(t0 + frac * (t - t0));
            }
        }
        self.last = Some((t, angle));
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitCheck {
    pub measured: f64,
    pub exact: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub alpha: f64,
    pub mass: f64,
    pub theta: u8,
    pub r_phys: std::result::Result<GrowthFit, String>,
    pub r_mapped: std::result::Result<GrowthFit, String>,
    pub inverse_distance_sup: f64,
    pub orbit: Option<OrbitCheck>,
}

fn fit_lines(s: &mut String, prefix: &str, fit: &std::result::Result<GrowthFit, String>) {
    match fit {
        Ok(f) => {
            let _ = writeln!(s, "{prefix}.exponent = {}", fmt_f64(f.exponent));
            let _ = writeln!(s, "{prefix}.prefactor = {}", fmt_f64(f.prefactor));
            let _ = writeln!(
                s,
                "{prefix}.window = {}:{}",
                fmt_f64(f.fit_window.0),
                fmt_f64(f.fit_window.1)
            );
            let _ = writeln!(s, "{prefix}.residual = {}", fmt_f64(f.residual));
            let _ = writeln!(s, "{prefix}.samples = {}", f.samples);
        }
        Err(e) => {
            let _ = writeln!(s, "{prefix}.error = {e}");
        }
    }
}

impl FitSummary {
    pub fn render(&self, label: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# support radius fits: log r = log M + p log(1 + t)");
        let _ = writeln!(s, "scenario = {label}");
        let _ = writeln!(s, "mass = {}", fmt_f64(self.mass));
        let _ = writeln!(s, "alpha = {}", fmt_f64(self.alpha));
        let _ = writeln!(s, "theta = {}", self.theta);
        fit_lines(&mut s, "r_phys", &self.r_phys);
        fit_lines(&mut s, "r_mapped", &self.r_mapped);
        let _ = writeln!(
            s,
            "inverse_distance_sup = {}",
            fmt_f64(self.inverse_distance_sup)
        );
        if let Some(o) = &self.orbit {
            let _ = writeln!(s, "orbit.period_measured = {}", fmt_f64(o.measured));
            let _ = writeln!(s, "orbit.period_exact = {}", fmt_f64(o.exact));
            let _ = writeln!(s, "orbit.rel_error = {}", fmt_f64(o.rel_error));
        }
        s
    }
}

/// Result of [`run_scenario`]. `failure` is set when the simulation aborted;
/// the CSV then ends with an `# ABORTED` line and no fit file is written.
#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub config: SimulationConfig,
    pub records: Vec<DiagnosticRecord>,
    pub fit: Option<FitSummary>,
    pub failure: Option<RunFailure>,
}

impl ScenarioReport {
    pub fn exit_code(&self) -> i32 {
        if self.failure.is_some() {
            1
        } else {
            0
        }
    }
}

/// Runs a scenario and writes `diagnostics.csv`, `fit.txt` and
/// `config.resolved` into `out_dir`. Invalid configs and I/O problems are
/// returned as errors; simulation failures are reported in the
/// [`ScenarioReport`].
pub fn run_scenario(scenario: &Scenario, out_dir: &Path) -> Result<ScenarioReport> {
    let config = scenario.resolve()?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config.resolved"), write_config(&config))?;

    let single_on_disk = config.map.is_unit_disk() && !config.even_symmetric;
    let mut timer = RevolutionTimer::default();
    let mut first: Option<(Point, f64)> = None;
    let outcome = run_with_observer(&config, |t, ens| {
        if single_on_disk && ens.len() == 1 {
            let x = ens.positions()[0];
            first.get_or_insert((x, ens.strengths()[0]));
            timer.observe(t, x);
        }
    });
    let output = match outcome {
        Ok(o) => o,
        Err(failure) => {
            fs::write(
                out_dir.join("diagnostics.csv"),
                write_csv(&failure.records, Some(failure.t)),
            )?;
            return Ok(ScenarioReport {
                config,
                records: failure.records.clone(),
                fit: None,
                failure: Some(failure),
            });
        }
    };
    fs::write(
        out_dir.join("diagnostics.csv"),
        write_csv(&output.records, None),
    )?;

    let fit_of = |pick: fn(&DiagnosticRecord) -> f64| {
        let series: Vec<(f64, f64)> = output.records.iter().map(|r| (r.t, pick(r))).collect();
        fit_growth_exponent(&series, 1.0, config.t_end).map_err(|e| e.to_string())
    };
    let ctx = KernelContext::new(config.map.clone(), output.alpha, config.blob_delta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let orbit = match (first, timer.period()) {
        (Some((x0, gamma)), Some(measured)) => {
            let exact = disk_orbit_period(x0.norm(), gamma, output.alpha, config.blob_delta);
            Some(OrbitCheck {
                measured,
                exact,
                rel_error: (measured - exact).abs() / exact,
            })
        }
        _ => None,
    };
    let last = output.records.last().expect("a run records t = 0");
    let fit = FitSummary {
        alpha: output.alpha,
        mass: last.mass,
        theta: last.theta,
        r_phys: fit_of(|r| r.r_support_phys),
        r_mapped: fit_of(|r| r.r_support_mapped),
        inverse_distance_sup: inverse_distance_probe(
            &ctx,
            &output.ensemble,
            PROBE_POINTS,
            &mut rng,
        )?,
        orbit,
    };
    fs::write(out_dir.join("fit.txt"), fit.render(scenario.label()))?;
    Ok(ScenarioReport {
        config,
        records: output.records,
        fit: Some(fit),
        failure: None,
    })
}

/// Map validation for `exflow validate-map`: reads only the map section and
/// reports instead of rejecting.
pub fn validate_map_config(text: &str) -> Result<(ExteriorMapSpec, MapValidationReport)> {
    let partial = PartialConfig::parse(text)?;
    let section = partial.map.ok_or_else(|| Error::config("map", "missing"))?;
    let map = build_map(&section)?;
    let report = validate_map(&map, VALIDATE_R_MAX, VALIDATE_SAMPLES);
    Ok((map, report))
}

/// Number of CSV rows a successful run produces.
pub fn expected_rows(config: &SimulationConfig) -> usize {
    config.n_steps() / config.diagnostic_stride + 1
}
