//! Scenario configuration: a strict TOML grammar.
//!
//! ```toml
//! seed = 7
//!
//! [grid]
//! nx = 64
//! ny = 64
//! lx = 1.0
//! ly = 1.0
//!
//! [model]
//! tau = 0          # 0 parabolic-elliptic, 1 fully parabolic
//! r = 1.0
//! mu = 1.0
//! p = 0.5
//!
//! [controls]
//! dt = 1e-3              # fixed step, or the ceiling in adaptive mode
//! dt_mode = "adaptive"   # "fixed" | "adaptive"
//! cfl_safety = 0.4
//! t_end = 1.0
//! pos_tol = 1e-10
//! clamp_negatives = false
//! # optional:
//! # flux = "arithmetic"       # "arithmetic" | "upwind"
//! # solver = "cg"             # "cg" | "spectral"
//! # solver_tol = 1e-10
//! # blowup_threshold = 1e8
//!
//! [energy]
//! c_gn = 1.0
//!
//! [initial.u]
//! kind = "gaussian_bump"
//! center = [0.5, 0.5]
//! width = 0.1
//! mass = 30.0
//!
//! [initial.w]
//! kind = "constant"
//! value = 1.0
//!
//! [output]
//! directory = "out/example"
//! cadence = 10
//! snapshot_times = [0.0, 1.0]
//! ```
//!
//! Every key outside the commented optional ones is required and unknown keys
//! are rejected. `[initial.v]` and `[initial.z]` may be given only for
//! `tau = 1`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::DEFAULT_POS_TOL;
use crate::elliptic::SolverBackend;
use crate::grid::{FaceAveraging, GridSpec};
use crate::init::Generator;
use crate::model::{ModelParams, Tau};
use crate::stepper::{DtMode, RunOptions, StepControls};

/// A configuration problem, tied to the dotted key that caused it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "config error: {}", self.message)
        } else {
            write!(f, "config error at `{}`: {}", self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub controls: ControlsConfig,
    pub energy: EnergyConfig,
    pub initial: InitialConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub tau: i64,
    pub r: f64,
    pub mu: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtModeName {
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxName {
    #[default]
    Arithmetic,
    Upwind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverName {
    #[default]
    Cg,
    Spectral,
}

fn default_solver_tol() -> f64 {
    1e-10
}

fn default_blowup_threshold() -> f64 {
    1e8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlsConfig {
    pub dt: f64,
    pub dt_mode: DtModeName,
    pub cfl_safety: f64,
    pub t_end: f64,
    pub pos_tol: f64,
    pub clamp_negatives: bool,
    #[serde(default)]
    pub flux: FluxName,
    #[serde(default)]
    pub solver: SolverName,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    /// `||u||∞ + ||w||∞` above this value ends the run as a blow-up.
    #[serde(default = "default_blowup_threshold")]
    pub blowup_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConfig {
    pub c_gn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub u: Generator,
    pub w: Generator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Generator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Generator>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Diagnostics rows are written every `cadence` steps.
    pub cadence: usize,
    pub snapshot_times: Vec<f64>,
}

impl ScenarioConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::new("", e.to_string()))?;
        Self::from_table(table)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Deserializes and validates an already parsed table.
    pub fn from_table(table: toml::Table) -> Result<Self, ConfigError> {
        let config: ScenarioConfig = serde_path_to_error::deserialize(toml::Value::Table(table))
            .map_err(|e| {
                let key = error_key(&e.path().to_string(), e.inner().message());
                ConfigError::new(key, e.inner().message().trim())
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("scenario config always serializes")
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config always serializes")
    }

    /// Returns a copy with the numeric leaf at `key` (dotted path) replaced.
    pub fn with_value(&self, key: &str, value: f64) -> Result<Self, ConfigError> {
        let mut table = self.to_table();
        set_numeric_leaf(&mut table, key, value)?;
        Self::from_table(table)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.grid_spec()?;
        self.model_params()?;
        let c = &self.controls;
        positive("controls.dt", c.dt)?;
        if !(c.cfl_safety > 0.0 && c.cfl_safety <= 1.0) {
            return Err(ConfigError::new(
                "controls.cfl_safety",
                format!("must lie in (0, 1], got {}", c.cfl_safety),
            ));
        }
        if !(c.t_end.is_finite() && c.t_end >= 0.0) {
            return Err(ConfigError::new(
                "controls.t_end",
                format!("must be finite and nonnegative, got {}", c.t_end),
            ));
        }
        if !(c.pos_tol.is_finite() && c.pos_tol >= 0.0) {
            return Err(ConfigError::new(
                "controls.pos_tol",
                format!("must be finite and nonnegative, got {}", c.pos_tol),
            ));
        }
        if !(c.solver_tol > 0.0 && c.solver_tol < 1.0) {
            return Err(ConfigError::new(
                "controls.solver_tol",
                format!("must lie in (0, 1), got {}", c.solver_tol),
            ));
        }
        positive("controls.blowup_threshold", c.blowup_threshold)?;
        positive("energy.c_gn", self.energy.c_gn)?;
        if self.model.tau == 0 {
            for (key, gen) in [("initial.v", &self.initial.v), ("initial.z", &self.initial.z)] {
                if gen.is_some() {
                    return Err(ConfigError::new(
                        key,
                        "only allowed for tau = 1; with tau = 0 the signals are solved from the densities",
                    ));
                }
            }
        }
        if self.output.cadence == 0 {
            return Err(ConfigError::new("output.cadence", "must be at least 1"));
        }
        for (k, &t) in self.output.snapshot_times.iter().enumerate() {
            if !(t.is_finite() && t >= 0.0) {
                return Err(ConfigError::new(
                    format!("output.snapshot_times[{k}]"),
                    format!("must be finite and nonnegative, got {t}"),
                ));
            }
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec, ConfigError> {
        let g = &self.grid;
        GridSpec::new(g.nx, g.ny, g.lx, g.ly).map_err(|e| {
            let key = if g.nx < 4 {
                "grid.nx"
            } else if g.ny < 4 {
                "grid.ny"
            } else if !(g.lx.is_finite() && g.lx > 0.0) {
                "grid.lx"
            } else {
                "grid.ly"
            };
            ConfigError::new(key, e.to_string())
        })
    }

    pub fn model_params(&self) -> Result<ModelParams, ConfigError> {
        let m = &self.model;
        let tau = Tau::from_int(m.tau)
            .map_err(|e| ConfigError::new("model.tau", e.to_string()))?;
        if !m.r.is_finite() {
            return Err(ConfigError::new("model.r", format!("must be finite, got {}", m.r)));
        }
        for (key, v) in [("model.mu", m.mu), ("model.p", m.p)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::new(
                    key,
                    format!("must be finite and nonnegative, got {v}"),
                ));
            }
        }
        ModelParams::new(tau, m.r, m.mu, m.p)
            .map_err(|e| ConfigError::new("model", e.to_string()))
    }

    pub fn step_controls(&self) -> StepControls {
        let c = &self.controls;
        StepControls {
            dt: c.dt,
            dt_mode: match c.dt_mode {
                DtModeName::Fixed => DtMode::Fixed,
                DtModeName::Adaptive => DtMode::Adaptive,
            },
            cfl_safety: c.cfl_safety,
            pos_tol: c.pos_tol,
            clamp_negatives: c.clamp_negatives,
            face_averaging: match c.flux {
                FluxName::Arithmetic => FaceAveraging::Arithmetic,
                FluxName::Upwind => FaceAveraging::Upwind,
            },
            solver: match c.solver {
                SolverName::Cg => SolverBackend::ConjugateGradient,
                SolverName::Spectral => SolverBackend::Spectral,
            },
            solver_tol: c.solver_tol,
        }
    }

    /// Run options without energy parameters; the scenario runner fills them
    /// in once the initial data is known.
    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            t_end: self.controls.t_end,
            cadence: self.output.cadence,
            blowup_threshold: self.controls.blowup_threshold,
            energy: None,
            keep_table: false,
        }
    }
}

impl Default for ControlsConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            dt_mode: DtModeName::Fixed,
            cfl_safety: 0.4,
            t_end: 1.0,
            pos_tol: DEFAULT_POS_TOL,
            clamp_negatives: false,
            flux: FluxName::Arithmetic,
            solver: SolverName::Cg,
            solver_tol: default_solver_tol(),
            blowup_threshold: default_blowup_threshold(),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("must be finite and positive, got {v}")))
    }
}

/// Dotted key of a deserialization error: the path serde reached, extended
/// by the field named in "missing field" / "unknown field" messages.
fn error_key(path: &str, message: &str) -> String {
    let path = if path == "." { "" } else { path };
    let named = ["missing field", "unknown field"].iter().find_map(|prefix| {
        let rest = message.split(prefix).nth(1)?;
        let start = rest.find('`')? + 1;
        let end = start + rest[start..].find('`')?;
        Some(rest[start..end].to_string())
    });
    match named {
        Some(field) if !path.ends_with(&field) => {
            if path.is_empty() {
                field
            } else {
                format!("{path}.{field}")
            }
        }
        _ => path.to_string(),
    }
}

/// Sets the numeric value at a dotted path, keeping integers integral.
pub fn set_numeric_leaf(table: &mut toml::Table, key: &str, value: f64) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| {
        ConfigError::new(key, "empty key")
    })?;
    let mut cur = table;
    for part in parts {
        cur = match cur.get_mut(part) {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(ConfigError::new(key, format!("no section `{part}`"))),
        };
    }
    match cur.get_mut(leaf) {
        Some(slot @ toml::Value::Float(_)) => {
            *slot = toml::Value::Float(value);
            Ok(())
        }
        Some(slot @ toml::Value::Integer(_)) => {
            if value.fract() != 0.0 || !value.is_finite() || value.abs() > i64::MAX as f64 {
                return Err(ConfigError::new(
                    key,
                    format!("integer key cannot take the value {value}"),
                ));
            }
            *slot = toml::Value::Integer(value as i64);
            Ok(())
        }
        Some(_) => Err(ConfigError::new(key, "not a numeric leaf")),
        None => Err(ConfigError::new(key, "no such key")),
    }
}
