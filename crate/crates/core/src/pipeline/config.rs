//! Strict JSON run configuration.
//!
//! Only `delta` and `potential` are required:
//!
//! ```json
//! { "delta": 5, "potential": { "v12": { "kind": "disk", "radius": 2, "amplitude": -1 } } }
//! ```
//!
//! Unknown keys are rejected and errors name the offending field path.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::CutoffProfile;
use crate::eigensolve::{DEFAULT_RESIDUAL_TOL, DEFAULT_TRUNCATION_TOL};
use crate::geometry::Rect;
use crate::model::{validate_potential, Model, Potential};
use crate::quadrature::QuadControls;
use crate::rbf::{NodeLayout, DEFAULT_SHAPE_FACTOR};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { path: path.to_string(), message: message.into() }
}

/// Couplings to sweep: an explicit list or `count` evenly spaced values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonGrid {
    List(Vec<f64>),
    Linear { start: f64, stop: f64, count: usize },
}

impl Default for EpsilonGrid {
    fn default() -> Self {
        EpsilonGrid::Linear { start: 0.0, stop: 5.0, count: 21 }
    }
}

impl EpsilonGrid {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            EpsilonGrid::List(ref v) => v.clone(),
            EpsilonGrid::Linear { count: 0, .. } => Vec::new(),
            EpsilonGrid::Linear { start, count: 1, .. } => vec![start],
            EpsilonGrid::Linear { start, stop, count } => {
                let step = (stop - start) / (count - 1) as f64;
                (0..count).map(|k| if k + 1 == count { stop } else { start + step * k as f64 }).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    pub count: usize,
    pub layout: NodeLayout,
    #[serde(rename = "box")]
    pub bbox: Rect,
    /// Fixed Gaussian shape `s`; overrides `shape_factor` when set.
    pub shape: Option<f64>,
    /// `s = shape_factor / fill_distance` otherwise.
    pub shape_factor: f64,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            count: 900,
            layout: NodeLayout::Grid,
            bbox: Rect::centered_square(8.0),
            shape: None,
            shape_factor: DEFAULT_SHAPE_FACTOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub truncation_tol: f64,
    pub residual_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { truncation_tol: DEFAULT_TRUNCATION_TOL, residual_tol: DEFAULT_RESIDUAL_TOL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    /// Flat margin of the smoothstep cutoff profile.
    pub margin: f64,
    pub n_grid: Vec<f64>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self { margin: 0.1, n_grid: vec![8.0, 16.0, 32.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenfunctionConfig {
    pub nx: usize,
    pub ny: usize,
    /// Number of lowest non-negative gap modes to sample.
    pub modes: usize,
}

impl Default for EigenfunctionConfig {
    fn default() -> Self {
        Self { nx: 101, ny: 101, modes: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
    pub eigenfunctions: Option<EigenfunctionConfig>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), formats: vec![Format::Csv], eigenfunctions: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub delta: f64,
    pub potential: Potential,
    #[serde(default)]
    pub epsilon_grid: EpsilonGrid,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub quadrature: QuadControls,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    /// A config with every optional section at its default.
    pub fn new(delta: f64, potential: Potential) -> Self {
        Self {
            delta,
            potential,
            epsilon_grid: EpsilonGrid::default(),
            basis: BasisConfig::default(),
            quadrature: QuadControls::default(),
            solver: SolverConfig::default(),
            bounds: BoundsConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.epsilon_grid.values()
    }

    pub fn model(&self, eps: f64) -> Model {
        Model::new(self.delta, eps, self.potential.clone()).expect("validated config")
    }

    pub fn profile(&self) -> CutoffProfile {
        CutoffProfile::smoothstep(self.bounds.margin).expect("validated config")
    }

    /// The config with defaults materialized, as pretty JSON.
    pub fn echo(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(invalid("delta", format!("delta must be positive, got {}", self.delta)));
        }
        let report = validate_potential(&self.potential);
        if let Some(failure) = report.first_failure() {
            return Err(invalid("potential", format!("{} check failed: {}", failure.check, failure.detail)));
        }

        if let EpsilonGrid::Linear { start, stop, count } = self.epsilon_grid {
            if count == 0 {
                return Err(invalid("epsilon_grid.count", "count must be positive"));
            }
            if count > 1 && !(stop > start) {
                return Err(invalid("epsilon_grid", "stop must exceed start"));
            }
        }
        let eps = self.epsilons();
        if eps.is_empty() {
            return Err(invalid("epsilon_grid", "grid is empty"));
        }
        if let Some(e) = eps.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return Err(invalid("epsilon_grid", format!("couplings must be non-negative and finite, got {e}")));
        }
        if eps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("epsilon_grid", "couplings must be strictly increasing"));
        }

        let b = &self.basis;
        if b.count == 0 {
            return Err(invalid("basis.count", "count must be positive"));
        }
        if !b.bbox.is_non_degenerate() {
            return Err(invalid("basis.box", "box must have positive width and height"));
        }
        if let Some(s) = b.shape {
            if !(s.is_finite() && s > 0.0) {
                return Err(invalid("basis.shape", format!("shape must be positive, got {s}")));
            }
        }
        if !(b.shape_factor.is_finite() && b.shape_factor > 0.0) {
            return Err(invalid("basis.shape_factor", "shape_factor must be positive"));
        }

        self.quadrature.validate().map_err(|m| invalid("quadrature", m))?;
        for (path, v) in [("solver.truncation_tol", self.solver.truncation_tol), ("solver.residual_tol", self.solver.residual_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid(path, format!("tolerance must lie in (0, 1), got {v}")));
            }
        }

        CutoffProfile::smoothstep(self.bounds.margin).map_err(|e| invalid("bounds.margin", e.to_string()))?;
        let n = &self.bounds.n_grid;
        if n.iter().any(|v| !(*v > std::f64::consts::E && v.is_finite())) {
            return Err(invalid("bounds.n_grid", "every n must be finite and exceed e"));
        }
        if n.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("bounds.n_grid", "n_grid must be strictly increasing"));
        }
        if self.output.formats.is_empty() {
            return Err(invalid("output.formats", "at least one format is required"));
        }
        if let Some(ef) = self.output.eigenfunctions {
            if ef.nx < 2 || ef.ny < 2 {
                return Err(invalid("output.eigenfunctions", "grids need at least 2 points per axis"));
            }
        }
        Ok(())
    }
}

/// Parses and validates a JSON document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::Schema { path: if path == "." { "<root>".into() } else { path }, message: e.into_inner().to_string() }
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}
