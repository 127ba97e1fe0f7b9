//! TOML run configuration.
//!
//! ```toml
//! input = "data.csv"
//! output_dir = "results"
//! responses = ["fvc", "fev1"]
//! binary_columns = ["smoke"]
//! taus = [0.1, 0.5, 0.9]        # or a [tau_range] table
//! merged = false
//! threads = 4                    # 0 or absent: all cores
//!
//! step1 = [
//!   { kind = "center", column = "age", at = 37.0 },
//!   { kind = "identity", column = "smoke" },
//! ]
//! step2 = [
//!   { kind = "spline", column = "age" },
//!   { kind = "interaction", columns = ["age", "smoke"] },
//! ]
//!
//! [tau_range]
//! from = 0.2
//! to = 0.8
//! step = 0.1
//!
//! [bootstrap]
//! enabled = true
//! replicates = 1000
//! seed = 42
//! level = 0.95
//!
//! [[grid]]
//! covariate = "age"
//! n_points = 100                 # or points = [20.0, 30.0, ...]
//! held = { smoke = 1.0 }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::TermSpec;
use crate::error::{Error, Result};
use crate::inference::{DEFAULT_LEVEL, DEFAULT_REPLICATES};
use crate::pipeline::{AnalysisSpec, GridSpec};
use crate::synthetic::ScenarioSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauRange {
    pub from: f64,
    pub to: f64,
    pub step: f64,
}

impl TauRange {
    /// Levels `from, from + step, ...` up to `to`, rounded to 10 decimals.
    pub fn levels(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.from <= self.to) {
            return Err(Error::invalid("tau_range needs from <= to and step > 0"));
        }
        let count = ((self.to - self.from) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count)
            .map(|k| ((self.from + k as f64 * self.step) * 1e10).round() / 1e10)
            .collect())
    }
}

fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}

fn default_level() -> f64 {
    DEFAULT_LEVEL
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            enabled: false,
            replicates: DEFAULT_REPLICATES,
            seed: 0,
            level: DEFAULT_LEVEL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub responses: [String; 2],
    #[serde(default)]
    pub binary_columns: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taus: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_range: Option<TauRange>,
    #[serde(default)]
    pub merged: bool,
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub step1: Vec<TermSpec>,
    #[serde(default)]
    pub step2: Vec<TermSpec>,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default, rename = "grid")]
    pub grids: Vec<GridSpec>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Reads a config file; a relative `input` is resolved against the
    /// config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.input.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.input = dir.join(&cfg.input);
            }
        }
        Ok(cfg)
    }

    pub fn resolved_taus(&self) -> Result<Vec<f64>> {
        match (&self.taus, &self.tau_range) {
            (Some(t), None) => Ok(t.clone()),
            (None, Some(r)) => r.levels(),
            (Some(_), Some(_)) => Err(Error::invalid("give either taus or tau_range, not both")),
            (None, None) => Err(Error::invalid("no quantile levels: set taus or tau_range")),
        }
    }

    pub fn analysis_spec(&self) -> Result<AnalysisSpec> {
        let spec = AnalysisSpec {
            responses: self.responses.clone(),
            taus: self.resolved_taus()?,
            step1: self.step1.clone(),
            step2: self.step2.clone(),
            merged: self.merged,
            grids: self.grids.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn default_oracle_taus() -> Vec<f64> {
    vec![0.1, 0.5, 0.9]
}

/// `synth` configuration: a scenario plus the levels for the oracle sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    #[serde(flatten)]
    pub scenario: ScenarioSpec,
    #[serde(default = "default_oracle_taus")]
    pub taus: Vec<f64>,
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}
