//! JSON configuration files.
//!
//! Both schemas are versioned (`schema_version`, currently 1) and reject
//! unknown keys.
//!
//! Simulation:
//!
//! ```json
//! {"schema_version": 1, "model": {"name": "mv-ou", "params": {"theta": 1, "kappa": 0, "sigma": 1}},
//!  "N": 500, "n": 500, "T": 1.0, "seed": 7}
//! ```
//!
//! Experiment (`mode` defaults to `"absolute"`; `delta` is required for
//! `"relative"`; `reference` is optional and attaches a fine-grid `L_ref`):
//!
//! ```json
//! {"schema_version": 1,
//!  "model": {"name": "state-vol", "params": {"theta": 1, "lambda1": 1, "lambda2": 0.5}},
//!  "basis": ["const", "x2"], "N": 300, "n": 300, "T": 1.0, "alpha": 0.05,
//!  "mode": "absolute", "replications": 400, "base_seed": 1000,
//!  "reference": {"N_ref": 100000, "n_ref": 2000, "seed": 1}}
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gof::TestMode;
use crate::models::{build_basis, BasisFamily, CoefficientModel, ModelSpec};

pub const SCHEMA_VERSION: u32 = 1;

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

fn check_version(v: u32) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "unsupported schema_version {v} (expected {SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

fn check_grid(particles: usize, steps: usize, horizon: f64) -> Result<()> {
    if particles == 0 || steps == 0 {
        return Err(Error::Config("N and n must be positive".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("T must be positive, got {horizon}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub schema_version: u32,
    pub model: ModelSpec,
    #[serde(rename = "N")]
    pub particles: usize,
    #[serde(rename = "n")]
    pub steps: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub seed: u64,
}

impl SimulateConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = parse_json(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        check_version(self.schema_version)?;
        check_grid(self.particles, self.steps, self.horizon)?;
        self.model.build::<f64>()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    #[default]
    Absolute,
    Relative,
}

/// Fine-grid reference run attached to an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    #[serde(rename = "N_ref")]
    pub particles: usize,
    #[serde(rename = "n_ref")]
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: ModelSpec,
    pub basis: Vec<String>,
    #[serde(rename = "N")]
    pub particles: usize,
    #[serde(rename = "n")]
    pub steps: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub alpha: f64,
    #[serde(default)]
    pub mode: ModeName,
    #[serde(default)]
    pub delta: Option<f64>,
    pub replications: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub reference: Option<ReferenceSpec>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = parse_json(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        check_version(self.schema_version)?;
        check_grid(self.particles, self.steps, self.horizon)?;
        if self.particles < 2 {
            return Err(Error::Config("N must be at least 2".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        self.test_mode()?;
        if let Some(r) = &self.reference {
            check_grid(r.particles, r.steps, self.horizon)?;
        }
        self.build_model()?;
        self.build_basis()?;
        Ok(())
    }

    pub fn test_mode(&self) -> Result<TestMode> {
        match (self.mode, self.delta) {
            (ModeName::Absolute, None) => Ok(TestMode::Absolute),
            (ModeName::Absolute, Some(_)) => {
                Err(Error::Config("delta is only meaningful in relative mode".into()))
            }
            (ModeName::Relative, Some(delta)) if delta > 0.0 && delta < 1.0 => {
                Ok(TestMode::Relative { delta })
            }
            (ModeName::Relative, Some(delta)) => {
                Err(Error::Config(format!("delta must lie in (0, 1), got {delta}")))
            }
            (ModeName::Relative, None) => Err(Error::Config("relative mode requires delta".into())),
        }
    }

    pub fn build_model(&self) -> Result<CoefficientModel> {
        self.model.build()
    }

    pub fn build_basis(&self) -> Result<BasisFamily> {
        build_basis(&self.basis)
    }

    /// Seed of replication `r`: `base_seed + r`.
    pub fn seed_for(&self, rep: usize) -> u64 {
        self.base_seed.wrapping_add(rep as u64)
    }
}
