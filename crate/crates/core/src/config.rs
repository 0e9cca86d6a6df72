//! The JSON run configuration.
//!
//! ```json
//! {
//!   "model": {"gamma_drift": 0.05, "sigma": 0.3, "delta": 0.3, "epsilon": 1.0},
//!   "jumps": {"atoms": [{"rate": 0.5, "factor": -0.2}]},
//!   "costs": {"lambda": 0.1, "kappa": 0.2},
//!   "targets": {"x_hat": 5.0, "x_star": 10.0},
//!   "sim": {"dt": 0.001, "t_max": 12.0, "paths": 100000, "seed": 42, "x0": 5.0},
//!   "principal": {"delta_p": 0.3, "lambda_p": 1.0, "c_p": 0.0, "alpha_p": 0.0,
//!                 "w0": 0.0, "w1": 0.1, "w2": 0.0},
//!   "solve": {"grid_lo": 0.01, "grid_hi": 100.0, "grid_points": 6}
//! }
//! ```
//!
//! Only `model` is required; other sections are checked by the commands
//! that use them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::{validate_model, CostParams, JumpSpec, ModelParams, PolicyTargets, ValidatedModel};
use crate::sim::{PrincipalParams, SimConfig};
use crate::solve::SolveOptions;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: Option<ModelParams>,
    #[serde(default)]
    pub jumps: JumpSpec,
    pub costs: Option<CostParams>,
    pub targets: Option<PolicyTargets>,
    pub sim: Option<SimConfig>,
    pub principal: Option<PrincipalParams>,
    pub solve: Option<SolveOptions>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config {path} is not valid: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config has no `{0}` section and no flags supply it")]
    Missing(&'static str),
    #[error(transparent)]
    Model(#[from] crate::error::Error),
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse { path: path.to_owned(), message: e.to_string() })
    }

    pub fn validated_model(&self) -> Result<ValidatedModel, ConfigError> {
        let params = self.model.ok_or(ConfigError::Missing("model"))?;
        Ok(validate_model(params, self.jumps.clone())?)
    }

    pub fn costs(&self) -> Result<CostParams, ConfigError> {
        let c = self.costs.ok_or(ConfigError::Missing("costs"))?;
        c.validate()?;
        Ok(c)
    }

    pub fn targets(&self) -> Result<PolicyTargets, ConfigError> {
        let t = self.targets.ok_or(ConfigError::Missing("targets"))?;
        t.validate()?;
        Ok(t)
    }

    pub fn sim(&self) -> Result<SimConfig, ConfigError> {
        let s = self.sim.ok_or(ConfigError::Missing("sim"))?;
        s.validate()?;
        Ok(s)
    }

    pub fn principal(&self) -> Result<PrincipalParams, ConfigError> {
        let p = self.principal.ok_or(ConfigError::Missing("principal"))?;
        p.validate()?;
        Ok(p)
    }

    pub fn solve_options(&self) -> SolveOptions {
        self.solve.unwrap_or_default()
    }
}
