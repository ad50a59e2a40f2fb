//! Run configuration file (TOML).
//!
//! ```toml
//! [env]
//! wheelbase = 5.0
//!
//! [ppo]
//! epochs = 1500
//! seed = 42
//!
//! [eval]
//! runs = 25
//! margin = 10.0
//! ```
//!
//! Every table and key is optional; omitted values take their defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::harness::Scenario;
use crate::ppo::PpoConfig;

fn default_runs() -> usize {
    25
}
fn default_eval_horizon() -> usize {
    1000
}
fn default_margin() -> f64 {
    10.0
}
fn default_final_window() -> usize {
    100
}

/// Settings of the randomized-start convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_eval_horizon")]
    pub horizon: usize,
    /// A run converges when its mean distance over the final window is
    /// below this.
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_final_window")]
    pub final_window: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            runs: default_runs(),
            horizon: default_eval_horizon(),
            margin: default_margin(),
            final_window: default_final_window(),
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, reason: &str| {
            Err(Error::InvalidConfig {
                field: format!("eval.{field}"),
                reason: reason.into(),
            })
        };
        if self.runs < 1 {
            return fail("runs", "must be >= 1");
        }
        if self.horizon < 1 {
            return fail("horizon", "must be >= 1");
        }
        if !(self.margin > 0.0) {
            return fail("margin", "must be > 0");
        }
        if self.final_window < 1 || self.final_window > self.horizon {
            return fail("final_window", "must lie in [1, horizon]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|source| Error::ConfigParse {
            path: origin.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig {
            field: "config".into(),
            reason: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.ppo.validate()?;
        self.eval.validate()?;
        if let Some(s) = &self.scenario {
            s.validate()?;
        }
        Ok(())
    }

    /// SHA-256 over the settings that determine trained parameters.
    pub fn digest(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(&(&self.env, &self.ppo)).expect("config serializes");
        Sha256::digest(bytes).into()
    }
}
