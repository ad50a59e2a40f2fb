use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tinynet::OptimizerKind;

/// How the per-step return target is discounted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnMode {
    /// `v_t = sum_{i>=t} gamma^(i-t) r_i + gamma^(T-t) V(s_T)`
    #[default]
    Standard,
    /// Rewards weighted by `gamma^(i-1)` regardless of `t`, as printed in the
    /// original write-up. Kept for comparison only.
    PaperLiteral,
}

/// Learning rate over the course of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Decays linearly from `lr` at the first iteration towards zero at
    /// iteration `epochs`.
    Linear,
}

impl LrSchedule {
    /// Learning rate for the update of 0-based iteration `iteration`.
    pub fn rate(self, lr: f64, iteration: usize, epochs: usize) -> f64 {
        match self {
            LrSchedule::Constant => lr,
            LrSchedule::Linear => lr * (1.0 - iteration as f64 / epochs as f64).max(0.0),
        }
    }
}

fn default_lr_schedule() -> LrSchedule {
    LrSchedule::Linear
}
fn default_gamma() -> f64 {
    0.99
}
fn default_lr() -> f64 {
    1e-3
}
fn default_entropy_coef() -> f64 {
    0.0005
}
fn default_epochs() -> usize {
    1500
}
fn default_horizon() -> usize {
    500
}
fn default_dt() -> f64 {
    0.1
}
fn default_clip_eps() -> f64 {
    0.2
}
fn default_value_updates() -> usize {
    10
}
fn default_policy_updates() -> usize {
    10
}
fn default_minibatches() -> usize {
    16
}
fn default_batch_episodes() -> usize {
    16
}
fn default_max_grad_norm() -> f64 {
    0.5
}
fn default_workers() -> usize {
    1
}
fn default_hidden() -> Vec<usize> {
    vec![128, 64]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_lr_schedule")]
    pub lr_schedule: LrSchedule,
    #[serde(default = "default_entropy_coef")]
    pub entropy_coef: f64,
    /// Training iterations.
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Steps per training episode.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_clip_eps")]
    pub clip_eps: f64,
    /// Critic updates per iteration.
    #[serde(default = "default_value_updates")]
    pub value_updates: usize,
    /// Clipped-surrogate steps per iteration on the same batch.
    #[serde(default = "default_policy_updates")]
    pub policy_updates: usize,
    /// Shuffled minibatches per pass over the batch; 1 means full-batch
    /// steps.
    #[serde(default = "default_minibatches")]
    pub minibatches: usize,
    /// Gradients whose global norm exceeds this are rescaled to it; `inf`
    /// disables clipping.
    #[serde(default = "default_max_grad_norm")]
    pub max_grad_norm: f64,
    /// Policy epochs stop early once the estimated KL divergence from the
    /// collecting policy exceeds 1.5 times this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_kl: Option<f64>,
    /// Episodes collected per iteration.
    #[serde(default = "default_batch_episodes")]
    pub batch_episodes: usize,
    /// Threads used for rollout collection. Results do not depend on it.
    #[serde(default = "default_workers")]
    pub rollout_workers: usize,
    /// Hidden layer widths shared by the policy and value networks.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub return_mode: ReturnMode,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: default_gamma(),
            lr: default_lr(),
            lr_schedule: default_lr_schedule(),
            entropy_coef: default_entropy_coef(),
            epochs: default_epochs(),
            horizon: default_horizon(),
            dt: default_dt(),
            clip_eps: default_clip_eps(),
            value_updates: default_value_updates(),
            policy_updates: default_policy_updates(),
            minibatches: default_minibatches(),
            max_grad_norm: default_max_grad_norm(),
            target_kl: None,
            batch_episodes: default_batch_episodes(),
            rollout_workers: default_workers(),
            hidden: default_hidden(),
            optimizer: OptimizerKind::default(),
            return_mode: ReturnMode::default(),
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, reason: &str| {
            Err(Error::InvalidConfig {
                field: format!("ppo.{field}"),
                reason: reason.to_string(),
            })
        };
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail("gamma", "must lie in (0, 1]");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return fail("lr", "must be > 0");
        }
        if !(self.entropy_coef.is_finite() && self.entropy_coef >= 0.0) {
            return fail("entropy_coef", "must be >= 0");
        }
        if !(self.clip_eps.is_finite() && self.clip_eps > 0.0) {
            return fail("clip_eps", "must be > 0");
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return fail("dt", "must be > 0");
        }
        for (name, value) in [
            ("epochs", self.epochs),
            ("horizon", self.horizon),
            ("value_updates", self.value_updates),
            ("policy_updates", self.policy_updates),
            ("minibatches", self.minibatches),
            ("batch_episodes", self.batch_episodes),
            ("rollout_workers", self.rollout_workers),
        ] {
            if value < 1 {
                return fail(name, "must be >= 1");
            }
        }
        if !(self.max_grad_norm > 0.0) {
            return fail("max_grad_norm", "must be > 0");
        }
        if self.target_kl.is_some_and(|v| !(v.is_finite() && v > 0.0)) {
            return fail("target_kl", "must be > 0 when set");
        }
        if self.hidden.contains(&0) {
            return fail("hidden", "layer widths must be >= 1");
        }
        Ok(())
    }

    /// Policy layer sizes: observation -> hidden... -> action mean.
    pub fn policy_sizes(&self) -> Vec<usize> {
        self.sizes(crate::env::ACTION_DIM)
    }

    pub fn value_sizes(&self) -> Vec<usize> {
        self.sizes(1)
    }

    fn sizes(&self, out: usize) -> Vec<usize> {
        let mut sizes = vec![crate::env::OBS_DIM];
        sizes.extend(&self.hidden);
        sizes.push(out);
        sizes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_training_table() {
        let c = PpoConfig::default();
        assert_eq!(c.lr, 1e-3);
        assert_eq!(c.gamma, 0.99);
        assert_eq!(c.entropy_coef, 0.0005);
        assert_eq!(c.epochs, 1500);
        assert_eq!(c.horizon, 500);
        assert_eq!(c.dt, 0.1);
        assert_eq!(c.clip_eps, 0.2);
        assert_eq!(c.value_updates, 10);
        assert_eq!(c.policy_sizes(), vec![5, 128, 64, 3]);
        assert_eq!(c.value_sizes(), vec![5, 128, 64, 1]);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_gamma_and_counts() {
        for gamma in [0.0, -0.5, 1.01, f64::NAN] {
            let c = PpoConfig {
                gamma,
                ..PpoConfig::default()
            };
            assert!(c.validate().is_err());
        }
        let c = PpoConfig {
            value_updates: 0,
            ..PpoConfig::default()
        };
        match c.validate() {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "ppo.value_updates"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn linear_schedule_decays_to_zero() {
        let s = LrSchedule::Linear;
        assert_eq!(s.rate(1e-3, 0, 1500), 1e-3);
        assert!((s.rate(1e-3, 750, 1500) - 5e-4).abs() < 1e-18);
        assert!(s.rate(1e-3, 1499, 1500) > 0.0);
        assert_eq!(s.rate(1e-3, 1500, 1500), 0.0);
        assert_eq!(s.rate(1e-3, 4000, 1500), 0.0);
        assert_eq!(LrSchedule::Constant.rate(1e-3, 1499, 1500), 1e-3);
    }
}
