use ndarray::{Array2, Axis};

use super::returns::{compute_returns, normalize, raw_advantages};
use super::ReturnMode;
use crate::error::Result;

/// Location of one episode inside a [`TrajectoryBatch`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSpan {
    pub start: usize,
    pub len: usize,
    /// Critic value of the state reached after the final step.
    pub bootstrap: f64,
}

/// Flat per-step storage for a set of complete episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    /// `len x OBS_DIM`
    pub observations: Array2<f64>,
    /// `len x ACTION_DIM`, the sampled actions before clamping.
    pub actions: Array2<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
    pub episodes: Vec<EpisodeSpan>,
}

impl TrajectoryBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Undiscounted reward sum of each episode.
    pub fn episode_returns(&self) -> Vec<f64> {
        self.episodes
            .iter()
            .map(|e| self.rewards[e.start..e.start + e.len].iter().sum())
            .collect()
    }

    pub fn mean_episode_return(&self) -> f64 {
        let r = self.episode_returns();
        r.iter().sum::<f64>() / r.len().max(1) as f64
    }

    /// Fills `returns` episode by episode.
    pub fn compute_returns(&mut self, gamma: f64, mode: ReturnMode) -> Result<()> {
        let mut returns = Vec::with_capacity(self.len());
        for e in &self.episodes {
            let rewards = &self.rewards[e.start..e.start + e.len];
            returns.extend(compute_returns(rewards, e.bootstrap, gamma, mode)?);
        }
        self.returns = returns;
        Ok(())
    }

    /// Per-step rows at `indices`, for minibatch updates. Episode structure
    /// and rewards are not carried over.
    pub fn select(&self, indices: &[usize]) -> TrajectoryBatch {
        let pick = |v: &[f64]| -> Vec<f64> {
            if v.is_empty() {
                Vec::new()
            } else {
                indices.iter().map(|&i| v[i]).collect()
            }
        };
        TrajectoryBatch {
            observations: self.observations.select(Axis(0), indices),
            actions: self.actions.select(Axis(0), indices),
            log_probs: pick(&self.log_probs),
            rewards: pick(&self.rewards),
            values: pick(&self.values),
            returns: pick(&self.returns),
            advantages: pick(&self.advantages),
            episodes: Vec::new(),
        }
    }

    /// `returns - values`, normalized across the whole batch.
    pub fn compute_advantages(&mut self) {
        self.advantages = raw_advantages(&self.returns, &self.values);
        normalize(&mut self.advantages);
    }
}
