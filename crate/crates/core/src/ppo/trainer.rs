//! Rollout collection and the outer training loop body.
//!
//! One iteration collects a fixed number of complete episodes with the
//! stochastic policy, turns rewards into bootstrapped Monte-Carlo returns,
//! fits the critic several times on that batch and then runs the
//! clipped-surrogate update on the policy.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::batch::{EpisodeSpan, TrajectoryBatch};
use super::gaussian;
use super::loss::{ppo_loss, value_loss};
use super::PpoConfig;
use crate::env::{ActionNorm, EnvConfig, ScorpionEnv, ACTION_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::seeding::{self, derive_seed};
use crate::tinynet::{MlpParams, Optimizer};

/// One record of the training log. Field order is the log's key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iter: usize,
    /// Mean undiscounted episode return of the collected batch.
    pub mean_return: f64,
    pub policy_loss: f64,
    /// Critic loss on the fresh batch, before this iteration's updates.
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_abs_ratio_dev: f64,
}

struct Episode {
    observations: Vec<[f64; OBS_DIM]>,
    actions: Vec<[f64; ACTION_DIM]>,
    log_probs: Vec<f64>,
    rewards: Vec<f64>,
    final_observation: [f64; OBS_DIM],
}

fn mean_action(policy: &MlpParams, obs: &[f64]) -> Result<Vec<f64>> {
    let mean = policy.predict(obs)?;
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("policy output"));
    }
    Ok(mean)
}

fn run_episode(policy: &MlpParams, env_config: &EnvConfig, seed: u64) -> Result<Episode> {
    let log_std = policy
        .log_std
        .as_ref()
        .ok_or(Error::InvalidLayers(policy.layer_sizes()))?;
    let log_std = log_std.as_slice().expect("standard layout");
    let std: Vec<f64> = log_std.iter().map(|ls| ls.exp()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = ScorpionEnv::new(env_config.clone())?;
    let mut obs = env.reset(rng.next_u64());
    let horizon = env_config.horizon;
    let mut ep = Episode {
        observations: Vec::with_capacity(horizon),
        actions: Vec::with_capacity(horizon),
        log_probs: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        final_observation: obs.0,
    };
    loop {
        let mean = mean_action(policy, obs.as_slice())?;
        let mut action = [0.0; ACTION_DIM];
        for d in 0..ACTION_DIM {
            let noise: f64 = StandardNormal.sample(&mut rng);
            action[d] = mean[d] + std[d] * noise;
        }
        ep.log_probs.push(gaussian::log_prob(&mean, log_std, &action));
        ep.observations.push(obs.0);
        ep.actions.push(action);
        let out = env.step(ActionNorm::from_slice(&action))?;
        ep.rewards.push(out.reward);
        obs = out.observation;
        if out.done {
            break;
        }
    }
    ep.final_observation = obs.0;
    Ok(ep)
}

/// Gathers `cfg.batch_episodes` full episodes with the Gaussian policy and
/// records the critic's predictions. Episode `k` of iteration `iteration`
/// draws from its own RNG stream, so the batch does not depend on
/// `cfg.rollout_workers`.
pub fn collect(
    policy: &MlpParams,
    value: &MlpParams,
    env_config: &EnvConfig,
    cfg: &PpoConfig,
    iteration: usize,
) -> Result<TrajectoryBatch> {
    let episodes = map_indexed(cfg.batch_episodes, cfg.rollout_workers, |k| {
        let seed = derive_seed(cfg.seed, &[seeding::ROLLOUT, iteration as u64, k as u64]);
        run_episode(policy, env_config, seed)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let total: usize = episodes.iter().map(|e| e.rewards.len()).sum();
    let mut observations = Array2::zeros((total, OBS_DIM));
    let mut actions = Array2::zeros((total, ACTION_DIM));
    let mut finals = Array2::zeros((episodes.len(), OBS_DIM));
    let mut log_probs = Vec::with_capacity(total);
    let mut rewards = Vec::with_capacity(total);
    let mut spans = Vec::with_capacity(episodes.len());
    let mut row = 0;
    for (k, ep) in episodes.iter().enumerate() {
        for (o, a) in ep.observations.iter().zip(&ep.actions) {
            observations.row_mut(row).assign(&ndarray::aview1(o));
            actions.row_mut(row).assign(&ndarray::aview1(a));
            row += 1;
        }
        finals.row_mut(k).assign(&ndarray::aview1(&ep.final_observation));
        log_probs.extend(&ep.log_probs);
        rewards.extend(&ep.rewards);
        spans.push(EpisodeSpan {
            start: row - ep.rewards.len(),
            len: ep.rewards.len(),
            bootstrap: 0.0,
        });
    }

    let values = value.forward_batch(observations.view())?.0.column(0).to_vec();
    let bootstraps = value.forward_batch(finals.view())?.0;
    for (span, b) in spans.iter_mut().zip(bootstraps.column(0)) {
        span.bootstrap = *b;
    }
    if values.iter().chain(bootstraps.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("value prediction"));
    }

    Ok(TrajectoryBatch {
        observations,
        actions,
        log_probs,
        rewards,
        values,
        returns: Vec::new(),
        advantages: Vec::new(),
        episodes: spans,
    })
}

/// Networks, optimizers and progress of one training run.
#[derive(Debug, Clone)]
pub struct PpoTrainer {
    pub config: PpoConfig,
    /// Environment used for training episodes; its horizon and step size
    /// come from `config`.
    pub env_config: EnvConfig,
    pub policy: MlpParams,
    pub value: MlpParams,
    pub policy_opt: Optimizer,
    pub value_opt: Optimizer,
    /// Completed iterations.
    pub iteration: usize,
}

impl PpoTrainer {
    pub fn new(config: PpoConfig, env_config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let env_config = EnvConfig {
            horizon: config.horizon,
            dt: config.dt,
            ..env_config
        };
        env_config.validate()?;
        let policy = MlpParams::init_policy(
            &config.policy_sizes(),
            derive_seed(config.seed, &[seeding::POLICY_INIT]),
        )?;
        let value = MlpParams::init(
            &config.value_sizes(),
            derive_seed(config.seed, &[seeding::VALUE_INIT]),
        )?;
        Ok(Self {
            policy_opt: Optimizer::new(config.optimizer, config.lr, &policy),
            value_opt: Optimizer::new(config.optimizer, config.lr, &value),
            config,
            env_config,
            policy,
            value,
            iteration: 0,
        })
    }

    pub fn collect(&self) -> Result<TrajectoryBatch> {
        collect(
            &self.policy,
            &self.value,
            &self.env_config,
            &self.config,
            self.iteration,
        )
    }

    /// Collect, estimate returns, fit the critic `value_updates` times, then
    /// update the policy once.
    pub fn train_iteration(&mut self) -> Result<IterationMetrics> {
        let mut batch = self.collect()?;
        batch.compute_returns(self.config.gamma, self.config.return_mode)?;
        batch.compute_advantages();
        self.update(&batch)
    }

    /// The update half of an iteration on an already prepared batch.
    ///
    /// Reported losses come from the first step of each phase, taken before
    /// either network has moved on this batch.
    pub fn update(&mut self, batch: &TrajectoryBatch) -> Result<IterationMetrics> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            self.config.seed,
            &[seeding::SHUFFLE, self.iteration as u64],
        ));
        let minibatches = self.config.minibatches.clamp(1, batch.len().max(1));
        let lr = self
            .config
            .lr_schedule
            .rate(self.config.lr, self.iteration, self.config.epochs);
        self.value_opt.lr = lr;
        self.policy_opt.lr = lr;

        let mut first_value_loss = None;
        for _ in 0..self.config.value_updates {
            for chunk in minibatch_plan(batch, minibatches, &mut rng) {
                let (loss, mut grads) = value_loss(chunk.as_ref().unwrap_or(batch), &self.value)?;
                first_value_loss.get_or_insert(loss);
                clip_grad_norm(&mut grads, self.config.max_grad_norm);
                self.value_opt.step(&mut self.value, &grads)?;
            }
        }

        let kl_limit = self.config.target_kl.map_or(f64::INFINITY, |kl| 1.5 * kl);
        let mut first_policy = None;
        'epochs: for _ in 0..self.config.policy_updates {
            for chunk in minibatch_plan(batch, minibatches, &mut rng) {
                let mut policy = ppo_loss(
                    chunk.as_ref().unwrap_or(batch),
                    &self.policy,
                    self.config.clip_eps,
                    self.config.entropy_coef,
                )?;
                if !policy.loss.is_finite() {
                    return Err(Error::NonFinite("policy loss"));
                }
                if policy.approx_kl > kl_limit {
                    break 'epochs;
                }
                clip_grad_norm(&mut policy.grads, self.config.max_grad_norm);
                self.policy_opt.step(&mut self.policy, &policy.grads)?;
                first_policy.get_or_insert(policy);
            }
        }
        let policy = first_policy.expect("policy_updates >= 1");

        self.iteration += 1;
        Ok(IterationMetrics {
            iter: self.iteration,
            mean_return: batch.mean_episode_return(),
            policy_loss: policy.loss,
            value_loss: first_value_loss.unwrap_or(0.0),
            entropy: policy.entropy,
            mean_abs_ratio_dev: policy.mean_abs_ratio_dev,
        })
    }
}

fn clip_grad_norm(grads: &mut MlpParams, max_norm: f64) {
    let norm = grads.norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
}

/// One shuffled pass over the batch. `None` stands for the whole batch.
fn minibatch_plan(
    batch: &TrajectoryBatch,
    minibatches: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Option<TrajectoryBatch>> {
    if minibatches <= 1 {
        return vec![None];
    }
    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.shuffle(rng);
    let size = batch.len().div_ceil(minibatches);
    order.chunks(size).map(|c| Some(batch.select(c))).collect()
}
