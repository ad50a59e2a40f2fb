//! Training runs and the two evaluation protocols: scheduled waypoint
//! tracking and the randomized-start convergence study.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{EvalConfig, RunConfig};
use crate::env::{ActionNorm, EnvConfig, RobotState, ScorpionEnv};
use crate::error::{Error, Result};
use crate::logs::{write_trajectory, MetricsWriter, TrajectoryRow};
use crate::parallel::map_indexed;
use crate::ppo::{IterationMetrics, PpoTrainer};
use crate::seeding::{self, derive_seed};
use crate::tinynet::MlpParams;

/// Iterations between intermediate checkpoints.
pub const CHECKPOINT_EVERY: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointEvent {
    /// Step index from which this waypoint is active.
    pub step: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitPose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub yaw: f64,
}

/// A waypoint schedule for one deterministic evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub horizon: usize,
    pub waypoints: Vec<WaypointEvent>,
    /// Fixed starting pose; a seeded random pose when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitPose>,
}

impl Scenario {
    /// Track `(-50, -50)` for 200 s, then the origin for another 200 s,
    /// starting level at the origin.
    pub fn waypoint_shift() -> Self {
        Self {
            horizon: 4000,
            waypoints: vec![
                WaypointEvent {
                    step: 0,
                    x: -50.0,
                    y: -50.0,
                },
                WaypointEvent {
                    step: 2000,
                    x: 0.0,
                    y: 0.0,
                },
            ],
            init: Some(InitPose {
                x: 0.0,
                y: 0.0,
                yaw: 0.0,
            }),
        }
    }

    /// A single fixed waypoint.
    pub fn hold(waypoint: (f64, f64), horizon: usize, init: Option<InitPose>) -> Self {
        Self {
            horizon,
            waypoints: vec![WaypointEvent {
                step: 0,
                x: waypoint.0,
                y: waypoint.1,
            }],
            init,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: Scenario = toml::from_str(&text).map_err(|source| Error::ConfigParse {
            path: path.to_path_buf(),
            source,
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if self.horizon < 1 {
            return bad("horizon must be >= 1".into());
        }
        let Some(first) = self.waypoints.first() else {
            return bad("waypoint schedule is empty".into());
        };
        if first.step != 0 {
            return bad(format!("first waypoint activates at step {}, not 0", first.step));
        }
        for pair in self.waypoints.windows(2) {
            if pair[1].step <= pair[0].step {
                return bad(format!(
                    "activation steps must increase strictly ({} then {})",
                    pair[0].step, pair[1].step
                ));
            }
        }
        if let Some(last) = self.waypoints.last() {
            if last.step >= self.horizon {
                return bad(format!(
                    "waypoint at step {} is beyond horizon {}",
                    last.step, self.horizon
                ));
            }
        }
        if self
            .waypoints
            .iter()
            .any(|w| !w.x.is_finite() || !w.y.is_finite())
        {
            return bad("waypoint coordinates must be finite".into());
        }
        if let Some(p) = &self.init {
            if !(p.x.is_finite() && p.y.is_finite() && p.yaw.is_finite()) {
                return bad("initial pose must be finite".into());
            }
        }
        Ok(())
    }

    /// Step index ranges `[start, end)` of each schedule phase.
    pub fn phases(&self) -> Vec<(usize, usize)> {
        self.waypoints
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let end = self
                    .waypoints
                    .get(i + 1)
                    .map_or(self.horizon, |next| next.step);
                (w.step, end)
            })
            .collect()
    }
}

/// Distance to the active waypoint at the last step of every phase.
pub fn phase_end_distances(rows: &[TrajectoryRow], scenario: &Scenario) -> Vec<f64> {
    scenario
        .phases()
        .iter()
        .filter_map(|&(_, end)| rows.get(end.checked_sub(1)?))
        .map(TrajectoryRow::distance_to_waypoint)
        .collect()
}

/// Rolls out the policy mean under `scenario`. Row `k` describes the state
/// after step `k + 1`; the waypoint scheduled at step `s` is in force for the
/// action taken from step index `s` on.
pub fn eval_deterministic(
    policy: &MlpParams,
    env_config: &EnvConfig,
    scenario: &Scenario,
    seed: u64,
) -> Result<Vec<TrajectoryRow>> {
    scenario.validate()?;
    let first = scenario.waypoints[0];
    let cfg = EnvConfig {
        horizon: scenario.horizon,
        waypoint: (first.x, first.y),
        ..env_config.clone()
    };
    let mut env = ScorpionEnv::new(cfg)?;
    let mut obs = match scenario.init {
        Some(p) => env.reset_to(RobotState::new(p.x, p.y, p.yaw, env.config().tail_neutral)),
        None => env.reset(derive_seed(seed, &[seeding::EVAL])),
    };

    let dt = env.config().dt;
    let mut schedule = scenario.waypoints.iter().skip(1).peekable();
    let mut rows = Vec::with_capacity(scenario.horizon);
    for k in 0..scenario.horizon {
        if let Some(w) = schedule.next_if(|w| w.step == k) {
            obs = env.set_waypoint((w.x, w.y));
        }
        let mean = policy.predict(obs.as_slice())?;
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy output"));
        }
        let out = env.step(ActionNorm::from_slice(&mean))?;
        let p = out.info.pose;
        rows.push(TrajectoryRow {
            step: out.info.step,
            t_sec: out.info.step as f64 * dt,
            x: p.x,
            y: p.y,
            roll: p.roll,
            pitch: p.pitch,
            yaw: p.yaw,
            m_left: out.info.action.m_left,
            m_right: out.info.action.m_right,
            tail: p.tail,
            reward: out.reward,
            wp_x: out.info.waypoint.0,
            wp_y: out.info.waypoint.1,
        });
        obs = out.observation;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub index: usize,
    pub final_distance: f64,
    /// Mean distance to the waypoint over the final window.
    pub window_mean_distance: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_runs: usize,
    pub n_converged: usize,
    pub convergence_margin: f64,
    pub final_window: usize,
    /// Mean final distance over converged runs; `None` if none converged.
    pub mean_final_distance_converged: Option<f64>,
    pub runs: Vec<RunSummary>,
}

impl EvalReport {
    pub fn failure_rate(&self) -> f64 {
        1.0 - self.n_converged as f64 / self.n_runs as f64
    }

    /// Re-classifies the stored runs against another margin.
    pub fn with_margin(&self, margin: f64) -> EvalReport {
        let runs: Vec<RunSummary> = self
            .runs
            .iter()
            .map(|r| RunSummary {
                converged: r.window_mean_distance < margin,
                ..r.clone()
            })
            .collect();
        summarize(runs, margin, self.final_window)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

fn summarize(runs: Vec<RunSummary>, margin: f64, final_window: usize) -> EvalReport {
    let converged: Vec<f64> = runs
        .iter()
        .filter(|r| r.converged)
        .map(|r| r.final_distance)
        .collect();
    EvalReport {
        n_runs: runs.len(),
        n_converged: converged.len(),
        convergence_margin: margin,
        final_window,
        mean_final_distance_converged: (!converged.is_empty())
            .then(|| converged.iter().sum::<f64>() / converged.len() as f64),
        runs,
    }
}

/// Runs `eval.runs` deterministic episodes from random poses toward the
/// origin and counts those whose mean distance over the last
/// `eval.final_window` steps stays below `eval.margin`. With `out_dir`, each
/// run's trajectory is written to `run_<index>.csv` there.
pub fn failure_rate(
    policy: &MlpParams,
    env_config: &EnvConfig,
    eval: &EvalConfig,
    out_dir: Option<&Path>,
    workers: usize,
) -> Result<EvalReport> {
    eval.validate()?;
    let runs = map_indexed(eval.runs, workers, |index| -> Result<RunSummary> {
        let scenario = Scenario::hold((0.0, 0.0), eval.horizon, None);
        let rows = eval_deterministic(
            policy,
            env_config,
            &scenario,
            derive_seed(eval.seed, &[index as u64]),
        )?;
        let window = &rows[rows.len() - eval.final_window..];
        let window_mean_distance = window
            .iter()
            .map(TrajectoryRow::distance_to_waypoint)
            .sum::<f64>()
            / window.len() as f64;
        let trajectory = match out_dir {
            Some(dir) => {
                let path = dir.join(format!("run_{index}.csv"));
                write_trajectory(&path, &rows)?;
                Some(path)
            }
            None => None,
        };
        Ok(RunSummary {
            index,
            final_distance: rows.last().expect("horizon >= 1").distance_to_waypoint(),
            window_mean_distance,
            converged: window_mean_distance < eval.margin,
            trajectory,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(summarize(runs, eval.margin, eval.final_window))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub metrics: Vec<IterationMetrics>,
    pub trainer: PpoTrainer,
}

/// Runs `cfg.ppo.epochs` iterations, logging `metrics.jsonl` and saving
/// checkpoints under `out_dir/checkpoints` every [`CHECKPOINT_EVERY`]
/// iterations plus `out_dir/final.ckpt`. On failure the error is returned and
/// the checkpoints already written are left untouched.
pub fn train(
    cfg: &RunConfig,
    out_dir: &Path,
    mut on_iteration: impl FnMut(&IterationMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let ckpt_dir = out_dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    let config_path = out_dir.join("config.toml");
    std::fs::write(&config_path, cfg.to_toml_string()?).map_err(|e| Error::io(&config_path, e))?;

    let digest = cfg.digest();
    let mut trainer = PpoTrainer::new(cfg.ppo.clone(), cfg.env.clone())?;
    let mut log = MetricsWriter::create(&out_dir.join("metrics.jsonl"))?;
    let mut metrics = Vec::with_capacity(cfg.ppo.epochs);
    for _ in 0..cfg.ppo.epochs {
        let m = trainer.train_iteration()?;
        log.write(&m)?;
        on_iteration(&m);
        if trainer.iteration % CHECKPOINT_EVERY == 0 {
            let path = ckpt_dir.join(format!("iter_{:05}.ckpt", trainer.iteration));
            Checkpoint::from_trainer(&trainer, digest).save(&path)?;
        }
        metrics.push(m);
    }
    let final_checkpoint = out_dir.join("final.ckpt");
    Checkpoint::from_trainer(&trainer, digest).save(&final_checkpoint)?;
    Ok(TrainOutcome {
        final_checkpoint,
        metrics,
        trainer,
    })
}
