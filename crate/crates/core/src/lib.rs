//! Waypoint-tracking control of a scorpion-inspired robot with PPO.
//!
//! * [`env`]: planar surrogate simulator with the normalized observation,
//!   action and reward interface.
//! * [`tinynet`]: fully connected networks with manual backpropagation,
//!   Adam/SGD and a finite-difference gradient checker.
//! * [`ppo`]: rollout collection, return targets, clipped-surrogate and
//!   critic losses, and the per-iteration update.
//! * [`harness`]: training runs with logging and checkpoints, scheduled
//!   waypoint evaluation and the randomized-start convergence study.

pub mod checkpoint;
pub mod config;
pub mod env;
pub mod error;
pub mod harness;
pub mod logs;
mod parallel;
pub mod ppo;
pub mod seeding;
pub mod tinynet;

pub use checkpoint::Checkpoint;
pub use config::{EvalConfig, RunConfig};
pub use env::{ActionNorm, EnvConfig, MotorCommand, Observation, RobotState, ScorpionEnv};
pub use error::{Error, Result};
pub use harness::{EvalReport, Scenario};
pub use logs::TrajectoryRow;
pub use ppo::{IterationMetrics, PpoConfig, PpoTrainer, ReturnMode, TrajectoryBatch};
pub use tinynet::{MlpParams, Optimizer, OptimizerKind};
