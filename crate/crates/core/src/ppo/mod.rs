//! Proximal policy optimization on the scorpion environment.

mod batch;
mod config;
pub mod gaussian;
mod loss;
pub mod returns;
mod trainer;

pub use batch::{EpisodeSpan, TrajectoryBatch};
pub use config::{LrSchedule, PpoConfig, ReturnMode};
pub use loss::{ppo_loss, value_loss, PolicyLoss};
pub use returns::compute_returns;
pub use trainer::{collect, IterationMetrics, PpoTrainer};
