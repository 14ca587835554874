//! Distributional DQN: categorical value head, prioritized replay,
//! double-Q targets, Adam, the training loop and checkpoints.

mod adam;
mod agent;
mod c51;
mod checkpoint;
mod config;
mod net;
mod replay;
mod train;

pub use adam::Adam;
pub use agent::{select_action, Agent, Batch, PolicyController, StepStats, ValueDistribution};
pub use c51::{project_target, support};
pub use checkpoint::{Checkpoint, RngState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::TrainConfig;
pub use net::Mlp;
pub use replay::{PrioritizedReplay, Sample, SumTree};
pub use train::{train, train_with_progress, LogRow, TrainOutcome};

use crate::zone::{Observation, RvAction};

/// One replay record. The priority lives in the buffer's sum tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: RvAction,
    pub reward: f64,
    pub next_obs: Observation,
    pub terminal: bool,
}
