//! Deep Q-learning: replay, epsilon-greedy acting, target network, optional
//! Double-DQN targets and prioritized replay.

mod learner;
mod replay;
mod train;

use serde::{Deserialize, Serialize};

pub use learner::{argmax, targets_from_tables, DqnLearner, EpsilonSchedule, UpdateStats};
pub use replay::{ReplayBuffer, ReplayConfig, ReplayMode, SampledBatch, SumTree, Transition};
pub use train::DqnTrainer;

use crate::error::{Error, Result};
use crate::neural::OptimizerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub gamma: f64,
    pub batch_size: usize,
    /// Target network copy period, in gradient updates.
    pub target_sync: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Epsilon anneal length in env frames.
    pub eps_decay_frames: u64,
    /// Transitions collected before the first update.
    pub warmup: usize,
    /// One gradient update every this many agent decisions.
    pub train_every: u64,
    pub double_dqn: bool,
    pub replay: ReplayConfig,
    pub optimizer: OptimizerConfig,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            batch_size: 32,
            target_sync: 1_000,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_frames: 200_000,
            warmup: 1_000,
            train_every: 1,
            double_dqn: false,
            replay: ReplayConfig::default(),
            optimizer: OptimizerConfig::rmsprop(2.5e-4, 0.95, 1e-6),
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidParams("dqn.gamma must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.target_sync == 0 || self.train_every == 0 {
            return Err(Error::InvalidParams("dqn batch_size, target_sync, train_every must be positive".into()));
        }
        if self.batch_size > self.replay.capacity {
            return Err(Error::InvalidParams("dqn.batch_size exceeds replay capacity".into()));
        }
        EpsilonSchedule::new(self.eps_start, self.eps_end, self.eps_decay_frames)?;
        ReplayBuffer::new(ReplayConfig {
            capacity: 1,
            ..self.replay.clone()
        })?;
        if self.replay.capacity == 0 {
            return Err(Error::InvalidParams("dqn.replay.capacity must be positive".into()));
        }
        self.optimizer.validate()
    }
}
