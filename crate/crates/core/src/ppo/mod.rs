//! Proximal policy optimization: categorical or Gaussian policy heads, GAE,
//! the clipped surrogate, N-actor rollouts and the Adam collapse probe.

mod gae;
mod loss;
mod policy;
mod probe;
mod train;

use serde::{Deserialize, Serialize};

pub use gae::{compute_gae, normalize_advantages, TrajectorySegment};
pub use loss::{
    clipped_surrogate, clipped_surrogate_grad, ppo_loss, ActorCritic, LossCoefficients, LossStats, Minibatch,
};
pub use policy::{
    action_to_control, log_softmax, normalize_action, Action, PolicyOutput, CONTINUOUS_DIMS, LOG_STD_MAX, LOG_STD_MIN,
};
pub use probe::{adam_collapse_probe, ProbeResult};
pub use train::{sample_action, PpoTrainer, Rollout};

use crate::error::{Error, Result};
use crate::neural::OptimizerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub actors: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub optimizer: OptimizerConfig,
    /// Multiplier on the initial policy-head weights; small values start near uniform.
    pub policy_head_gain: f64,
    /// Rewards are multiplied by this before GAE and value fitting.
    pub reward_scale: f64,
    /// (β₁, β₂) settings swept by the collapse probe.
    pub collapse_betas: Vec<[f64; 2]>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            epochs: 4,
            minibatch: 512,
            actors: 4,
            horizon: 512,
            gamma: 0.99,
            lambda: 0.95,
            value_coef: 0.5,
            entropy_coef: 0.01,
            optimizer: OptimizerConfig::adam(3e-4),
            policy_head_gain: 0.01,
            reward_scale: 0.1,
            collapse_betas: vec![[0.9, 0.999], [0.99, 0.99]],
        }
    }
}

impl PpoConfig {
    pub fn coefficients(&self) -> LossCoefficients {
        LossCoefficients {
            clip: self.clip,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
        }
    }

    /// Samples per iteration, N·T.
    pub fn batch_len(&self) -> usize {
        self.actors * self.horizon
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(format!("ppo.{m}")));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if self.actors == 0 || self.horizon == 0 || self.minibatch == 0 {
            return bad("actors, horizon and minibatch must be positive");
        }
        if self.minibatch > self.batch_len() {
            return bad("minibatch must not exceed actors * horizon");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if !(self.value_coef >= 0.0 && self.entropy_coef >= 0.0) {
            return bad("loss coefficients must be non-negative");
        }
        if !(self.policy_head_gain > 0.0 && self.reward_scale > 0.0) {
            return bad("policy_head_gain and reward_scale must be positive");
        }
        for b in &self.collapse_betas {
            if !b.iter().all(|x| (0.0..1.0).contains(x)) {
                return bad("collapse_betas entries must lie in [0, 1)");
            }
        }
        self.optimizer.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PpoConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_oversized_minibatch() {
        let c = PpoConfig {
            actors: 1,
            horizon: 8,
            minibatch: 9,
            ..PpoConfig::default()
        };
        assert!(c.validate().is_err());
        let c = PpoConfig {
            clip: 1.0,
            ..PpoConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
