//! Rollout segments and generalized advantage estimation.

use serde::{Deserialize, Serialize};

use super::policy::Action;

/// One actor's T-step rollout under θ_old.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub observations: Vec<Vec<f32>>,
    pub actions: Vec<Action>,
    pub logprobs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Empty until `compute_gae` runs.
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl TrajectorySegment {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Fills `advantages` and `returns` from the rewards, values and dones.
    pub fn compute_gae(&mut self, bootstrap: f64, gamma: f64, lambda: f64) {
        let (adv, ret) = compute_gae(&self.rewards, &self.values, &self.dones, bootstrap, gamma, lambda);
        self.advantages = adv;
        self.returns = ret;
    }
}

/// Backward recursion: δ_t = r_t + γ V_{t+1} (1 − d_t) − V_t and
/// Â_t = δ_t + γλ (1 − d_t) Â_{t+1}. Returns (advantages, returns).
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "segment arrays differ in length");
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Subtract mean, divide by (std + 1e-8).
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    for a in adv.iter_mut() {
        *a = (*a - mean) / (std + 1e-8);
    }
}
