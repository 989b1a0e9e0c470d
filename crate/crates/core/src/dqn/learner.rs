use serde::{Deserialize, Serialize};

use super::replay::Transition;
use crate::env::DISCRETE_ACTIONS;
use crate::error::{Error, Result};
use crate::neural::{
    backward, forward, init_params, predict, NetworkSpec, OptimizerConfig, OptimizerState, ParameterSet, StepStats,
    Tensor,
};
use crate::rng::SplitMix64;

/// Linear anneal from `start` to `end` over `decay_steps`, then flat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn new(start: f64, end: f64, decay_steps: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&end) || decay_steps == 0 {
            return Err(Error::InvalidParams("epsilon in [0,1] and decay_steps > 0 required".into()));
        }
        Ok(Self { start, end, decay_steps })
    }

    pub fn value(&self, t: u64) -> f64 {
        if t >= self.decay_steps {
            return self.end;
        }
        self.start + (self.end - self.start) * (t as f64 / self.decay_steps as f64)
    }
}

/// Lowest-index argmax.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// Bootstrap targets from precomputed Q-rows of the next states.
/// `target_q` holds `Q(s', .; theta-)`, `online_q` holds `Q(s', .; theta)` (used
/// only for Double DQN action selection).
pub fn targets_from_tables(
    rewards: &[f64],
    terminals: &[bool],
    target_q: &Tensor,
    online_q: Option<&Tensor>,
    gamma: f64,
) -> Vec<f64> {
    (0..rewards.len())
        .map(|i| {
            if terminals[i] {
                return rewards[i];
            }
            let tq = target_q.row(i);
            let bootstrap = match online_q {
                Some(oq) => tq[argmax(oq.row(i))],
                None => tq.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            };
            rewards[i] + gamma * bootstrap
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub loss: f64,
    pub grad_norm: f64,
    pub update_norm: f64,
    pub synced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnLearner {
    pub spec: NetworkSpec,
    #[serde(skip, default = "empty_params")]
    pub online: ParameterSet,
    #[serde(skip, default = "empty_params")]
    pub target: ParameterSet,
    pub optimizer: OptimizerState,
    pub gamma: f64,
    pub sync_period: u64,
    pub double_dqn: bool,
    pub updates: u64,
}

fn empty_params() -> ParameterSet {
    ParameterSet::new(Vec::new()).unwrap()
}

impl DqnLearner {
    pub fn new(
        spec: NetworkSpec,
        seed: u64,
        optimizer: OptimizerConfig,
        gamma: f64,
        sync_period: u64,
        double_dqn: bool,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParams("gamma must lie in [0, 1)".into()));
        }
        if sync_period == 0 {
            return Err(Error::InvalidParams("target sync period must be positive".into()));
        }
        if spec.output_len() != DISCRETE_ACTIONS {
            return Err(Error::InvalidParams("Q-network needs one output per discrete action".into()));
        }
        let online = init_params(&spec, seed)?;
        let target = online.clone();
        let optimizer = OptimizerState::new(optimizer, &online)?;
        Ok(Self {
            spec,
            online,
            target,
            optimizer,
            gamma,
            sync_period,
            double_dqn,
            updates: 0,
        })
    }

    fn batch_tensor<'a>(&self, rows: impl IntoIterator<Item = &'a [f32]>) -> Result<Tensor> {
        Tensor::batch(&self.spec.input_shape, rows)
    }

    pub fn q_values(&self, obs: &[f32]) -> Result<Vec<f64>> {
        Ok(predict(&self.spec, &self.online, &self.batch_tensor([obs])?)?.into_data())
    }

    pub fn greedy(&self, obs: &[f32]) -> Result<usize> {
        Ok(argmax(&self.q_values(obs)?))
    }

    /// Epsilon-greedy. Always consumes one uniform draw, plus one more when exploring.
    pub fn act(&self, obs: &[f32], epsilon: f64, rng: &mut SplitMix64) -> Result<usize> {
        if rng.next_f64() < epsilon {
            return Ok(rng.index(DISCRETE_ACTIONS));
        }
        self.greedy(obs)
    }

    pub fn compute_targets(&self, batch: &[Transition]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::InvalidParams("empty batch".into()));
        }
        let next = self.batch_tensor(batch.iter().map(|t| t.next_obs.as_slice()))?;
        let target_q = predict(&self.spec, &self.target, &next)?;
        let online_q = if self.double_dqn {
            Some(predict(&self.spec, &self.online, &next)?)
        } else {
            None
        };
        let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
        let terminals: Vec<bool> = batch.iter().map(|t| t.terminal).collect();
        Ok(targets_from_tables(&rewards, &terminals, &target_q, online_q.as_ref(), self.gamma))
    }

    /// Weighted MSE `mean_i w_i (y_i - Q(s_i, a_i))^2`; accumulates gradients in
    /// the online parameters and returns the loss and TD errors `y - Q`.
    pub fn loss_and_gradients(&mut self, batch: &[Transition], targets: &[f64], weights: &[f64]) -> Result<(f64, Vec<f64>)> {
        let x = self.batch_tensor(batch.iter().map(|t| t.obs.as_slice()))?;
        let (q, cache) = forward(&self.spec, &self.online, &x)?;
        let b = batch.len();
        let mut upstream = Tensor::zeros(q.shape());
        let mut loss = 0.0;
        let mut td = Vec::with_capacity(b);
        for (i, t) in batch.iter().enumerate() {
            if t.action >= DISCRETE_ACTIONS {
                return Err(Error::InvalidAction(t.action));
            }
            let delta = targets[i] - q.row(i)[t.action];
            loss += weights[i] * delta * delta;
            upstream.data_mut()[i * DISCRETE_ACTIONS + t.action] = -2.0 * weights[i] * delta / b as f64;
            td.push(delta);
        }
        let loss = loss / b as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("non-finite DQN loss after {} updates", self.updates)));
        }
        backward(&self.spec, &cache, &mut self.online, &upstream)?;
        Ok((loss, td))
    }

    /// One gradient step on a batch; syncs the target every `sync_period` updates.
    pub fn update(&mut self, batch: &[Transition], weights: &[f64]) -> Result<(UpdateStats, Vec<f64>)> {
        let targets = self.compute_targets(batch)?;
        self.online.zero_grads();
        let (loss, td) = self.loss_and_gradients(batch, &targets, weights)?;
        let StepStats { grad_norm, update_norm } = self.optimizer.step(&mut self.online)?;
        self.updates += 1;
        let synced = self.updates % self.sync_period == 0;
        if synced {
            self.sync_target()?;
        }
        Ok((
            UpdateStats {
                loss,
                grad_norm,
                update_norm,
                synced,
            },
            td,
        ))
    }

    pub fn sync_target(&mut self) -> Result<()> {
        self.target.copy_values_from(&self.online)
    }
}
