//! Clipped surrogate objective and the combined actor-critic loss.

use serde::{Deserialize, Serialize};

use super::policy::{Action, PolicyOutput};
use crate::error::{Error, Result};
use crate::neural::{backward, forward, init_params, predict, NetworkSpec, ParameterSet, Tensor};
use crate::rng::SplitMix64;

/// min(r·Â, clip(r, 1−ε, 1+ε)·Â) with r = exp(new − old).
pub fn clipped_surrogate(logprob_new: f64, logprob_old: f64, adv: f64, eps: f64) -> f64 {
    let r = (logprob_new - logprob_old).exp();
    (r * adv).min(r.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Derivative of `clipped_surrogate` with respect to `logprob_new`. Zero
/// whenever the clipped branch is strictly smaller.
pub fn clipped_surrogate_grad(logprob_new: f64, logprob_old: f64, adv: f64, eps: f64) -> f64 {
    let r = (logprob_new - logprob_old).exp();
    if r * adv <= r.clamp(1.0 - eps, 1.0 + eps) * adv {
        r * adv
    } else {
        0.0
    }
}

/// A shuffled slice of the rollout, advantages already normalized.
#[derive(Debug, Clone)]
pub struct Minibatch {
    /// `[B, ...input_shape]`
    pub obs: Tensor,
    pub actions: Vec<Action>,
    pub old_logprobs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCoefficients {
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Separate policy and value networks over the same observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub policy_spec: NetworkSpec,
    pub value_spec: NetworkSpec,
    #[serde(skip, default = "empty_params")]
    pub policy: ParameterSet,
    #[serde(skip, default = "empty_params")]
    pub value: ParameterSet,
    pub continuous: bool,
}

fn empty_params() -> ParameterSet {
    ParameterSet::new(Vec::new()).unwrap()
}

impl ActorCritic {
    pub fn new(
        policy_spec: NetworkSpec,
        value_spec: NetworkSpec,
        continuous: bool,
        head_gain: f64,
        seed: u64,
    ) -> Result<Self> {
        if policy_spec.output_len() != PolicyOutput::head_len(continuous) || value_spec.output_len() != 1 {
            return Err(Error::InvalidParams("actor-critic head widths do not match the action mode".into()));
        }
        let mut policy = init_params(&policy_spec, SplitMix64::derive(seed, 0).next_u64())?;
        let head = format!("{}.weight", policy_spec.layers.len() - 1);
        if let Some(w) = policy.value_mut(&head) {
            w.data_mut().iter_mut().for_each(|v| *v *= head_gain);
        }
        let value = init_params(&value_spec, SplitMix64::derive(seed, 1).next_u64())?;
        Ok(Self {
            policy_spec,
            value_spec,
            policy,
            value,
            continuous,
        })
    }

    /// Policy heads and values for a batch `[B, ...input_shape]`.
    pub fn evaluate(&self, obs: &Tensor) -> Result<(Vec<PolicyOutput>, Vec<f64>)> {
        let logits = predict(&self.policy_spec, &self.policy, obs)?;
        let values = predict(&self.value_spec, &self.value, obs)?;
        let heads = (0..logits.rows())
            .map(|i| PolicyOutput::from_row(logits.row(i), self.continuous))
            .collect::<Result<Vec<_>>>()?;
        Ok((heads, values.into_data()))
    }

    pub fn zero_grads(&mut self) {
        self.policy.zero_grads();
        self.value.zero_grads();
    }

    /// Global gradient norm over both networks.
    pub fn grad_norm(&self) -> f64 {
        self.policy.grad_norm().hypot(self.value.grad_norm())
    }
}

/// loss = −mean(L^CLIP) + c_v·mean((V − R)²) − c_e·mean(H). Gradients are
/// accumulated into both networks.
pub fn ppo_loss(nets: &mut ActorCritic, batch: &Minibatch, coef: LossCoefficients) -> Result<LossStats> {
    let b = batch.actions.len();
    if b == 0 || batch.obs.rows() != b || batch.old_logprobs.len() != b || batch.advantages.len() != b || batch.returns.len() != b {
        return Err(Error::InvalidParams("minibatch arrays differ in length".into()));
    }
    let (out, pcache) = forward(&nets.policy_spec, &nets.policy, &batch.obs)?;
    let (values, vcache) = forward(&nets.value_spec, &nets.value, &batch.obs)?;
    let width = out.len() / b;
    let mut upstream = vec![0.0; out.len()];
    let mut vgrad = vec![0.0; b];
    let mut stats = LossStats::default();
    let inv = 1.0 / b as f64;
    for i in 0..b {
        let pi = PolicyOutput::from_row(out.row(i), nets.continuous)?;
        let action = &batch.actions[i];
        let lp = pi.logprob(action)?;
        let (old, adv) = (batch.old_logprobs[i], batch.advantages[i]);
        let surr = clipped_surrogate(lp, old, adv, coef.clip);
        let d_lp = -inv * clipped_surrogate_grad(lp, old, adv, coef.clip);
        let ent = pi.entropy();
        let err = values.data()[i] - batch.returns[i];

        stats.policy_loss -= inv * surr;
        stats.value_loss += inv * err * err;
        stats.entropy += inv * ent;
        if ((lp - old).exp() - 1.0).abs() > coef.clip {
            stats.clip_fraction += inv;
        }

        let g = &mut upstream[i * width..(i + 1) * width];
        if d_lp != 0.0 {
            for (gj, dj) in g.iter_mut().zip(pi.logprob_grad(action)?) {
                *gj += d_lp * dj;
            }
        }
        if coef.entropy_coef != 0.0 {
            for (gj, dj) in g.iter_mut().zip(pi.entropy_grad()) {
                *gj -= coef.entropy_coef * inv * dj;
            }
        }
        vgrad[i] = coef.value_coef * 2.0 * inv * err;
    }
    stats.loss = stats.policy_loss + coef.value_coef * stats.value_loss - coef.entropy_coef * stats.entropy;
    if !stats.loss.is_finite() {
        return Err(Error::Divergence(format!("non-finite ppo loss {}", stats.loss)));
    }
    backward(&nets.policy_spec, &pcache, &mut nets.policy, &Tensor::new(out.shape().to_vec(), upstream)?)?;
    backward(&nets.value_spec, &vcache, &mut nets.value, &Tensor::new(values.shape().to_vec(), vgrad)?)?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surrogate_examples() {
        assert_eq!(clipped_surrogate(-0.7, -0.7, 3.0, 0.2), 3.0);
        let r15 = 1.5f64.ln();
        assert!((clipped_surrogate(r15, 0.0, 1.0, 0.2) - 1.2).abs() < 1e-12);
        let r05 = 0.5f64.ln();
        assert!((clipped_surrogate(r05, 0.0, -1.0, 0.2) + 0.8).abs() < 1e-12);
    }

    #[test]
    fn saturated_branches_have_zero_gradient() {
        assert_eq!(clipped_surrogate_grad(1.5f64.ln(), 0.0, 1.0, 0.2), 0.0);
        assert_eq!(clipped_surrogate_grad(0.5f64.ln(), 0.0, -1.0, 0.2), 0.0);
        // Pessimistic side keeps its gradient.
        assert!((clipped_surrogate_grad(0.5f64.ln(), 0.0, 1.0, 0.2) - 0.5).abs() < 1e-12);
        assert!((clipped_surrogate_grad(1.5f64.ln(), 0.0, -1.0, 0.2) + 1.5).abs() < 1e-12);
    }

    #[test]
    fn surrogate_gradient_matches_finite_difference() {
        for &(lp, adv) in &[(0.1, 1.0), (-0.1, 1.0), (0.1, -2.0), (-0.1, -2.0), (0.5, 0.3)] {
            let h = 1e-7;
            let n = (clipped_surrogate(lp + h, 0.0, adv, 0.2) - clipped_surrogate(lp - h, 0.0, adv, 0.2)) / (2.0 * h);
            assert!((n - clipped_surrogate_grad(lp, 0.0, adv, 0.2)).abs() < 1e-6);
        }
    }
}
