use serde::{Deserialize, Serialize};

use super::params::ParameterSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    /// Accumulator `v = decay * v + (1 - decay) * g^2`, update `lr * g / sqrt(v + eps)`.
    Rmsprop,
    Adam,
}

/// Flat settings; fields irrelevant to `kind` are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global-norm gradient clipping threshold; `None` disables it.
    pub max_grad_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adam(3e-4)
    }
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr,
            decay: 0.95,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: None,
        }
    }

    pub fn rmsprop(lr: f64, decay: f64, eps: f64) -> Self {
        Self {
            kind: OptimizerKind::Rmsprop,
            decay,
            eps,
            ..Self::sgd(lr)
        }
    }

    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            ..Self::sgd(lr)
        }
    }

    pub fn with_betas(self, beta1: f64, beta2: f64) -> Self {
        Self { beta1, beta2, ..self }
    }

    pub fn with_eps(self, eps: f64) -> Self {
        Self { eps, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.into()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if let Some(c) = self.max_grad_norm {
            if !(c > 0.0) {
                return bad("max_grad_norm must be positive");
            }
        }
        match self.kind {
            OptimizerKind::Sgd => Ok(()),
            OptimizerKind::Rmsprop => {
                if !(0.0..1.0).contains(&self.decay) || !(self.eps > 0.0) {
                    return bad("rmsprop needs 0 <= decay < 1 and eps > 0");
                }
                Ok(())
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (self.beta1, self.beta2);
                if !(b1 > 0.0 && b1 < 1.0 && b2 > 0.0 && b2 < 1.0) || !(self.eps > 0.0) {
                    return bad("adam needs 0 < beta1, beta2 < 1 and eps > 0");
                }
                Ok(())
            }
        }
    }
}

/// Norms from one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    /// Norm of the applied parameter change.
    pub update_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub step: u64,
    /// First moments (Adam only).
    m: Vec<Vec<f64>>,
    /// Second moments (RMSProp accumulator or Adam).
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, params: &ParameterSet) -> Result<Self> {
        config.validate()?;
        let zeros: Vec<Vec<f64>> = params.params().iter().map(|p| vec![0.0; p.value.len()]).collect();
        let m = match config.kind {
            OptimizerKind::Adam => zeros.clone(),
            _ => Vec::new(),
        };
        let v = match config.kind {
            OptimizerKind::Sgd => Vec::new(),
            _ => zeros,
        };
        Ok(Self { config, step: 0, m, v })
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    /// Non-finite gradients abort with a divergence error and leave the
    /// parameters untouched.
    pub fn step(&mut self, params: &mut ParameterSet) -> Result<StepStats> {
        let grad_norm = params.grad_norm();
        if !grad_norm.is_finite() {
            return Err(Error::Divergence("non-finite gradient".into()));
        }
        let scale = match self.config.max_grad_norm {
            Some(c) if grad_norm > c => c / grad_norm,
            _ => 1.0,
        };
        self.step += 1;
        let t = self.step as i32;
        let lr = self.config.lr;
        let c = self.config;
        let mut update_sq = 0.0;
        for (i, p) in params.params_mut().iter_mut().enumerate() {
            let grads = p.grad.data();
            let values = p.value.data_mut();
            for (j, (w, &g0)) in values.iter_mut().zip(grads).enumerate() {
                let g = g0 * scale;
                let delta = match c.kind {
                    OptimizerKind::Sgd => -lr * g,
                    OptimizerKind::Rmsprop => {
                        let v = &mut self.v[i][j];
                        *v = c.decay * *v + (1.0 - c.decay) * g * g;
                        -lr * g / (*v + c.eps).sqrt()
                    }
                    OptimizerKind::Adam => {
                        let m = &mut self.m[i][j];
                        let v = &mut self.v[i][j];
                        *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                        *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                        let mh = *m / (1.0 - c.beta1.powi(t));
                        let vh = *v / (1.0 - c.beta2.powi(t));
                        -lr * mh / (vh.sqrt() + c.eps)
                    }
                };
                *w += delta;
                update_sq += delta * delta;
            }
            p.grad.fill(0.0);
        }
        if params.params().iter().any(|p| !p.value.is_finite()) {
            return Err(Error::Divergence("non-finite parameter after update".into()));
        }
        Ok(StepStats {
            grad_norm,
            update_norm: update_sq.sqrt(),
        })
    }
}
