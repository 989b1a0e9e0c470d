//! Categorical and diagonal-Gaussian policy heads: log-probabilities,
//! entropies and their derivatives with respect to the raw head outputs.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::env::{Control, DISCRETE_ACTIONS};
use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const CONTINUOUS_DIMS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    /// Pre-clamp sample in normalized space.
    Continuous([f64; CONTINUOUS_DIMS]),
}

/// Policy head output for one state, viewed over the raw network outputs.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyOutput {
    Categorical { logits: Vec<f64> },
    Gaussian { mean: [f64; 3], log_std_raw: [f64; 3] },
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

fn clamp_log_std(raw: f64) -> f64 {
    raw.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

impl PolicyOutput {
    /// Splits a raw head row: 5 logits, or 3 means followed by 3 log-stds.
    pub fn from_row(row: &[f64], continuous: bool) -> Result<Self> {
        if continuous {
            if row.len() != 2 * CONTINUOUS_DIMS {
                return Err(Error::ShapeMismatch {
                    expected: vec![2 * CONTINUOUS_DIMS],
                    got: vec![row.len()],
                });
            }
            Ok(PolicyOutput::Gaussian {
                mean: [row[0], row[1], row[2]],
                log_std_raw: [row[3], row[4], row[5]],
            })
        } else {
            if row.len() != DISCRETE_ACTIONS {
                return Err(Error::ShapeMismatch {
                    expected: vec![DISCRETE_ACTIONS],
                    got: vec![row.len()],
                });
            }
            Ok(PolicyOutput::Categorical { logits: row.to_vec() })
        }
    }

    pub fn head_len(continuous: bool) -> usize {
        if continuous {
            2 * CONTINUOUS_DIMS
        } else {
            DISCRETE_ACTIONS
        }
    }

    pub fn log_std(&self) -> Option<[f64; 3]> {
        match self {
            PolicyOutput::Gaussian { log_std_raw, .. } => Some(log_std_raw.map(clamp_log_std)),
            _ => None,
        }
    }

    pub fn logprob(&self, action: &Action) -> Result<f64> {
        match (self, action) {
            (PolicyOutput::Categorical { logits }, Action::Discrete(a)) => {
                if *a >= logits.len() {
                    return Err(Error::InvalidAction(*a));
                }
                Ok(log_softmax(logits)[*a])
            }
            (PolicyOutput::Gaussian { mean, .. }, Action::Continuous(u)) => {
                let ls = self.log_std().unwrap();
                Ok((0..CONTINUOUS_DIMS)
                    .map(|d| {
                        let z = (u[d] - mean[d]) / ls[d].exp();
                        -0.5 * z * z - ls[d] - 0.5 * (2.0 * PI).ln()
                    })
                    .sum())
            }
            _ => Err(Error::ModeMismatch),
        }
    }

    pub fn entropy(&self) -> f64 {
        match self {
            PolicyOutput::Categorical { logits } => {
                let lp = log_softmax(logits);
                -lp.iter().map(|l| l.exp() * l).sum::<f64>()
            }
            PolicyOutput::Gaussian { .. } => self
                .log_std()
                .unwrap()
                .iter()
                .map(|ls| ls + 0.5 * (1.0 + (2.0 * PI).ln()))
                .sum(),
        }
    }

    /// d logprob / d raw outputs.
    pub fn logprob_grad(&self, action: &Action) -> Result<Vec<f64>> {
        match (self, action) {
            (PolicyOutput::Categorical { logits }, Action::Discrete(a)) => {
                let lp = log_softmax(logits);
                Ok(lp
                    .iter()
                    .enumerate()
                    .map(|(j, l)| if j == *a { 1.0 } else { 0.0 } - l.exp())
                    .collect())
            }
            (PolicyOutput::Gaussian { mean, log_std_raw }, Action::Continuous(u)) => {
                let ls = self.log_std().unwrap();
                let mut g = vec![0.0; 2 * CONTINUOUS_DIMS];
                for d in 0..CONTINUOUS_DIMS {
                    let var = (2.0 * ls[d]).exp();
                    let diff = u[d] - mean[d];
                    g[d] = diff / var;
                    if (LOG_STD_MIN..=LOG_STD_MAX).contains(&log_std_raw[d]) {
                        g[CONTINUOUS_DIMS + d] = diff * diff / var - 1.0;
                    }
                }
                Ok(g)
            }
            _ => Err(Error::ModeMismatch),
        }
    }

    /// d entropy / d raw outputs.
    pub fn entropy_grad(&self) -> Vec<f64> {
        match self {
            PolicyOutput::Categorical { logits } => {
                let lp = log_softmax(logits);
                let h = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
                lp.iter().map(|l| -l.exp() * (l + h)).collect()
            }
            PolicyOutput::Gaussian { log_std_raw, .. } => {
                let mut g = vec![0.0; 2 * CONTINUOUS_DIMS];
                for d in 0..CONTINUOUS_DIMS {
                    if (LOG_STD_MIN..=LOG_STD_MAX).contains(&log_std_raw[d]) {
                        g[CONTINUOUS_DIMS + d] = 1.0;
                    }
                }
                g
            }
        }
    }

    /// Mode of the distribution (argmax logit or clamped mean).
    pub fn greedy(&self) -> Action {
        match self {
            PolicyOutput::Categorical { logits } => Action::Discrete(crate::dqn::argmax(logits)),
            PolicyOutput::Gaussian { mean, .. } => Action::Continuous(mean.map(|m| m.clamp(-1.0, 1.0))),
        }
    }
}

/// Maps a normalized action in [-1, 1]^3 to a control; inputs are clamped first.
pub fn normalize_action(u: [f64; 3]) -> Control {
    let u = u.map(|v| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) });
    Control::new(u[0], (u[1] + 1.0) / 2.0, (u[2] + 1.0) / 2.0)
}

pub fn action_to_control(action: &Action) -> Result<Control> {
    match action {
        Action::Discrete(a) => crate::env::discrete_to_control(*a),
        Action::Continuous(u) => Ok(normalize_action(*u)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_logprob() {
        let p = PolicyOutput::Categorical { logits: vec![0.3; 5] };
        assert!((p.logprob(&Action::Discrete(2)).unwrap() - (0.2f64).ln()).abs() < 1e-12);
        assert!((p.entropy() - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_logit() {
        let mut logits = vec![0.0; 5];
        logits[3] = 1000.0;
        let p = PolicyOutput::Categorical { logits };
        assert!(p.logprob(&Action::Discrete(3)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn standard_normal_density_at_zero() {
        // Three independent dims, so the one-dim value appears three times.
        let p = PolicyOutput::Gaussian {
            mean: [0.0; 3],
            log_std_raw: [0.0; 3],
        };
        let one_dim = -0.5 * (2.0 * PI).ln();
        assert!((one_dim + 0.9189).abs() < 1e-4);
        assert!((p.logprob(&Action::Continuous([0.0; 3])).unwrap() - 3.0 * one_dim).abs() < 1e-12);
    }

    #[test]
    fn log_std_is_clamped() {
        let p = PolicyOutput::Gaussian {
            mean: [0.0; 3],
            log_std_raw: [-9.0, 0.5, 7.0],
        };
        assert_eq!(p.log_std().unwrap(), [-5.0, 0.5, 2.0]);
        let g = p.entropy_grad();
        assert_eq!(&g[3..], &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn mode_mismatch() {
        let p = PolicyOutput::Categorical { logits: vec![0.0; 5] };
        assert!(matches!(p.logprob(&Action::Continuous([0.0; 3])), Err(Error::ModeMismatch)));
    }

    #[test]
    fn normalize_action_examples() {
        assert_eq!(normalize_action([-1.0; 3]), Control::new(-1.0, 0.0, 0.0));
        assert_eq!(normalize_action([0.0; 3]), Control::new(0.0, 0.5, 0.5));
        assert_eq!(normalize_action([1.0; 3]), Control::new(1.0, 1.0, 1.0));
        assert_eq!(normalize_action([3.0, -4.0, 0.0]), Control::new(1.0, 0.0, 0.5));
    }

    fn numeric(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] += h;
                b[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn head_gradients_match_finite_differences() {
        let logits = vec![0.3, -1.2, 0.8, 0.0, 2.1];
        let a = Action::Discrete(2);
        let g = PolicyOutput::Categorical { logits: logits.clone() }.logprob_grad(&a).unwrap();
        let n = numeric(|x| PolicyOutput::Categorical { logits: x.to_vec() }.logprob(&a).unwrap(), &logits);
        let he = PolicyOutput::Categorical { logits: logits.clone() }.entropy_grad();
        let hn = numeric(|x| PolicyOutput::Categorical { logits: x.to_vec() }.entropy(), &logits);
        for i in 0..5 {
            assert!((g[i] - n[i]).abs() < 1e-7);
            assert!((he[i] - hn[i]).abs() < 1e-7);
        }

        let raw = vec![0.2, -0.4, 0.9, -0.3, 0.1, -1.5];
        let u = Action::Continuous([0.5, -1.3, 0.2]);
        let gauss = |x: &[f64]| PolicyOutput::from_row(x, true).unwrap();
        let g = gauss(&raw).logprob_grad(&u).unwrap();
        let n = numeric(|x| gauss(x).logprob(&u).unwrap(), &raw);
        for i in 0..6 {
            assert!((g[i] - n[i]).abs() < 1e-6, "{i}: {} vs {}", g[i], n[i]);
        }
    }
}
