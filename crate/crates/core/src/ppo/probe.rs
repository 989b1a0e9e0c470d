//! Adam (β₁, β₂) sweep that records per-update step and gradient norms, so
//! large parameter jumps under small gradients show up in the metrics.

use serde::{Deserialize, Serialize};

use super::train::PpoTrainer;
use crate::error::Result;
use crate::harness::{Algorithm, MemorySink, MetricSink, RunConfig, Tee, Trainer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub betas: [f64; 2],
    pub frames: u64,
    pub updates: usize,
    pub grad_norms: Vec<f64>,
    pub update_norms: Vec<f64>,
    /// ‖Δθ‖ / (‖g‖ + 1e-12) per update.
    pub ratios: Vec<f64>,
}

impl ProbeResult {
    /// Ratio quantile by nearest rank, `q` in [0, 1].
    pub fn ratio_quantile(&self, q: f64) -> f64 {
        if self.ratios.is_empty() {
            return f64::NAN;
        }
        let mut r = self.ratios.clone();
        r.sort_by(f64::total_cmp);
        r[((r.len() - 1) as f64 * q.clamp(0.0, 1.0)).round() as usize]
    }
}

/// Trains PPO once per configured (β₁, β₂) until `frame_budget` env frames,
/// streaming each run's metrics to the sink returned by `sink_for`.
pub fn adam_collapse_probe(
    base: &RunConfig,
    frame_budget: u64,
    sink_for: &mut dyn FnMut([f64; 2]) -> Result<Box<dyn MetricSink>>,
) -> Result<Vec<ProbeResult>> {
    let mut results = Vec::new();
    for &betas in &base.ppo.collapse_betas {
        let mut cfg = base.clone();
        cfg.algorithm = Algorithm::Ppo;
        cfg.ppo.optimizer = cfg.ppo.optimizer.with_betas(betas[0], betas[1]);
        let mut trainer = PpoTrainer::new(cfg)?;
        let mut outer = sink_for(betas)?;
        let mut mem = MemorySink::default();
        while trainer.frames() < frame_budget {
            trainer.advance(&mut Tee(outer.as_mut(), &mut mem))?;
        }
        outer.flush()?;
        let grad_norms = mem.values("grad_norm");
        results.push(ProbeResult {
            betas,
            frames: trainer.frames(),
            updates: grad_norms.len(),
            grad_norms,
            update_norms: mem.values("update_norm"),
            ratios: mem.values("update_ratio"),
        });
    }
    Ok(results)
}
