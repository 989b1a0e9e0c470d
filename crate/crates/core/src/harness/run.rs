//! Training driver: advance, evaluate and checkpoint on period boundaries,
//! and the run-directory layout.

use std::path::{Path, PathBuf};

use super::checkpoint::Checkpoint;
use super::config::{Algorithm, RunConfig};
use super::eval::{evaluate_agent, Agent, EvalSummary};
use super::metrics::{JsonlSink, MetricKind, MetricRecord, MetricSink};
use crate::dqn::DqnTrainer;
use crate::error::{Error, Result};
use crate::ppo::PpoTrainer;
use crate::rng::SplitMix64;

pub trait Trainer {
    fn config(&self) -> &RunConfig;
    /// Agent decisions taken.
    fn steps(&self) -> u64;
    /// Env frames stepped.
    fn frames(&self) -> u64;
    /// One unit of work: a decision (DQN) or a collect-and-optimize iteration (PPO).
    fn advance(&mut self, sink: &mut dyn MetricSink) -> Result<()>;
    /// Exploration-free policy for evaluation.
    fn greedy_agent(&self) -> Box<dyn Agent + '_>;
    fn checkpoint(&self) -> Result<Checkpoint>;
}

/// Seed of the fixed evaluation track set for a run.
pub fn eval_seed(run_seed: u64) -> u64 {
    SplitMix64::derive(run_seed, 0xe7a1).next_u64()
}

pub fn evaluate_trainer(trainer: &dyn Trainer, episodes: usize, seed: u64) -> Result<EvalSummary> {
    let cfg = trainer.config();
    let mut agent = trainer.greedy_agent();
    evaluate_agent(agent.as_mut(), &cfg.env, &cfg.observe, cfg.obs_mode, episodes, seed)
}

pub fn record_eval(sink: &mut dyn MetricSink, trainer: &dyn Trainer, s: &EvalSummary) -> Result<()> {
    let (step, frames, seed) = (trainer.steps(), trainer.frames(), trainer.config().seed);
    for (name, value) in [
        ("mean_return", s.mean),
        ("std_return", s.std),
        ("min_return", s.min),
        ("max_return", s.max),
    ] {
        sink.record(MetricRecord {
            step,
            frames,
            kind: MetricKind::Eval,
            name: name.into(),
            value,
            seed,
        })?;
    }
    Ok(())
}

/// Runs until `total_steps`, evaluating and handing a checkpoint to
/// `on_checkpoint` each time an eval-period boundary is crossed. Returns the
/// last evaluation.
pub fn train_loop(
    trainer: &mut dyn Trainer,
    sink: &mut dyn MetricSink,
    on_checkpoint: &mut dyn FnMut(u64, &Checkpoint, &EvalSummary) -> Result<()>,
) -> Result<Option<EvalSummary>> {
    let (total, period, episodes, seed) = {
        let c = trainer.config();
        (c.total_steps, c.eval_period, c.eval_episodes as usize, eval_seed(c.seed))
    };
    let mut last = None;
    let mut next_eval = (trainer.steps() / period + 1) * period;
    while trainer.steps() < total {
        trainer.advance(sink)?;
        if trainer.steps() >= next_eval {
            let summary = evaluate_trainer(trainer, episodes, seed)?;
            record_eval(sink, trainer, &summary)?;
            sink.flush()?;
            on_checkpoint(trainer.steps(), &trainer.checkpoint()?, &summary)?;
            next_eval = (trainer.steps() / period + 1) * period;
            last = Some(summary);
        }
    }
    sink.flush()?;
    Ok(last)
}

pub fn new_trainer(cfg: &RunConfig) -> Result<Box<dyn Trainer + Send>> {
    cfg.validate()?;
    Ok(match cfg.algorithm {
        Algorithm::Dqn => Box::new(DqnTrainer::new(cfg.clone())?),
        Algorithm::Ppo => Box::new(PpoTrainer::new(cfg.clone())?),
    })
}

/// Rebuilds a trainer from a checkpoint written under the same config.
pub fn restore_trainer(cfg: &RunConfig, ckpt: &Checkpoint) -> Result<Box<dyn Trainer + Send>> {
    cfg.validate()?;
    ckpt.check_digest(&cfg.digest())?;
    if ckpt.algorithm != cfg.algorithm.name() {
        return Err(Error::Config(format!(
            "checkpoint was written by {}, config says {}",
            ckpt.algorithm,
            cfg.algorithm.name()
        )));
    }
    Ok(match cfg.algorithm {
        Algorithm::Dqn => Box::new(DqnTrainer::restore(cfg.clone(), ckpt)?),
        Algorithm::Ppo => Box::new(PpoTrainer::restore(cfg.clone(), ckpt)?),
    })
}

/// Run directory: `config.toml`, `metrics.jsonl`, `checkpoints/step_N.apx`, `eval_summary.json`.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.jsonl")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn checkpoint(&self, step: u64) -> PathBuf {
        self.checkpoints().join(format!("step_{step}.apx"))
    }

    pub fn eval_summary(&self) -> PathBuf {
        self.root.join("eval_summary.json")
    }

    /// Most recent checkpoint by step number.
    pub fn latest_checkpoint(&self) -> Result<Option<PathBuf>> {
        let dir = self.checkpoints();
        if !dir.exists() {
            return Ok(None);
        }
        let mut best: Option<(u64, PathBuf)> = None;
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let step = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_prefix("step_")?.strip_suffix(".apx")?.parse::<u64>().ok());
            if let Some(s) = step {
                if best.as_ref().map_or(true, |(b, _)| s > *b) {
                    best = Some((s, path));
                }
            }
        }
        Ok(best.map(|(_, p)| p))
    }
}

/// Trains a fresh run into `dir`, or resumes from `resume` (metrics are
/// appended). Returns the last evaluation.
pub fn run_training(cfg: &RunConfig, dir: &RunDir, resume: Option<&Path>) -> Result<Option<EvalSummary>> {
    std::fs::create_dir_all(dir.checkpoints())?;
    std::fs::write(dir.config(), cfg.to_toml())?;
    let (mut trainer, mut sink) = match resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            let trainer = restore_trainer(cfg, &ckpt)?;
            truncate_metrics_after(&dir.metrics(), trainer.steps())?;
            (trainer, JsonlSink::append(&dir.metrics())?)
        }
        None => (new_trainer(cfg)?, JsonlSink::create(&dir.metrics())?),
    };
    let summary_path = dir.eval_summary();
    let mut save = |step: u64, ckpt: &Checkpoint, summary: &EvalSummary| -> Result<()> {
        ckpt.save(&dir.checkpoint(step))?;
        let json = serde_json::to_string_pretty(summary).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(&summary_path, json)?;
        Ok(())
    };
    train_loop(trainer.as_mut(), &mut sink, &mut save)
}

/// Drops metric lines recorded after `step` so a resumed run continues the
/// stream exactly where the checkpoint left it.
fn truncate_metrics_after(path: &Path, step: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let text = std::fs::read_to_string(path)?;
    let mut kept = String::new();
    for line in text.lines() {
        let rec: MetricRecord = serde_json::from_str(line).map_err(|e| Error::Config(format!("bad metrics line: {e}")))?;
        if rec.step <= step {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    std::fs::write(path, kept)?;
    Ok(())
}
