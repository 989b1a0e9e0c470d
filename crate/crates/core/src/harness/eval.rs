use std::fmt;

use serde::{Deserialize, Serialize};

use crate::env::{Control, EnvConfig};
use crate::error::Result;
use crate::observe::{AgentEnv, ObsMode, ObserveConfig};

pub const SOLVE_THRESHOLD: f64 = 800.0;
pub const SOLVE_EPISODES: usize = 100;

/// Anything that maps an observation to a control without exploring.
pub trait Agent {
    fn act(&mut self, obs: &[f32]) -> Result<Control>;
}

impl<F: FnMut(&[f32]) -> Result<Control>> Agent for F {
    fn act(&mut self, obs: &[f32]) -> Result<Control> {
        self(obs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Env frames per episode, intro included.
    pub mean_frames: f64,
    pub scores: Vec<f64>,
    /// Only defined for the full 100-episode protocol.
    pub solved: Option<bool>,
}

impl EvalSummary {
    pub fn from_scores(scores: Vec<f64>, frames: &[u64]) -> Self {
        let n = scores.len().max(1) as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        let solved = (scores.len() == SOLVE_EPISODES).then_some(mean >= SOLVE_THRESHOLD);
        Self {
            episodes: scores.len(),
            mean,
            std: var.sqrt(),
            min: scores.iter().copied().fold(f64::INFINITY, f64::min),
            max: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_frames: frames.iter().sum::<u64>() as f64 / n,
            scores,
            solved,
        }
    }

    pub fn verdict(&self) -> &'static str {
        match self.solved {
            Some(true) => "SOLVED",
            Some(false) => "NOT SOLVED",
            None => "n/a (needs 100 episodes)",
        }
    }
}

impl fmt::Display for EvalSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "episodes: {}", self.episodes)?;
        writeln!(f, "mean:     {:.2}", self.mean)?;
        writeln!(f, "std:      {:.2}", self.std)?;
        writeln!(f, "min:      {:.2}", self.min)?;
        writeln!(f, "max:      {:.2}", self.max)?;
        write!(f, "verdict:  {} (threshold {SOLVE_THRESHOLD} over {SOLVE_EPISODES} episodes)", self.verdict())
    }
}

/// Runs `episodes` full episodes on tracks regenerated from `seed`. Scores
/// follow the observe config (intro penalties counted by default).
pub fn evaluate_agent(
    agent: &mut dyn Agent,
    env: &EnvConfig,
    observe: &ObserveConfig,
    mode: ObsMode,
    episodes: usize,
    seed: u64,
) -> Result<EvalSummary> {
    let mut e = AgentEnv::new(env.clone(), observe.clone(), mode, seed)?;
    let mut scores = Vec::with_capacity(episodes);
    let mut frames = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = e.reset(None)?;
        loop {
            let control = agent.act(&obs)?;
            let (next, s) = e.step(control)?;
            obs = next;
            if s.done() {
                break;
            }
        }
        scores.push(e.episode_score());
        frames.push(e.env().frame_index());
    }
    Ok(EvalSummary::from_scores(scores, &frames))
}
