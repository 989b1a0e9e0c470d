use serde::{Deserialize, Serialize};

use super::learner::{DqnLearner, EpsilonSchedule};
use super::replay::{ReplayBuffer, Transition};
use crate::env::{discrete_to_control, Control};
use crate::error::Result;
use crate::harness::{Agent, Checkpoint, MetricKind, MetricRecord, MetricSink, RunConfig, Trainer};
use crate::observe::{AgentEnv, ObsMode};
use crate::rng::SplitMix64;

/// Whole training state; serializes (minus parameters) into checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DqnTrainer {
    #[serde(skip)]
    cfg: RunConfig,
    env: AgentEnv,
    obs: Vec<f32>,
    learner: DqnLearner,
    replay: ReplayBuffer,
    schedule: EpsilonSchedule,
    rng: SplitMix64,
    steps: u64,
    frames: u64,
    episodes: u64,
    loss_sum: f64,
    loss_count: u64,
}

impl DqnTrainer {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let d = &cfg.dqn;
        let spec = cfg.network_spec(crate::env::DISCRETE_ACTIONS, cfg.seed);
        let learner = DqnLearner::new(
            spec,
            SplitMix64::derive(cfg.seed, 1).next_u64(),
            d.optimizer,
            d.gamma,
            d.target_sync,
            d.double_dqn,
        )?;
        let mut replay_cfg = d.replay.clone();
        replay_cfg.quantize = cfg.obs_mode == ObsMode::Pixel;
        let replay = ReplayBuffer::new(replay_cfg)?;
        let schedule = EpsilonSchedule::new(d.eps_start, d.eps_end, d.eps_decay_frames)?;
        let mut env = AgentEnv::new(
            cfg.env.clone(),
            cfg.observe.clone(),
            cfg.obs_mode,
            SplitMix64::derive(cfg.seed, 2).next_u64(),
        )?;
        let obs = env.reset(None)?;
        let frames = env.env().frame_index();
        Ok(Self {
            rng: SplitMix64::derive(cfg.seed, 3),
            cfg,
            env,
            obs,
            learner,
            replay,
            schedule,
            steps: 0,
            frames,
            episodes: 0,
            loss_sum: 0.0,
            loss_count: 0,
        })
    }

    pub fn restore(cfg: RunConfig, ckpt: &Checkpoint) -> Result<Self> {
        let mut t: Self = ckpt.state()?;
        t.learner.online = ckpt.params("online")?;
        t.learner.target = ckpt.params("target")?;
        t.cfg = cfg;
        Ok(t)
    }

    pub fn learner(&self) -> &DqnLearner {
        &self.learner
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn epsilon(&self) -> f64 {
        self.schedule.value(self.frames)
    }

    fn train_record(&self, name: &str, value: f64) -> MetricRecord {
        MetricRecord {
            step: self.steps,
            frames: self.frames,
            kind: MetricKind::Train,
            name: name.into(),
            value,
            seed: self.cfg.seed,
        }
    }
}

struct Greedy<'a>(&'a DqnLearner);

impl Agent for Greedy<'_> {
    fn act(&mut self, obs: &[f32]) -> Result<Control> {
        discrete_to_control(self.0.greedy(obs)?)
    }
}

impl Trainer for DqnTrainer {
    fn config(&self) -> &RunConfig {
        &self.cfg
    }

    fn steps(&self) -> u64 {
        self.steps
    }

    fn frames(&self) -> u64 {
        self.frames
    }

    fn advance(&mut self, sink: &mut dyn MetricSink) -> Result<()> {
        let d = &self.cfg.dqn;
        let action = self.learner.act(&self.obs, self.schedule.value(self.frames), &mut self.rng)?;
        let (next, s) = self.env.step(discrete_to_control(action)?)?;
        self.frames += s.frames as u64;
        self.steps += 1;
        let obs = std::mem::replace(&mut self.obs, next.clone());
        self.replay.push(Transition {
            obs,
            action,
            reward: s.reward,
            next_obs: next,
            terminal: s.terminated,
        })?;

        if self.replay.len() >= d.warmup.max(d.batch_size) && self.steps % d.train_every == 0 {
            let batch = self.replay.sample(d.batch_size, &mut self.rng)?;
            let (stats, td) = self.learner.update(&batch.transitions, &batch.weights)?;
            self.replay.update_priorities(&batch.indices, &batch.generations, &td)?;
            self.loss_sum += stats.loss;
            self.loss_count += 1;
        }

        if s.done() {
            self.episodes += 1;
            let score = self.env.episode_score();
            sink.record(self.train_record("episode_return", score))?;
            self.obs = self.env.reset(None)?;
            self.frames += self.env.env().frame_index();
        }

        if self.steps % self.cfg.log_period == 0 {
            if self.loss_count > 0 {
                let mean = self.loss_sum / self.loss_count as f64;
                sink.record(self.train_record("loss", mean))?;
            }
            sink.record(self.train_record("epsilon", self.schedule.value(self.frames)))?;
            self.loss_sum = 0.0;
            self.loss_count = 0;
        }
        Ok(())
    }

    fn greedy_agent(&self) -> Box<dyn Agent + '_> {
        Box::new(Greedy(&self.learner))
    }

    fn checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::new(
            self.cfg.digest(),
            "dqn",
            &[("online", &self.learner.online), ("target", &self.learner.target)],
            self,
        )
    }
}
