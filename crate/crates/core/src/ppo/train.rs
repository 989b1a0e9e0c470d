use serde::{Deserialize, Serialize};

use super::gae::{normalize_advantages, TrajectorySegment};
use super::loss::{ppo_loss, ActorCritic, LossStats, Minibatch};
use super::policy::{action_to_control, log_softmax, Action, PolicyOutput, CONTINUOUS_DIMS};
use crate::env::Control;
use crate::error::{Error, Result};
use crate::harness::{ActionMode, Agent, Checkpoint, MetricKind, MetricRecord, MetricSink, RunConfig, Trainer};
use crate::neural::{NetworkSpec, OptimizerState, StepStats, Tensor};
use crate::observe::AgentEnv;
use crate::rng::SplitMix64;

/// Draws an action from the policy head; returns it with its log-prob.
pub fn sample_action(pi: &PolicyOutput, rng: &mut SplitMix64) -> Result<(Action, f64)> {
    let action = match pi {
        PolicyOutput::Categorical { logits } => {
            let u = rng.next_f64();
            let mut acc = 0.0;
            let mut pick = logits.len() - 1;
            for (i, lp) in log_softmax(logits).iter().enumerate() {
                acc += lp.exp();
                if u < acc {
                    pick = i;
                    break;
                }
            }
            Action::Discrete(pick)
        }
        PolicyOutput::Gaussian { mean, .. } => {
            let ls = pi.log_std().unwrap();
            let mut u = [0.0; CONTINUOUS_DIMS];
            for d in 0..CONTINUOUS_DIMS {
                u[d] = mean[d] + ls[d].exp() * rng.normal();
            }
            Action::Continuous(u)
        }
    };
    let lp = pi.logprob(&action)?;
    Ok((action, lp))
}

fn row_input(spec: &NetworkSpec, obs: &[f32]) -> Result<Tensor> {
    Tensor::batch(&spec.input_shape, [obs])
}

/// One actor: a private environment and PRNG stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Actor {
    env: AgentEnv,
    obs: Vec<f32>,
    rng: SplitMix64,
}

/// What one actor hands back after T steps.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub segment: TrajectorySegment,
    pub bootstrap: f64,
    pub frames: u64,
    pub episode_scores: Vec<f64>,
}

impl Actor {
    fn collect(&mut self, nets: &ActorCritic, horizon: usize, gamma: f64, scale: f64) -> Result<Rollout> {
        let mut seg = TrajectorySegment::default();
        let mut frames = 0u64;
        let mut episode_scores = Vec::new();
        for _ in 0..horizon {
            let (pi, value) = single(nets, &self.obs)?;
            let (action, lp) = sample_action(&pi, &mut self.rng)?;
            let (next, s) = self.env.step(action_to_control(&action)?)?;
            frames += s.frames as u64;
            let mut reward = s.reward * scale;
            if s.truncated && !s.terminated {
                // Time limit is not a true terminal: fold in the value of the cut-off state.
                reward += gamma * single(nets, &next)?.1;
            }
            seg.observations.push(std::mem::replace(&mut self.obs, next));
            seg.actions.push(action);
            seg.logprobs.push(lp);
            seg.values.push(value);
            seg.rewards.push(reward);
            seg.dones.push(s.done());
            if s.done() {
                episode_scores.push(self.env.episode_score());
                self.obs = self.env.reset(None)?;
                frames += self.env.env().frame_index();
            }
        }
        let bootstrap = single(nets, &self.obs)?.1;
        Ok(Rollout {
            segment: seg,
            bootstrap,
            frames,
            episode_scores,
        })
    }
}

fn single(nets: &ActorCritic, obs: &[f32]) -> Result<(PolicyOutput, f64)> {
    let (mut heads, values) = nets.evaluate(&row_input(&nets.policy_spec, obs)?)?;
    Ok((heads.pop().unwrap(), values[0]))
}

/// Whole training state; serializes (minus parameters) into checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PpoTrainer {
    #[serde(skip)]
    cfg: RunConfig,
    nets: ActorCritic,
    policy_opt: OptimizerState,
    value_opt: OptimizerState,
    actors: Vec<Actor>,
    rng: SplitMix64,
    steps: u64,
    frames: u64,
    iterations: u64,
    updates: u64,
}

impl PpoTrainer {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let p = &cfg.ppo;
        let continuous = cfg.action_mode == ActionMode::Continuous;
        let nets = ActorCritic::new(
            cfg.network_spec(PolicyOutput::head_len(continuous), cfg.seed),
            cfg.network_spec(1, cfg.seed),
            continuous,
            p.policy_head_gain,
            SplitMix64::derive(cfg.seed, 1).next_u64(),
        )?;
        let policy_opt = OptimizerState::new(p.optimizer, &nets.policy)?;
        let value_opt = OptimizerState::new(p.optimizer, &nets.value)?;
        let mut frames = 0;
        let mut actors = Vec::with_capacity(p.actors);
        for k in 0..p.actors as u64 {
            let mut env = AgentEnv::new(
                cfg.env.clone(),
                cfg.observe.clone(),
                cfg.obs_mode,
                SplitMix64::derive(cfg.seed, 0x100 + k).next_u64(),
            )?;
            let obs = env.reset(None)?;
            frames += env.env().frame_index();
            actors.push(Actor {
                env,
                obs,
                rng: SplitMix64::derive(cfg.seed, 0x200 + k),
            });
        }
        Ok(Self {
            rng: SplitMix64::derive(cfg.seed, 3),
            cfg,
            nets,
            policy_opt,
            value_opt,
            actors,
            steps: 0,
            frames,
            iterations: 0,
            updates: 0,
        })
    }

    pub fn restore(cfg: RunConfig, ckpt: &Checkpoint) -> Result<Self> {
        let mut t: Self = ckpt.state()?;
        t.nets.policy = ckpt.params("policy")?;
        t.nets.value = ckpt.params("value")?;
        t.cfg = cfg;
        Ok(t)
    }

    pub fn nets(&self) -> &ActorCritic {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut ActorCritic {
        &mut self.nets
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Policy head and value for one observation.
    pub fn policy(&self, obs: &[f32]) -> Result<(PolicyOutput, f64)> {
        single(&self.nets, obs)
    }

    /// All N actors collect T steps under the current (θ_old) parameters.
    /// Actors run on scoped threads; each owns its env and PRNG stream, so the
    /// result does not depend on scheduling.
    pub fn collect(&mut self) -> Result<Vec<Rollout>> {
        let nets = &self.nets;
        let (horizon, gamma, scale) = (self.cfg.ppo.horizon, self.cfg.ppo.gamma, self.cfg.ppo.reward_scale);
        if self.actors.len() == 1 {
            return Ok(vec![self.actors[0].collect(nets, horizon, gamma, scale)?]);
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = self
                .actors
                .iter_mut()
                .map(|a| s.spawn(move || a.collect(nets, horizon, gamma, scale)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().map_err(|_| Error::Divergence("actor thread panicked".into()))?)
                .collect()
        })
    }

    /// Recomputes log-probs of the stored actions under the current
    /// parameters in one batched pass; they must match the collected ones bit
    /// for bit.
    pub fn check_sync(&self, rollouts: &[Rollout]) -> Result<()> {
        for r in rollouts {
            let seg = &r.segment;
            let input = Tensor::batch(&self.nets.policy_spec.input_shape, seg.observations.iter().map(|o| o.as_slice()))?;
            let (heads, _) = self.nets.evaluate(&input)?;
            for (i, (a, stored)) in seg.actions.iter().zip(&seg.logprobs).enumerate() {
                let lp = heads[i].logprob(a)?;
                if lp.to_bits() != stored.to_bits() {
                    return Err(Error::Divergence(format!(
                        "theta_old log-prob mismatch at sample {i}: stored {stored}, recomputed {lp}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// One optimizer step on each network; norms are reported jointly.
    fn apply_gradients(&mut self) -> Result<StepStats> {
        let a = self.policy_opt.step(&mut self.nets.policy)?;
        let b = self.value_opt.step(&mut self.nets.value)?;
        Ok(StepStats {
            grad_norm: a.grad_norm.hypot(b.grad_norm),
            update_norm: a.update_norm.hypot(b.update_norm),
        })
    }

    fn record(&self, sink: &mut dyn MetricSink, name: &str, value: f64) -> Result<()> {
        sink.record(MetricRecord {
            step: self.steps,
            frames: self.frames,
            kind: MetricKind::Train,
            name: name.into(),
            value,
            seed: self.cfg.seed,
        })
    }

    /// K epochs of shuffled minibatches over the flattened rollouts. Returns
    /// per-update optimizer stats and the mean loss terms.
    fn optimize(&mut self, rollouts: &mut [Rollout], sink: &mut dyn MetricSink) -> Result<(Vec<StepStats>, LossStats)> {
        let p = self.cfg.ppo.clone();
        let mut obs: Vec<&[f32]> = Vec::new();
        let mut actions = Vec::new();
        let mut logprobs = Vec::new();
        let mut advantages = Vec::new();
        let mut returns = Vec::new();
        for r in rollouts.iter_mut() {
            r.segment.compute_gae(r.bootstrap, p.gamma, p.lambda);
        }
        for r in rollouts.iter() {
            let s = &r.segment;
            obs.extend(s.observations.iter().map(|o| o.as_slice()));
            actions.extend_from_slice(&s.actions);
            logprobs.extend_from_slice(&s.logprobs);
            advantages.extend_from_slice(&s.advantages);
            returns.extend_from_slice(&s.returns);
        }
        let n = actions.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut steps = Vec::new();
        let mut mean = LossStats::default();
        for _ in 0..p.epochs {
            self.rng.shuffle(&mut order);
            for chunk in order.chunks(p.minibatch) {
                let mut adv: Vec<f64> = chunk.iter().map(|&i| advantages[i]).collect();
                normalize_advantages(&mut adv);
                let batch = Minibatch {
                    obs: Tensor::batch(&self.nets.policy_spec.input_shape, chunk.iter().map(|&i| obs[i]))?,
                    actions: chunk.iter().map(|&i| actions[i]).collect(),
                    old_logprobs: chunk.iter().map(|&i| logprobs[i]).collect(),
                    advantages: adv,
                    returns: chunk.iter().map(|&i| returns[i]).collect(),
                };
                self.nets.zero_grads();
                let stats = ppo_loss(&mut self.nets, &batch, p.coefficients())?;
                let step = self.apply_gradients()?;
                self.updates += 1;
                self.record(sink, "grad_norm", step.grad_norm)?;
                self.record(sink, "update_norm", step.update_norm)?;
                self.record(sink, "update_ratio", step.update_norm / (step.grad_norm + 1e-12))?;
                mean.loss += stats.loss;
                mean.policy_loss += stats.policy_loss;
                mean.value_loss += stats.value_loss;
                mean.entropy += stats.entropy;
                mean.clip_fraction += stats.clip_fraction;
                steps.push(step);
            }
        }
        if !steps.is_empty() {
            let k = steps.len() as f64;
            mean.loss /= k;
            mean.policy_loss /= k;
            mean.value_loss /= k;
            mean.entropy /= k;
            mean.clip_fraction /= k;
        }
        Ok((steps, mean))
    }
}

struct Greedy<'a>(&'a PpoTrainer);

impl Agent for Greedy<'_> {
    fn act(&mut self, obs: &[f32]) -> Result<Control> {
        action_to_control(&self.0.policy(obs)?.0.greedy())
    }
}

impl Trainer for PpoTrainer {
    fn config(&self) -> &RunConfig {
        &self.cfg
    }

    fn steps(&self) -> u64 {
        self.steps
    }

    fn frames(&self) -> u64 {
        self.frames
    }

    /// One iteration: collect N·T steps with θ_old, check the sync, K epochs
    /// of minibatch updates. The next collection then runs under θ, which is
    /// the θ_old ← θ assignment.
    fn advance(&mut self, sink: &mut dyn MetricSink) -> Result<()> {
        let mut rollouts = self.collect()?;
        self.check_sync(&rollouts)?;
        for r in &rollouts {
            self.steps += r.segment.len() as u64;
            self.frames += r.frames;
        }
        for r in &rollouts {
            for &score in &r.episode_scores {
                self.record(sink, "episode_return", score)?;
            }
        }
        let (_, stats) = self.optimize(&mut rollouts, sink)?;
        self.iterations += 1;
        if self.cfg.ppo.epochs > 0 {
            self.record(sink, "loss", stats.loss)?;
            self.record(sink, "policy_loss", stats.policy_loss)?;
            self.record(sink, "value_loss", stats.value_loss)?;
            self.record(sink, "entropy", stats.entropy)?;
            self.record(sink, "clip_fraction", stats.clip_fraction)?;
        }
        Ok(())
    }

    fn greedy_agent(&self) -> Box<dyn Agent + '_> {
        Box::new(Greedy(self))
    }

    fn checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::new(
            self.cfg.digest(),
            "ppo",
            &[("policy", &self.nets.policy), ("value", &self.nets.value)],
            self,
        )
    }
}
