//! Shared fixtures: a scripted pure-pursuit driver and a random driver.
#![allow(dead_code)]

use pitlane::env::{Control, RacingEnv};
use pitlane::geom::wrap_angle;
use pitlane::rng::SplitMix64;

/// Full gas, steering toward a centerline point whose lookahead grows with speed.
pub fn pure_pursuit(env: &RacingEnv) -> Control {
    let track = env.track();
    let car = env.car();
    let n = track.tile_count();
    let i = match env.current_tile() {
        Some(t) => t,
        None => track.nearest_segment(car.position).0,
    };
    let ahead = 2 + (car.speed / 20.0) as usize;
    let target = track.tile_center((i + ahead) % n);
    let to = target - car.position;
    let err = wrap_angle(to.y.atan2(to.x) - car.heading);
    let steer = (2.0 * err / env.config().physics.max_steer).clamp(-1.0, 1.0);
    Control::new(steer, 1.0, 0.0)
}

pub fn random_control(rng: &mut SplitMix64) -> Control {
    Control::new(rng.uniform(-1.0, 1.0), rng.next_f64(), rng.next_f64() * 0.3)
}

/// Â_t = Σ_k (γλ)^k δ_{t+k}, truncated at the first done at or after t.
pub fn brute_force_gae(r: &[f64], v: &[f64], d: &[bool], boot: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let delta: Vec<f64> = (0..n)
        .map(|t| {
            let next = if t + 1 < n { v[t + 1] } else { boot };
            let live = if d[t] { 0.0 } else { 1.0 };
            r[t] + gamma * next * live - v[t]
        })
        .collect();
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            for k in 0..n - t {
                sum += (gamma * lambda).powi(k as i32) * delta[t + k];
                if d[t + k] {
                    break;
                }
            }
            sum
        })
        .collect()
}

/// Largest |Â − oracle| over `count` random segments of length up to 64.
pub fn gae_oracle_error(count: usize, seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let n = 1 + rng.index(64);
        let gamma = rng.uniform(0.0, 0.999);
        let lambda = rng.next_f64();
        let r: Vec<f64> = (0..n).map(|_| rng.uniform(-5.0, 5.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.uniform(-5.0, 5.0)).collect();
        let d: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.1).collect();
        let boot = rng.uniform(-5.0, 5.0);
        let (adv, ret) = pitlane::ppo::compute_gae(&r, &v, &d, boot, gamma, lambda);
        let oracle = brute_force_gae(&r, &v, &d, boot, gamma, lambda);
        for t in 0..n {
            assert_eq!(ret[t], adv[t] + v[t]);
            worst = worst.max((adv[t] - oracle[t]).abs());
        }
    }
    worst
}

/// Q-learning targets written out longhand from the two Q tables.
pub fn hand_targets(rewards: &[f64], terminal: &[bool], target_q: &[Vec<f64>], online_q: &[Vec<f64>], gamma: f64, double: bool) -> Vec<f64> {
    let mut y = Vec::new();
    for i in 0..rewards.len() {
        if terminal[i] {
            y.push(rewards[i]);
            continue;
        }
        let next = if double {
            let mut best = 0;
            for a in 1..online_q[i].len() {
                if online_q[i][a] > online_q[i][best] {
                    best = a;
                }
            }
            target_q[i][best]
        } else {
            let mut m = target_q[i][0];
            for &q in &target_q[i][1..] {
                if q > m {
                    m = q;
                }
            }
            m
        };
        y.push(rewards[i] + gamma * next);
    }
    y
}

/// Checks learner targets against `hand_targets` on `count` random batches
/// per rule, with θ⁻ perturbed away from θ. Returns the number of mismatches.
pub fn target_oracle_mismatches(count: usize, seed: u64) -> usize {
    use pitlane::dqn::{DqnLearner, Transition};
    use pitlane::neural::{predict, NetworkSpec, OptimizerConfig, Tensor};

    let mut rng = SplitMix64::new(seed);
    let mut bad = 0;
    for double in [false, true] {
        for k in 0..count {
            let spec = NetworkSpec::feature_torso(4, 6, 5, 0);
            let gamma = rng.uniform(0.0, 0.999);
            let mut l = DqnLearner::new(spec.clone(), seed ^ k as u64, OptimizerConfig::sgd(0.1), gamma, 10, double).unwrap();
            for p in l.target.params_mut() {
                p.value.data_mut().iter_mut().for_each(|w| *w += rng.uniform(-0.2, 0.2));
            }
            let b = 1 + rng.index(16);
            let batch: Vec<Transition> = (0..b)
                .map(|_| Transition {
                    obs: (0..4).map(|_| rng.uniform(-1.0, 1.0) as f32).collect(),
                    action: rng.index(5),
                    reward: rng.uniform(-100.0, 10.0),
                    next_obs: (0..4).map(|_| rng.uniform(-1.0, 1.0) as f32).collect(),
                    terminal: rng.next_f64() < 0.3,
                })
                .collect();
            let got = l.compute_targets(&batch).unwrap();
            let rows = |params| -> Vec<Vec<f64>> {
                batch
                    .iter()
                    .map(|t| {
                        let x = Tensor::from_f32(vec![1, 4], &t.next_obs).unwrap();
                        predict(&spec, params, &x).unwrap().into_data()
                    })
                    .collect()
            };
            let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
            let terminal: Vec<bool> = batch.iter().map(|t| t.terminal).collect();
            let want = hand_targets(&rewards, &terminal, &rows(&l.target), &rows(&l.online), gamma, double);
            for i in 0..b {
                if got[i] != want[i] || (terminal[i] && got[i] != rewards[i]) {
                    bad += 1;
                }
            }
        }
    }
    bad
}

/// Empirical slot frequencies from `draws` samples, in batches of `batch`.
pub fn slot_frequencies(buf: &pitlane::dqn::ReplayBuffer, draws: usize, batch: usize, seed: u64) -> Vec<f64> {
    let mut rng = SplitMix64::new(seed);
    let mut counts = vec![0usize; buf.len()];
    for _ in 0..draws / batch {
        for i in buf.sample(batch, &mut rng).unwrap().indices {
            counts[i] += 1;
        }
    }
    counts.iter().map(|c| *c as f64 / draws as f64).collect()
}

/// True when every frequency lies within 3σ of its probability.
pub fn within_three_sigma(freq: &[f64], p: &[f64], draws: usize) -> bool {
    freq.iter()
        .zip(p)
        .all(|(f, p)| (f - p).abs() <= 3.0 * (p * (1.0 - p) / draws as f64).sqrt())
}

pub fn tiny_transition(tag: f32) -> pitlane::dqn::Transition {
    pitlane::dqn::Transition {
        obs: vec![tag],
        action: 0,
        reward: tag as f64,
        next_obs: vec![tag],
        terminal: false,
    }
}

/// Two fresh runs of `cfg` into separate directories; true when their
/// metrics.jsonl files are byte-identical.
pub fn metrics_reproducible(cfg: &pitlane::harness::RunConfig) -> bool {
    use pitlane::harness::{run_training, RunDir};
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let dir = RunDir::new(&tmp.path().join(name));
        run_training(cfg, &dir, None).unwrap();
        std::fs::read(dir.metrics()).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    !a.is_empty() && a == b
}

/// Trains `cfg` to the end, then restarts a second run from the first
/// checkpoint it wrote. True when the resumed run's metrics equal the
/// uninterrupted run's lines after that step byte for byte and the final
/// checkpoints are identical.
pub fn resume_is_bit_identical(cfg: &pitlane::harness::RunConfig) -> bool {
    use pitlane::harness::{read_metrics, run_training, RunDir};
    let tmp = tempfile::tempdir().unwrap();
    let full = RunDir::new(&tmp.path().join("full"));
    run_training(cfg, &full, None).unwrap();
    let first = std::fs::read_dir(full.checkpoints())
        .unwrap()
        .filter_map(|e| {
            let name = e.unwrap().file_name().into_string().unwrap();
            name.strip_prefix("step_")?.strip_suffix(".apx")?.parse::<u64>().ok()
        })
        .min()
        .unwrap();
    let resumed = RunDir::new(&tmp.path().join("resumed"));
    run_training(cfg, &resumed, Some(&full.checkpoint(first))).unwrap();

    let tail: Vec<String> = std::fs::read_to_string(full.metrics())
        .unwrap()
        .lines()
        .zip(read_metrics(&full.metrics()).unwrap())
        .filter(|(_, r)| r.step > first)
        .map(|(l, _)| l.to_string())
        .collect();
    let resumed_lines: Vec<String> = std::fs::read_to_string(resumed.metrics())
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    let last = |d: &RunDir| std::fs::read(d.latest_checkpoint().unwrap().unwrap()).unwrap();
    !tail.is_empty() && tail == resumed_lines && last(&full) == last(&resumed)
}

/// Scripted pure-pursuit agent driving through the observation wrapper.
pub fn pure_pursuit_scores(env_cfg: &pitlane::env::EnvConfig, episodes: usize, seed: u64) -> Vec<f64> {
    use pitlane::observe::{AgentEnv, ObsMode, ObserveConfig};
    let mut e = AgentEnv::new(env_cfg.clone(), ObserveConfig::default(), ObsMode::Features, seed).unwrap();
    (0..episodes)
        .map(|_| {
            e.reset(None).unwrap();
            loop {
                let c = pure_pursuit(e.env());
                if e.step(c).unwrap().1.done() {
                    break;
                }
            }
            e.episode_score()
        })
        .collect()
}
