mod common;

use pitlane::env::{Control, EnvConfig};
use pitlane::harness::*;
use pitlane::observe::{ObsMode, ObserveConfig};
use pitlane::rng::SplitMix64;

fn short(algo: Algorithm) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.algorithm = algo;
    cfg.total_steps = 4000;
    cfg.eval_period = 2000;
    cfg.eval_episodes = 3;
    cfg.dqn.warmup = 500;
    cfg.ppo.horizon = 128;
    cfg.ppo.minibatch = 128;
    cfg
}

#[test]
fn short_runs_are_reproducible() {
    for algo in [Algorithm::Dqn, Algorithm::Ppo] {
        assert!(common::metrics_reproducible(&short(algo)), "{algo:?}");
    }
}

#[test]
fn resume_matches_uninterrupted_run() {
    for algo in [Algorithm::Dqn, Algorithm::Ppo] {
        assert!(common::resume_is_bit_identical(&short(algo)), "{algo:?}");
    }
}

#[test]
fn run_directory_layout_and_metric_stream() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = short(Algorithm::Dqn);
    cfg.total_steps = 10_000;
    cfg.eval_period = 10_000;
    let dir = RunDir::new(tmp.path());
    let last = run_training(&cfg, &dir, None).unwrap().unwrap();
    assert_eq!(RunConfig::load(&dir.config()).unwrap(), cfg);
    assert!(dir.checkpoint(10_000).exists());
    let summary: EvalSummary = serde_json::from_str(&std::fs::read_to_string(dir.eval_summary()).unwrap()).unwrap();
    assert_eq!(summary, last);

    let records = read_metrics(&dir.metrics()).unwrap();
    assert!(records.windows(2).all(|w| w[0].step <= w[1].step));
    assert!(records.iter().all(|r| r.value.is_finite() && r.seed == cfg.seed));
    let evals: Vec<&MetricRecord> = records.iter().filter(|r| r.kind == MetricKind::Eval).collect();
    assert!(!evals.is_empty());
    assert!(evals.iter().all(|r| r.step == 10_000));
    assert!(evals.iter().any(|r| r.name == "mean_return" && r.value == last.mean));
}

#[test]
fn digest_mismatch_is_rejected() {
    let cfg = short(Algorithm::Ppo);
    let t = new_trainer(&cfg).unwrap();
    let ckpt = t.checkpoint().unwrap();
    let mut other = cfg.clone();
    other.ppo.entropy_coef = 0.02;
    assert!(matches!(restore_trainer(&other, &ckpt), Err(pitlane::Error::DigestMismatch { .. })));
    assert!(restore_trainer(&cfg, &ckpt).is_ok());
}

#[test]
fn checkpoint_survives_disk_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    for algo in [Algorithm::Dqn, Algorithm::Ppo] {
        let cfg = short(algo);
        let mut t = new_trainer(&cfg).unwrap();
        let mut sink = MemorySink::default();
        while t.steps() < 700 {
            t.advance(&mut sink).unwrap();
        }
        let path = tmp.path().join(format!("{algo:?}.apx"));
        t.checkpoint().unwrap().save(&path).unwrap();
        let back = restore_trainer(&cfg, &Checkpoint::load(&path).unwrap()).unwrap();
        assert_eq!((back.steps(), back.frames()), (t.steps(), t.frames()));
        assert_eq!(back.checkpoint().unwrap().to_bytes(), t.checkpoint().unwrap().to_bytes());
    }
}

#[test]
fn evaluation_leaves_training_state_alone() {
    for algo in [Algorithm::Dqn, Algorithm::Ppo] {
        let cfg = short(algo);
        let mut plain = new_trainer(&cfg).unwrap();
        let mut probed = new_trainer(&cfg).unwrap();
        let mut sink = MemorySink::default();
        while plain.steps() < 1500 {
            plain.advance(&mut sink).unwrap();
            probed.advance(&mut sink).unwrap();
        }
        let a = evaluate_trainer(probed.as_ref(), 2, 5).unwrap();
        let b = evaluate_trainer(probed.as_ref(), 2, 5).unwrap();
        assert_eq!(a, b);
        while plain.steps() < 2500 {
            plain.advance(&mut sink).unwrap();
            probed.advance(&mut sink).unwrap();
        }
        assert_eq!(plain.checkpoint().unwrap().to_bytes(), probed.checkpoint().unwrap().to_bytes());
    }
}

#[test]
fn random_agent_scores_below_zero() {
    let mut rng = SplitMix64::new(12);
    let mut agent = |_: &[f32]| Ok(common::random_control(&mut rng));
    let s = evaluate_agent(&mut agent, &EnvConfig::default(), &ObserveConfig::default(), ObsMode::Features, 100, 3).unwrap();
    assert_eq!(s.episodes, 100);
    assert!(s.mean < 0.0, "{}", s.mean);
    assert_eq!(s.solved, Some(false));
}

#[test]
fn pure_pursuit_agent_scores_above_zero() {
    let scores = common::pure_pursuit_scores(&EnvConfig::default(), 20, 3);
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    assert!(mean > 0.0, "{mean}");
    assert!(scores.iter().all(|s| s.is_finite()));
}

#[test]
fn idle_agent_summary_is_deterministic() {
    let mut idle = |_: &[f32]| Ok(Control::default());
    let run = |agent: &mut dyn Agent| {
        evaluate_agent(agent, &EnvConfig::default(), &ObserveConfig::default(), ObsMode::Features, 3, 9).unwrap()
    };
    let a = run(&mut idle);
    let b = run(&mut idle);
    assert_eq!(a, b);
    // Idling scores the intro plus the rest of the budget at −0.1 per frame.
    assert!(a.scores.iter().all(|s| (s + 100.0).abs() < 1e-9), "{:?}", a.scores);
}
