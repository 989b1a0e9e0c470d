mod common;

use pitlane::env::*;
use pitlane::rng::SplitMix64;
use proptest::prelude::*;

/// Drives one episode, checking the per-frame invariants along the way.
/// Returns the summed step rewards and the last step.
fn drive(env: &mut RacingEnv, mut control: impl FnMut(&RacingEnv) -> Control) -> (f64, StepResult) {
    let mut sum = 0.0;
    let mut visited_before = vec![false; env.track().tile_count()];
    loop {
        let r = env.step(control(env)).unwrap();
        sum += r.reward;
        assert!(env.car().speed >= 0.0);
        let flags: Vec<bool> = env.track().tiles.iter().map(|t| t.visited).collect();
        for (was, now) in visited_before.iter().zip(&flags) {
            assert!(!was || *now, "a visited flag was cleared");
        }
        assert_eq!(flags.iter().filter(|v| **v).count(), env.tiles_visited());
        visited_before = flags;
        let ends = [r.cause == Some(EndCause::Finished), r.cause == Some(EndCause::Died), r.truncated];
        if r.done() {
            assert_eq!(ends.iter().filter(|e| **e).count(), 1, "exactly one end cause");
            return (sum, r);
        }
        assert!(ends.iter().all(|e| !e));
    }
}

#[test]
fn pure_pursuit_laps_fixed_track_for_exact_lap_score() {
    let mut env = RacingEnv::new(EnvConfig::default(), 7).unwrap();
    let (sum, last) = drive(&mut env, common::pure_pursuit);
    assert_eq!(last.cause, Some(EndCause::Finished));
    assert_eq!(env.tiles_visited(), env.track().tile_count());
    let f = env.frame_index();
    assert!(f < env.config().frame_budget);
    let lap = 1000.0 - 0.1 * f as f64;
    assert!((sum - lap).abs() < 1e-9, "{sum} vs {lap}");
    assert_eq!(env.oracle_total(), episode_score_oracle(f, env.track().tile_count(), env.track().tile_count(), false));
    assert!((env.oracle_total() - lap).abs() < 1e-9);
}

#[test]
fn step_after_end_is_an_error() {
    let mut env = RacingEnv::new(EnvConfig { frame_budget: 3, ..Default::default() }, 1).unwrap();
    drive(&mut env, |_| Control::default());
    assert!(matches!(env.step(Control::default()), Err(pitlane::Error::EpisodeFinished)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rewards_reconcile_with_oracle(seed in any::<u64>(), noise in 0.0f64..1.0, scripted in any::<bool>()) {
        let mut env = RacingEnv::new(EnvConfig::default(), seed).unwrap();
        let mut rng = SplitMix64::derive(seed, 9);
        let (sum, _) = drive(&mut env, |e| {
            if scripted && rng.next_f64() >= noise {
                common::pure_pursuit(e)
            } else {
                common::random_control(&mut rng)
            }
        });
        let oracle = episode_score_oracle(env.frame_index(), env.tiles_visited(), env.track().tile_count(), env.died());
        prop_assert!((sum - oracle).abs() < 1e-9, "sum {} oracle {}", sum, oracle);
    }

    #[test]
    fn identical_inputs_give_identical_trajectories(seed in any::<u64>(), control_seed in any::<u64>()) {
        let run = || {
            let mut env = RacingEnv::new(EnvConfig::default(), seed).unwrap();
            let mut rng = SplitMix64::new(control_seed);
            let mut trace = Vec::new();
            loop {
                let r = env.step(common::random_control(&mut rng)).unwrap();
                let c = env.car();
                trace.push([c.position.x, c.position.y, c.heading, c.speed, r.reward].map(f64::to_bits));
                if r.done() {
                    break;
                }
            }
            trace
        };
        prop_assert_eq!(run(), run());
    }
}
