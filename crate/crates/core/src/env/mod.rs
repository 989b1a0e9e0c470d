//! Deterministic top-down racing environment.
//!
//! Reward contract per frame: `-0.1`, plus `1000 / N` for every tile entered
//! for the first time, plus `-100` if the car center leaves the playfield
//! (which also ends the episode). Visiting all `N` tiles ends the episode;
//! hitting the frame budget truncates it.
//!
//! A tile counts as visited when the car center enters it. The tile the car
//! starts on is only credited when the car comes back to it, so a full lap
//! ends exactly on the return to the start line.

mod dynamics;
mod track;

pub use dynamics::{step_dynamics, CarState, Physics};
pub use track::{generate_track, Tile, Track, TrackParams, MIN_TILES};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const FRAME_PENALTY: f64 = 0.1;
pub const DEATH_PENALTY: f64 = 100.0;
pub const LAP_REWARD: f64 = 1000.0;
pub const DISCRETE_ACTIONS: usize = 5;

/// Tiles skipped in a single frame are still credited when the jump is at most this long.
const MAX_TILE_JUMP: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub steer: f64,
    pub gas: f64,
    pub brake: f64,
}

impl Control {
    pub const fn new(steer: f64, gas: f64, brake: f64) -> Self {
        Self { steer, gas, brake }
    }

    /// Out-of-range (and NaN) inputs are clamped, never rejected.
    pub fn clamped(self) -> Self {
        let c = |v: f64, lo: f64, hi: f64| if v.is_nan() { 0.0 } else { v.clamp(lo, hi) };
        Self {
            steer: c(self.steer, -1.0, 1.0),
            gas: c(self.gas, 0.0, 1.0),
            brake: c(self.brake, 0.0, 1.0),
        }
    }
}

/// 0 = nothing, 1 = full left, 2 = full right, 3 = full gas, 4 = full brake.
pub fn discrete_to_control(action: usize) -> Result<Control> {
    Ok(match action {
        0 => Control::new(0.0, 0.0, 0.0),
        1 => Control::new(-1.0, 0.0, 0.0),
        2 => Control::new(1.0, 0.0, 0.0),
        3 => Control::new(0.0, 1.0, 0.0),
        4 => Control::new(0.0, 0.0, 1.0),
        other => return Err(Error::InvalidAction(other)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndCause {
    Finished,
    Died,
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub frame_index: u64,
    pub new_tiles: u32,
    pub cause: Option<EndCause>,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Closed-form episode score: `-0.1 F + (1000 / N) k - 100 [died]`.
pub fn episode_score_oracle(frames: u64, tiles_visited: usize, tile_count: usize, died: bool) -> f64 {
    -FRAME_PENALTY * frames as f64 + LAP_REWARD / tile_count as f64 * tiles_visited as f64
        - if died { DEATH_PENALTY } else { 0.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub frame_budget: u64,
    pub physics: Physics,
    pub track: TrackParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            frame_budget: 1000,
            physics: Physics::default(),
            track: TrackParams::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RacingEnv {
    config: EnvConfig,
    base_seed: u64,
    episodes: u64,
    track: Track,
    car: CarState,
    current_tile: Option<usize>,
    frame: u64,
    total: f64,
    visited: usize,
    died: bool,
    done: bool,
}

impl RacingEnv {
    /// Builds the environment and resets it onto the first track of the seed's sequence.
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self> {
        config.track.validate()?;
        if config.frame_budget == 0 {
            return Err(Error::InvalidParams("frame_budget must be >= 1".into()));
        }
        let track = generate_track(SplitMix64::derive(seed, 0).next_u64(), &config.track)?;
        let mut env = Self::with_track(config, track);
        env.base_seed = seed;
        env.episodes = 1;
        Ok(env)
    }

    /// Environment over a fixed, caller-supplied track. Further resets still regenerate.
    pub fn with_track(config: EnvConfig, mut track: Track) -> Self {
        for t in &mut track.tiles {
            t.visited = false;
        }
        let mut env = Self {
            config,
            base_seed: track.seed,
            episodes: 0,
            car: CarState::at_rest(Default::default(), 0.0),
            track,
            current_tile: Some(0),
            frame: 0,
            total: 0.0,
            visited: 0,
            died: false,
            done: false,
        };
        env.place_at_start();
        env
    }

    fn place_at_start(&mut self) {
        let dir = self.track.tile_direction(0);
        self.car = CarState::at_rest(self.track.tile_center(0), dir.y.atan2(dir.x));
        self.current_tile = Some(0);
        self.frame = 0;
        self.total = 0.0;
        self.visited = 0;
        self.died = false;
        self.done = false;
    }

    /// Starts a new episode. Without an explicit seed the track seed comes from
    /// the environment's own seed and episode counter.
    pub fn reset(&mut self, seed: Option<u64>) -> Result<()> {
        let track_seed = match seed {
            Some(s) => s,
            None => SplitMix64::derive(self.base_seed, self.episodes).next_u64(),
        };
        self.episodes += 1;
        self.track = generate_track(track_seed, &self.config.track)?;
        self.place_at_start();
        Ok(())
    }

    /// Restarts the current track from the start line.
    pub fn restart(&mut self) {
        for t in &mut self.track.tiles {
            t.visited = false;
        }
        self.place_at_start();
    }

    pub fn step(&mut self, control: Control) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let on_track = self.current_tile.is_some();
        self.car = step_dynamics(&self.car, control, &self.config.physics, on_track);
        self.frame += 1;

        let n = self.track.tile_count();
        let now = self.track.locate(self.car.position, self.current_tile);
        let mut new_tiles = 0u32;
        if let Some(t) = now {
            if now != self.current_tile {
                let (from, to) = match self.current_tile {
                    Some(prev) => {
                        let fwd = (t + n - prev) % n;
                        if fwd <= MAX_TILE_JUMP {
                            (prev + 1, prev + fwd)
                        } else if n - fwd <= MAX_TILE_JUMP {
                            (t, t + (n - fwd) - 1)
                        } else {
                            (t, t)
                        }
                    }
                    None => (t, t),
                };
                for i in from..=to {
                    let tile = &mut self.track.tiles[i % n];
                    if !tile.visited {
                        tile.visited = true;
                        self.visited += 1;
                        new_tiles += 1;
                    }
                }
            }
        }
        self.current_tile = now;

        let mut reward = -FRAME_PENALTY + LAP_REWARD / n as f64 * new_tiles as f64;
        let mut cause = None;
        if !self.track.playfield.contains(self.car.position) {
            reward -= DEATH_PENALTY;
            self.died = true;
            cause = Some(EndCause::Died);
        } else if self.visited == n {
            cause = Some(EndCause::Finished);
        } else if self.frame >= self.config.frame_budget {
            cause = Some(EndCause::Truncated);
        }
        self.total += reward;
        self.done = cause.is_some();
        Ok(StepResult {
            reward,
            terminated: matches!(cause, Some(EndCause::Finished | EndCause::Died)),
            truncated: cause == Some(EndCause::Truncated),
            frame_index: self.frame,
            new_tiles,
            cause,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn track(&self) -> &Track {
        &self.track
    }

    pub fn car(&self) -> &CarState {
        &self.car
    }

    /// Overrides the car state; test fixtures use this to stage situations.
    pub fn set_car(&mut self, car: CarState) {
        self.car = car;
        self.current_tile = self.track.locate(car.position, self.current_tile);
    }

    pub fn current_tile(&self) -> Option<usize> {
        self.current_tile
    }

    pub fn frame_index(&self) -> u64 {
        self.frame
    }

    pub fn episode_total(&self) -> f64 {
        self.total
    }

    pub fn tiles_visited(&self) -> usize {
        self.visited
    }

    pub fn died(&self) -> bool {
        self.died
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Episode score recomputed from counts, for reconciliation with the summed rewards.
    pub fn oracle_total(&self) -> f64 {
        episode_score_oracle(self.frame, self.visited, self.track.tile_count(), self.died)
    }
}
