//! Play-server wire protocol, the tick-driven session behind it, recorded
//! human episodes and the leaderboard file.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eval::Agent;
use crate::env::{Control, EndCause, EnvConfig, RacingEnv, Track};
use crate::error::{Error, Result};
use crate::observe::{AgentEnv, ObsMode, ObserveConfig};
use crate::rng::SplitMix64;

pub const TICK_HZ: u32 = 50;
/// Reference line for the human average; shown, never asserted.
pub const HUMAN_REFERENCE: f64 = 800.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlayMode {
    Human,
    Agent,
    Spectate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Hello {
        mode: PlayMode,
    },
    Input {
        steer: f64,
        gas: f64,
        brake: f64,
        seq: u64,
    },
    Reset {
        #[serde(default)]
        seed: Option<u64>,
    },
}

impl ClientMessage {
    /// Parses one text frame; non-finite inputs are rejected.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let msg: ClientMessage = serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))?;
        if let ClientMessage::Input { steer, gas, brake, .. } = msg {
            if ![steer, gas, brake].iter().all(|v| v.is_finite()) {
                return Err("input values must be finite".into());
            }
        }
        Ok(msg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackGeometry {
    pub centerline: Vec<[f64; 2]>,
    pub tiles: Vec<[[f64; 2]; 4]>,
    pub width: f64,
}

impl From<&Track> for TrackGeometry {
    fn from(t: &Track) -> Self {
        Self {
            centerline: t.centerline.iter().map(|&p| p.into()).collect(),
            tiles: t.tiles.iter().map(|tile| tile.corners.map(|c| c.into())).collect(),
            width: t.width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarView {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Config {
        track: TrackGeometry,
        tick_hz: u32,
    },
    State {
        frame: u64,
        car: CarView,
        reward: f64,
        total: f64,
        tiles_visited: u32,
        tile_count: u32,
        done: bool,
    },
    EpisodeEnd {
        total: f64,
        frames: u64,
        cause: EndCause,
    },
    Error {
        message: String,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

/// A finished human episode: enough to replay it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecording {
    pub track_seed: u64,
    pub inputs: Vec<Control>,
    pub total: f64,
    pub frames: u64,
    pub cause: EndCause,
}

enum Sim {
    /// One env frame per tick, no frame skip, no intro skip.
    Human { env: RacingEnv, latched: Control, inputs: Vec<Control> },
    /// One agent decision per tick through the training-time pipeline.
    Agent { env: AgentEnv, obs: Vec<f32>, agent: Box<dyn Agent + Send> },
}

/// Server-side episode state, advanced once per tick. Networking lives
/// elsewhere. Reported totals come from the closed-form episode score.
pub struct PlaySession {
    sim: Sim,
    seeds: SplitMix64,
    pending_reset: Option<Option<u64>>,
    episode_over: bool,
    finished: Vec<EpisodeRecording>,
}

impl PlaySession {
    pub fn human(env_cfg: EnvConfig, seed: u64) -> Result<Self> {
        let env = RacingEnv::new(env_cfg, seed)?;
        Ok(Self {
            sim: Sim::Human {
                env,
                latched: Control::default(),
                inputs: Vec::new(),
            },
            seeds: SplitMix64::derive(seed, 0x9a7),
            pending_reset: None,
            episode_over: false,
            finished: Vec::new(),
        })
    }

    pub fn agent(
        env_cfg: EnvConfig,
        observe: ObserveConfig,
        mode: ObsMode,
        agent: Box<dyn Agent + Send>,
        seed: u64,
    ) -> Result<Self> {
        let mut env = AgentEnv::new(env_cfg, observe, mode, seed)?;
        let obs = env.reset(None)?;
        Ok(Self {
            sim: Sim::Agent { env, obs, agent },
            seeds: SplitMix64::derive(seed, 0x9a7),
            pending_reset: None,
            episode_over: false,
            finished: Vec::new(),
        })
    }

    pub fn is_human(&self) -> bool {
        matches!(self.sim, Sim::Human { .. })
    }

    pub fn track(&self) -> &Track {
        match &self.sim {
            Sim::Human { env, .. } => env.track(),
            Sim::Agent { env, .. } => env.env().track(),
        }
    }

    fn racing(&self) -> &RacingEnv {
        match &self.sim {
            Sim::Human { env, .. } => env,
            Sim::Agent { env, .. } => env.env(),
        }
    }

    pub fn config_message(&self) -> ServerMessage {
        ServerMessage::Config {
            track: self.track().into(),
            tick_hz: TICK_HZ,
        }
    }

    pub fn state_message(&self, reward: f64) -> ServerMessage {
        let env = self.racing();
        let car = env.car();
        ServerMessage::State {
            frame: env.frame_index(),
            car: CarView {
                x: car.position.x,
                y: car.position.y,
                heading: car.heading,
                speed: car.speed,
            },
            reward,
            total: env.oracle_total(),
            tiles_visited: env.tiles_visited() as u32,
            tile_count: env.track().tile_count() as u32,
            done: env.is_done(),
        }
    }

    /// Latest input wins; ignored outside human mode.
    pub fn latch(&mut self, control: Control) {
        if let Sim::Human { latched, .. } = &mut self.sim {
            *latched = control.clamped();
        }
    }

    pub fn request_reset(&mut self, seed: Option<u64>) {
        self.pending_reset = Some(seed);
    }

    /// Human episodes completed since the last call.
    pub fn take_finished(&mut self) -> Vec<EpisodeRecording> {
        std::mem::take(&mut self.finished)
    }

    fn reset(&mut self, seed: Option<u64>) -> Result<()> {
        let seed = seed.unwrap_or_else(|| self.seeds.next_u64());
        match &mut self.sim {
            Sim::Human { env, latched, inputs } => {
                env.reset(Some(seed))?;
                *latched = Control::default();
                inputs.clear();
            }
            Sim::Agent { env, obs, .. } => *obs = env.reset(Some(seed))?,
        }
        self.episode_over = false;
        Ok(())
    }

    /// Advances one tick and returns the messages to broadcast. A finished
    /// human episode waits for a reset; agent episodes restart on their own.
    pub fn tick(&mut self) -> Result<Vec<ServerMessage>> {
        let mut out = Vec::new();
        let reset = match self.pending_reset.take() {
            Some(seed) => Some(seed),
            None if self.episode_over && !self.is_human() => Some(None),
            None => None,
        };
        if let Some(seed) = reset {
            self.reset(seed)?;
            out.push(self.config_message());
            out.push(self.state_message(0.0));
            return Ok(out);
        }
        if self.episode_over {
            return Ok(out);
        }
        let (reward, done, cause) = match &mut self.sim {
            Sim::Human { env, latched, inputs } => {
                let s = env.step(*latched)?;
                inputs.push(*latched);
                (s.reward, s.done(), s.cause)
            }
            Sim::Agent { env, obs, agent } => {
                let control = agent.act(obs)?;
                let (next, s) = env.step(control)?;
                *obs = next;
                (s.reward, s.done(), s.cause)
            }
        };
        out.push(self.state_message(reward));
        if done {
            self.episode_over = true;
            let env = self.racing();
            let (total, frames) = (env.oracle_total(), env.frame_index());
            let cause = cause.unwrap_or(EndCause::Truncated);
            out.push(ServerMessage::EpisodeEnd { total, frames, cause });
            if let Sim::Human { env, inputs, .. } = &mut self.sim {
                self.finished.push(EpisodeRecording {
                    track_seed: env.track().seed,
                    inputs: std::mem::take(inputs),
                    total,
                    frames,
                    cause,
                });
            }
        }
        Ok(out)
    }
}

/// Replays a recorded human episode frame by frame, without skips.
pub fn replay_recording(env_cfg: &EnvConfig, rec: &EpisodeRecording) -> Result<EpisodeRecording> {
    let mut env = RacingEnv::new(env_cfg.clone(), rec.track_seed)?;
    env.reset(Some(rec.track_seed))?;
    let mut cause = None;
    for &c in &rec.inputs {
        let s = env.step(c)?;
        if s.done() {
            cause = s.cause;
            break;
        }
    }
    Ok(EpisodeRecording {
        track_seed: rec.track_seed,
        inputs: rec.inputs[..env.frame_index() as usize].to_vec(),
        total: env.oracle_total(),
        frames: env.frame_index(),
        cause: cause.unwrap_or(EndCause::Truncated),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Human,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub kind: EntryKind,
    pub label: String,
    pub score: f64,
    pub frames: u64,
    pub track_seed: Option<u64>,
}

/// Append-only JSON-lines file of scores.
pub struct Leaderboard;

impl Leaderboard {
    pub fn append(path: &Path, entries: &[LeaderboardEntry]) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        for e in entries {
            let line = serde_json::to_string(e).map_err(|e| Error::Config(e.to_string()))?;
            writeln!(f, "{line}")?;
        }
        f.flush()?;
        Ok(())
    }

    /// Missing file reads as empty.
    pub fn read(path: &Path) -> Result<Vec<LeaderboardEntry>> {
        if !path.exists() {
            return Ok(Vec::new());
        }
        std::fs::read_to_string(path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::Config(format!("bad leaderboard line: {e}"))))
            .collect()
    }
}

/// Result of replaying a set of recordings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanBench {
    pub label: String,
    pub scores: Vec<f64>,
    pub mean: f64,
    pub reference: f64,
}

/// Replays recordings headlessly, appends each score to the leaderboard and
/// returns the summary. Recorded totals that disagree with the replay are an error.
pub fn human_bench(
    env_cfg: &EnvConfig,
    recordings: &[EpisodeRecording],
    label: &str,
    leaderboard: Option<&Path>,
) -> Result<HumanBench> {
    let mut scores = Vec::with_capacity(recordings.len());
    let mut entries = Vec::new();
    for (i, rec) in recordings.iter().enumerate() {
        let replay = replay_recording(env_cfg, rec)?;
        if replay.total != rec.total || replay.frames != rec.frames {
            return Err(Error::Config(format!(
                "recording {i} does not replay: recorded {} over {} frames, replayed {} over {}",
                rec.total, rec.frames, replay.total, replay.frames
            )));
        }
        scores.push(replay.total);
        entries.push(LeaderboardEntry {
            kind: EntryKind::Human,
            label: label.into(),
            score: replay.total,
            frames: replay.frames,
            track_seed: Some(rec.track_seed),
        });
    }
    if let Some(path) = leaderboard {
        Leaderboard::append(path, &entries)?;
    }
    let mean = if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    };
    Ok(HumanBench {
        label: label.into(),
        scores,
        mean,
        reference: HUMAN_REFERENCE,
    })
}

pub fn read_recordings(path: &Path) -> Result<Vec<EpisodeRecording>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Config(format!("bad recording line: {e}"))))
        .collect()
}

pub fn append_recordings(path: &Path, recs: &[EpisodeRecording]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    for r in recs {
        let line = serde_json::to_string(r).map_err(|e| Error::Config(e.to_string()))?;
        writeln!(f, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_messages_parse() {
        assert_eq!(
            ClientMessage::parse(r#"{"type":"hello","mode":"human"}"#).unwrap(),
            ClientMessage::Hello { mode: PlayMode::Human }
        );
        assert_eq!(
            ClientMessage::parse(r#"{"type":"reset"}"#).unwrap(),
            ClientMessage::Reset { seed: None }
        );
        assert!(ClientMessage::parse(r#"{"type":"input","steer":0,"gas":1,"brake":0,"seq":3}"#).is_ok());
        assert!(ClientMessage::parse(r#"{"type":"warp"}"#).is_err());
        assert!(ClientMessage::parse("not json").is_err());
        assert!(ClientMessage::parse(r#"{"type":"hello","mode":"pilot"}"#).is_err());
    }

    #[test]
    fn server_messages_have_wire_shape() {
        let v: serde_json::Value = serde_json::from_str(
            &ServerMessage::EpisodeEnd {
                total: 12.5,
                frames: 40,
                cause: EndCause::Died,
            }
            .to_json(),
        )
        .unwrap();
        assert_eq!(v["type"], "episode_end");
        assert_eq!(v["cause"], "died");
        assert_eq!(v["frames"], 40);
    }

    #[test]
    fn human_episode_totals_reconcile_and_replay() {
        let cfg = EnvConfig {
            frame_budget: 300,
            ..EnvConfig::default()
        };
        let mut s = PlaySession::human(cfg.clone(), 4).unwrap();
        s.request_reset(None);
        s.tick().unwrap();
        let mut last_speed = 0.0;
        let mut end = None;
        for _ in 0..400 {
            s.latch(Control::new(0.0, 1.0, 0.0));
            for m in s.tick().unwrap() {
                match m {
                    ServerMessage::State { car, frame, .. } if frame <= 20 => {
                        assert!(car.speed >= last_speed);
                        last_speed = car.speed;
                    }
                    ServerMessage::EpisodeEnd { total, frames, .. } => end = Some((total, frames)),
                    _ => {}
                }
            }
        }
        let (total, frames) = end.unwrap();
        assert!(last_speed > 0.0);
        let env = s.racing();
        assert_eq!(total, env.oracle_total());
        assert_eq!(frames, env.frame_index());
        let recs = s.take_finished();
        assert_eq!(recs.len(), 1);
        let replay = replay_recording(&cfg, &recs[0]).unwrap();
        assert_eq!(replay, recs[0]);
        // Waits for a reset once over.
        assert!(s.tick().unwrap().is_empty());
    }
}
