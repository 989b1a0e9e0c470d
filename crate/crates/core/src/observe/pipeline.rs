//! Agent-facing wrapper: intro skip on reset, action repeat, and the
//! observation pipeline (pixel stack or feature vector).

use serde::{Deserialize, Serialize};

use super::features::{observe_features, FeatureConfig};
use super::preprocess::{crop, resize_84, to_grayscale, Crop, FrameStack, PROCESSED_SIZE, STACK_DEPTH};
use super::raster::{rasterize, RawFrame};
use crate::env::{Control, EndCause, EnvConfig, RacingEnv};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObsMode {
    Pixel,
    Features,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserveConfig {
    pub frame_skip: u32,
    /// No-op frames run after every reset; 0 disables.
    pub skip_intro: u32,
    /// Whether the intro frames' penalties count toward reported episode scores.
    pub count_intro_reward: bool,
    pub crop: Crop,
    pub features: FeatureConfig,
}

impl Default for ObserveConfig {
    fn default() -> Self {
        Self {
            frame_skip: 4,
            skip_intro: 50,
            count_intro_reward: true,
            crop: Crop::default(),
            features: FeatureConfig::default(),
        }
    }
}

/// Reward and flags for one agent decision (up to `frame_skip` frames).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub frames: u32,
    pub cause: Option<EndCause>,
}

impl AgentStep {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

const INTRO_RETRIES: u32 = 8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentEnv {
    env: RacingEnv,
    mode: ObsMode,
    config: ObserveConfig,
    stack: Option<FrameStack>,
    intro_reward: f64,
}

impl AgentEnv {
    pub fn new(env_config: EnvConfig, config: ObserveConfig, mode: ObsMode, seed: u64) -> Result<Self> {
        if config.frame_skip == 0 {
            return Err(Error::InvalidParams("frame_skip must be >= 1".into()));
        }
        if config.skip_intro as u64 >= env_config.frame_budget {
            return Err(Error::InvalidParams("skip_intro must be shorter than the frame budget".into()));
        }
        let c = config.crop;
        if c.width == 0 || c.height == 0 || c.x + c.width > 96 || c.y + c.height > 96 {
            return Err(Error::InvalidParams("crop must lie within the 96x96 frame".into()));
        }
        let env = RacingEnv::new(env_config, seed)?;
        Ok(Self {
            env,
            mode,
            config,
            stack: None,
            intro_reward: 0.0,
        })
    }

    /// Wraps an existing environment as-is (no reset, no intro skip).
    pub fn from_env(env: RacingEnv, config: ObserveConfig, mode: ObsMode) -> Self {
        Self {
            env,
            mode,
            config,
            stack: None,
            intro_reward: 0.0,
        }
    }

    pub fn mode(&self) -> ObsMode {
        self.mode
    }

    pub fn config(&self) -> &ObserveConfig {
        &self.config
    }

    pub fn env(&self) -> &RacingEnv {
        &self.env
    }

    pub fn env_mut(&mut self) -> &mut RacingEnv {
        &mut self.env
    }

    pub fn obs_shape(&self) -> Vec<usize> {
        match self.mode {
            ObsMode::Pixel => vec![STACK_DEPTH, PROCESSED_SIZE, PROCESSED_SIZE],
            ObsMode::Features => vec![self.config.features.len()],
        }
    }

    /// New track, intro skip, fresh observation.
    pub fn reset(&mut self, seed: Option<u64>) -> Result<Vec<f32>> {
        self.env.reset(seed)?;
        self.skip_intro()?;
        self.stack = None;
        Ok(self.observe())
    }

    /// Runs the configured number of no-op frames. Their penalties land in the
    /// environment's episode total but belong to no agent step. A death during
    /// the skip regenerates the track and starts over.
    pub fn skip_intro(&mut self) -> Result<()> {
        for _ in 0..INTRO_RETRIES {
            let mut died = false;
            let mut reward = 0.0;
            for _ in 0..self.config.skip_intro {
                let r = self.env.step(Control::default())?;
                reward += r.reward;
                if r.done() {
                    died = true;
                    break;
                }
            }
            if !died {
                self.intro_reward = reward;
                return Ok(());
            }
            self.env.reset(None)?;
        }
        Err(Error::InvalidParams("episode keeps ending during the intro skip".into()))
    }

    /// Repeats `control` for `frame_skip` frames (fewer if the episode ends),
    /// summing rewards. Does not build an observation.
    pub fn frame_skip_step(&mut self, control: Control) -> Result<AgentStep> {
        let mut out = AgentStep {
            reward: 0.0,
            terminated: false,
            truncated: false,
            frames: 0,
            cause: None,
        };
        for _ in 0..self.config.frame_skip {
            let r = self.env.step(control)?;
            out.reward += r.reward;
            out.frames += 1;
            out.terminated |= r.terminated;
            out.truncated |= r.truncated;
            if r.done() {
                out.cause = r.cause;
                break;
            }
        }
        Ok(out)
    }

    pub fn step(&mut self, control: Control) -> Result<(Vec<f32>, AgentStep)> {
        let s = self.frame_skip_step(control)?;
        Ok((self.observe(), s))
    }

    pub fn render(&self) -> RawFrame {
        rasterize(self.env.track(), self.env.car())
    }

    pub fn processed_plane(&self) -> super::preprocess::Plane<f32> {
        resize_84(&crop(&to_grayscale(&self.render()), self.config.crop))
    }

    /// Current observation; in pixel mode this pushes the current frame onto the stack.
    fn observe(&mut self) -> Vec<f32> {
        match self.mode {
            ObsMode::Features => observe_features(
                self.env.track(),
                self.env.car(),
                &self.env.config().physics,
                &self.config.features,
            ),
            ObsMode::Pixel => {
                let plane = self.processed_plane();
                match &mut self.stack {
                    Some(s) => s.push(plane),
                    None => self.stack = Some(FrameStack::new(plane)),
                }
                self.stack.as_ref().unwrap().to_vec()
            }
        }
    }

    pub fn stack(&self) -> Option<&FrameStack> {
        self.stack.as_ref()
    }

    pub fn intro_reward(&self) -> f64 {
        self.intro_reward
    }

    /// Episode score as reported by evaluation; includes the intro penalties
    /// unless configured otherwise.
    pub fn episode_score(&self) -> f64 {
        if self.config.count_intro_reward {
            self.env.episode_total()
        } else {
            self.env.episode_total() - self.intro_reward
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{discrete_to_control, CarState, Track, TrackParams};
    use crate::geom::Vec2;

    fn agent(mode: ObsMode) -> AgentEnv {
        AgentEnv::new(EnvConfig::default(), ObserveConfig::default(), mode, 3).unwrap()
    }

    #[test]
    fn intro_skip_consumes_fifty_frames() {
        let mut a = agent(ObsMode::Features);
        a.reset(Some(9)).unwrap();
        assert_eq!(a.env().frame_index(), 50);
        assert!((a.env().episode_total() + 5.0).abs() < 1e-9);
        assert!((a.intro_reward() + 5.0).abs() < 1e-9);
    }

    #[test]
    fn disabled_intro_leaves_frame_zero() {
        let cfg = ObserveConfig {
            skip_intro: 0,
            ..Default::default()
        };
        let mut a = AgentEnv::new(EnvConfig::default(), cfg, ObsMode::Features, 3).unwrap();
        a.reset(Some(9)).unwrap();
        assert_eq!(a.env().frame_index(), 0);
    }

    #[test]
    fn idle_skip_step_costs_four_penalties() {
        let mut a = agent(ObsMode::Features);
        a.reset(None).unwrap();
        let s = a.frame_skip_step(discrete_to_control(0).unwrap()).unwrap();
        assert_eq!(s.frames, 4);
        assert!((s.reward + 0.4).abs() < 1e-12);
    }

    #[test]
    fn pixel_observation_shape_and_range() {
        let mut a = agent(ObsMode::Pixel);
        let obs = a.reset(None).unwrap();
        assert_eq!(obs.len(), 4 * 84 * 84);
        let planes = a.stack().unwrap().planes();
        assert!(planes.iter().all(|p| *p == planes[0]));
        let (obs, _) = a.step(discrete_to_control(3).unwrap()).unwrap();
        assert_eq!(a.stack().unwrap().shape(), [4, 84, 84]);
        assert!(obs.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    fn stadium_agent() -> AgentEnv {
        let track = Track::stadium(250, 40.0, &TrackParams::default()).unwrap();
        let env = RacingEnv::with_track(EnvConfig::default(), track);
        AgentEnv::from_env(env, ObserveConfig::default(), ObsMode::Features)
    }

    #[test]
    fn death_on_second_skipped_frame() {
        let mut a = stadium_agent();
        let edge = a.env().track().playfield.max;
        // 0.5 units inside the right boundary, moving +x at 40 u/s (0.8 u/frame).
        let car = CarState {
            speed: 40.0,
            ..CarState::at_rest(Vec2::new(edge.x - 1.0, 0.0), 0.0)
        };
        a.env_mut().set_car(car);
        let s = a.frame_skip_step(Control::default()).unwrap();
        assert_eq!(s.frames, 2);
        assert!(s.terminated);
        assert!((s.reward - (-0.2 - 100.0)).abs() < 1e-12);
    }

    #[test]
    fn tile_on_third_skipped_frame() {
        let mut a = stadium_agent();
        let boundary = a.env().track().centerline[1];
        a.env_mut().set_car(CarState {
            speed: 30.0,
            ..CarState::at_rest(boundary - Vec2::new(1.5, 0.0), 0.0)
        });
        assert_eq!(a.env().current_tile(), Some(0));
        let s = a.frame_skip_step(Control::default()).unwrap();
        assert_eq!(s.frames, 4);
        assert_eq!(a.env().tiles_visited(), 1);
        assert!((s.reward - 3.6).abs() < 1e-12);
    }
}
