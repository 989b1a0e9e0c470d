use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dqn::DqnConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::neural::NetworkSpec;
use crate::observe::{ObsMode, ObserveConfig};
use crate::ppo::PpoConfig;

/// Committed defaults; `RunConfig::default()` must parse to the same value.
pub const DEFAULTS_TOML: &str = include_str!("../../../../configs/defaults.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Dqn,
    Ppo,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Dqn => "dqn",
            Algorithm::Ppo => "ppo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Hidden width of the feature-mode torso.
    pub hidden: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { hidden: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub obs_mode: ObsMode,
    pub action_mode: ActionMode,
    pub seed: u64,
    /// Training budget in agent decisions.
    pub total_steps: u64,
    /// Evaluate and checkpoint every this many agent decisions.
    pub eval_period: u64,
    pub eval_episodes: u32,
    /// Aggregation window for train scalars, in agent decisions.
    pub log_period: u64,
    pub env: EnvConfig,
    pub observe: ObserveConfig,
    pub network: NetworkConfig,
    pub dqn: DqnConfig,
    pub ppo: PpoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Dqn,
            obs_mode: ObsMode::Features,
            action_mode: ActionMode::Discrete,
            seed: 1,
            total_steps: 125_000,
            eval_period: 10_000,
            eval_episodes: 20,
            log_period: 1_000,
            env: EnvConfig::default(),
            observe: ObserveConfig::default(),
            network: NetworkConfig::default(),
            dqn: DqnConfig::default(),
            ppo: PpoConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.action_mode == ActionMode::Continuous && self.algorithm == Algorithm::Dqn {
            return bad("continuous action mode requires algorithm = \"ppo\"; DQN needs a discrete action set".into());
        }
        if self.eval_period == 0 {
            return bad("eval_period must be positive".into());
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be positive".into());
        }
        if self.log_period == 0 {
            return bad("log_period must be positive".into());
        }
        if self.network.hidden == 0 {
            return bad("network.hidden must be positive".into());
        }
        self.env.track.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.observe.skip_intro as u64 >= self.env.frame_budget {
            return bad("observe.skip_intro must be shorter than env.frame_budget".into());
        }
        self.dqn.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.ppo.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_toml().as_bytes()).into()
    }

    /// Length of the observation vector.
    pub fn obs_len(&self) -> usize {
        match self.obs_mode {
            ObsMode::Pixel => 4 * 84 * 84,
            ObsMode::Features => self.observe.features.len(),
        }
    }

    /// Default torso for the observation mode with an `outputs`-wide head.
    pub fn network_spec(&self, outputs: usize, seed: u64) -> NetworkSpec {
        match self.obs_mode {
            ObsMode::Pixel => NetworkSpec::pixel_torso(outputs, seed),
            ObsMode::Features => NetworkSpec::feature_torso(self.obs_len(), self.network.hidden, outputs, seed),
        }
    }
}
