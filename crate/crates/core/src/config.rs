//! Experiment configuration file (TOML).
//!
//! Every section is optional and falls back to its defaults; unknown keys are
//! rejected. A resolved config written by `train` loads back to the same
//! value.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::baselines::GeometryBaselineConfig;
use crate::channel::ChannelConfig;
use crate::codebook::CodebookConfig;
use crate::env::{EnvConfig, EnvSpec, RewardConfig};
use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;
use crate::geometry::ScenarioConfig;
use crate::measurement::NoiseConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seeds: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            seeds: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Write an intermediate checkpoint every this many episodes (0: final only).
    pub checkpoint_every: usize,
    pub scenario: ScenarioConfig,
    pub channel: ChannelConfig,
    pub noise: NoiseConfig,
    pub codebook: CodebookConfig,
    pub reward: RewardConfig,
    pub estimator: EstimatorConfig,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub eval: EvalConfig,
    pub geometry_baseline: GeometryBaselineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("runs/default"),
            checkpoint_every: 0,
            scenario: ScenarioConfig::default(),
            channel: ChannelConfig::default(),
            noise: NoiseConfig::default(),
            codebook: CodebookConfig::default(),
            reward: RewardConfig::default(),
            estimator: EstimatorConfig::default(),
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
            eval: EvalConfig::default(),
            geometry_baseline: GeometryBaselineConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn env_spec(&self) -> EnvSpec {
        EnvSpec {
            scenario: self.scenario.clone(),
            channel: self.channel.clone(),
            noise: self.noise.clone(),
            reward: self.reward.clone(),
            estimator: self.estimator.clone(),
            env: self.env.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env_spec().validate()?;
        self.codebook.validate(self.scenario.m_beams)?;
        self.agent.validate()?;
        if self.eval.episodes == 0 || self.eval.seeds == 0 {
            return Err(Error::Config("eval: episodes and seeds must be positive".into()));
        }
        if !(self.geometry_baseline.footprint_radius_m > 0.0) {
            return Err(Error::Config("geometry_baseline: footprint_radius_m must be positive".into()));
        }
        Ok(())
    }
}
