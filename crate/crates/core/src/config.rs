//! Scenario configuration files.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::{load_catalog, Catalog};
use crate::env::{AgentSpec, Arena, Rules};
use crate::error::{Error, Result};
use crate::policy::LearnerConfig;
use crate::reward::{FDivergence, LambdaAdapter, RewardWeights};

/// Who drives an agent when a scenario is trained or simulated.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    #[default]
    Learner,
    Aggressor,
    Reactive,
    Patient,
    /// Reads the nearest opponent's plan and guards its next strike with
    /// one-step guards. A reference opponent that no timing trick beats.
    Blocker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub name: String,
    pub team: u32,
    pub spawn: [f64; 2],
    #[serde(default)]
    pub controller: Controller,
}

/// Thresholds of the imaginary-play activation and its rollouts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeintConfig {
    /// Closeness of the current posture to a target's start; `None` means 2·ε.
    pub delta_near: Option<f64>,
    pub p_low: f64,
    /// Behaviors with at least this reward value are feint targets.
    pub high_reward_min: f64,
    /// Rollout horizon beyond the end of the dual-behavior model.
    pub extra_steps: usize,
    /// Rollout pairs averaged per imaginary-play evaluation.
    pub rollouts: usize,
    /// Steps without another activation after imaginary play declines.
    pub cooldown_steps: usize,
    /// Maximum distance to the nearest opponent for activation; `None`
    /// leaves distance out of the activation test.
    pub engage_range: Option<f64>,
    pub state_bins: u32,
}

impl Default for FeintConfig {
    fn default() -> Self {
        FeintConfig {
            delta_near: None,
            p_low: 0.2,
            high_reward_min: 3.0,
            extra_steps: 8,
            rollouts: 4,
            cooldown_steps: 6,
            engage_range: None,
            state_bins: 8,
        }
    }
}

fn default_episode_length() -> usize {
    60
}

fn default_episodes() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Catalog path, relative to the config file.
    pub catalog: String,
    pub agents: Vec<AgentConfig>,
    #[serde(default)]
    pub rules: Rules,
    #[serde(default = "default_episode_length")]
    pub episode_length: usize,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default)]
    pub feint_agents: Vec<usize>,
    #[serde(default)]
    pub reward: RewardWeights,
    #[serde(default)]
    pub lambda_adapter: LambdaAdapter,
    #[serde(default)]
    pub f_divergence: FDivergence,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub feint: FeintConfig,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.reward.validate()?;
        if self.episode_length == 0 {
            return Err(Error::Config("episode_length must be >= 1".into()));
        }
        if let Some(bad) = self.feint_agents.iter().find(|i| **i >= self.agents.len()) {
            return Err(Error::UnknownAgent(*bad));
        }
        if !(0.0..=1.0).contains(&self.feint.p_low) || self.feint.state_bins == 0 {
            return Err(Error::Config(
                "p_low must be in [0, 1] and state_bins >= 1".into(),
            ));
        }
        let l = &self.learner;
        if [
            l.actor_lr,
            l.critic_lr,
            l.feint_lr,
            l.feint_baseline_rate,
            l.entropy,
        ]
        .iter()
        .any(|v| !v.is_finite() || *v < 0.0)
            || !(0.0..=1.0).contains(&l.discount)
        {
            return Err(Error::Config(
                "learning rates must be >= 0 and discount in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn agent_specs(&self) -> Vec<AgentSpec> {
        self.agents
            .iter()
            .map(|a| AgentSpec {
                name: a.name.clone(),
                team: a.team,
                spawn: a.spawn,
            })
            .collect()
    }
}

/// A parsed scenario with its catalog and arena built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub catalog: Arc<Catalog>,
    pub arena: Arena,
}

impl Scenario {
    pub fn new(config: ScenarioConfig, catalog: Arc<Catalog>) -> Result<Self> {
        config.validate()?;
        let arena = Arena::new(config.rules, config.agent_specs(), catalog.clone())?;
        Ok(Scenario {
            config,
            catalog,
            arena,
        })
    }

    /// Loads a config file; `catalog_override` replaces the catalog it names.
    pub fn load(path: impl AsRef<Path>, catalog_override: Option<&Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let config = ScenarioConfig::from_json(&text)?;
        let catalog_path: PathBuf = match catalog_override {
            Some(p) => p.to_path_buf(),
            None => path
                .parent()
                .unwrap_or(Path::new("."))
                .join(&config.catalog),
        };
        let catalog = Arc::new(load_catalog(&catalog_path)?);
        Scenario::new(config, catalog)
    }
}
