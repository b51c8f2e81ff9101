//! The scenario document: one JSON file with every tunable, versioned.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::synth::WindSynthSpec;
use crate::ddpg::{AgentConfig, NoiseSchedule};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::forecast::{ForecasterConfig, PipelineConfig};
use crate::nn::{Activation, OptimizerConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum WindSource {
    Synthetic(WindSynthSpec),
    Csv {
        path: PathBuf,
        /// Rescale active power so the series peaks at the plant capacity.
        #[serde(default)]
        scale_to_capacity: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub episodes: usize,
    /// Scenario metrics average the last this many episodes.
    pub eval_days: usize,
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PricingConfig {
    /// Hourly time-of-use tariffs, $/kWh.
    pub tou_a: Vec<f64>,
    pub tou_b: Vec<f64>,
    /// Relative half-width of the persistence band used without a forecaster.
    pub uncertainty_margin: f64,
}

impl Default for PricingConfig {
    fn default() -> Self {
        let block = |off: f64,
                     mid: f64,
                     peak: f64,
                     from: usize,
                     to: usize,
                     shoulder: &[usize]|
         -> Vec<f64> {
            (0..24)
                .map(|h| {
                    if (from..to).contains(&h) {
                        peak
                    } else if shoulder.contains(&h) {
                        mid
                    } else {
                        off
                    }
                })
                .collect()
        };
        Self {
            tou_a: block(0.08, 0.08, 0.16, 16, 20, &[]),
            tou_b: block(0.07, 0.13, 0.19, 16, 21, &[8, 9, 10, 11, 12, 13, 14, 15]),
            uncertainty_margin: 0.10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub env: EnvConfig,
    pub wind: WindSource,
    pub pipeline: PipelineConfig,
    pub forecaster: ForecasterConfig,
    pub pa_agent: AgentConfig,
    pub lsa_agent: AgentConfig,
    pub training: TrainingConfig,
    pub pricing: PricingConfig,
}

pub fn pa_agent_config(env: &EnvConfig, hidden: Vec<usize>) -> AgentConfig {
    AgentConfig {
        obs_dim: env.pa_obs_dim(),
        act_dim: 1,
        act_low: vec![-env.battery.p_charge_max],
        act_high: vec![env.battery.p_discharge_max],
        gamma: 0.95,
        tau: 0.005,
        batch_size: 64,
        hidden_layers: hidden,
        actor_hidden_activation: Activation::LeakyRelu,
        actor_output_activation: Activation::Tanh,
        critic_hidden_activation: Activation::Relu,
        batch_norm: true,
        actor_optimizer: OptimizerConfig::sgd(5e-4, 0.8),
        critic_optimizer: OptimizerConfig::adamw(5e-3),
        noise: NoiseSchedule {
            initial: 0.7,
            final_std: 0.05,
            decay_fraction: 0.8,
        },
        buffer_capacity: 1_000_000,
        warmup: None,
        grad_clip: Some(10.0),
    }
}

pub fn lsa_agent_config(env: &EnvConfig, hidden: Vec<usize>) -> AgentConfig {
    let dim = env.lsa_act_dim();
    AgentConfig {
        obs_dim: env.lsa_obs_dim(),
        act_dim: dim,
        act_low: vec![env.price_low; dim],
        act_high: vec![env.price_high; dim],
        gamma: 0.95,
        tau: 0.005,
        batch_size: 100,
        hidden_layers: hidden,
        actor_hidden_activation: Activation::RreluDeterministic,
        actor_output_activation: Activation::Sigmoid,
        critic_hidden_activation: Activation::Relu,
        batch_norm: true,
        actor_optimizer: OptimizerConfig::sgd(3e-5, 0.9),
        critic_optimizer: OptimizerConfig::adamw(3e-4),
        noise: NoiseSchedule {
            initial: 0.07,
            final_std: 0.005,
            decay_fraction: 0.8,
        },
        buffer_capacity: 1_000_000,
        warmup: None,
        grad_clip: Some(10.0),
    }
}

impl ScenarioConfig {
    /// Full-size networks and run length.
    pub fn full_scale() -> Self {
        let env = EnvConfig::default();
        let hidden = vec![1000, 1000, 500];
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 1,
            pa_agent: pa_agent_config(&env, hidden.clone()),
            lsa_agent: lsa_agent_config(&env, hidden),
            env,
            wind: WindSource::Synthetic(WindSynthSpec::default()),
            pipeline: PipelineConfig::default(),
            forecaster: ForecasterConfig::default(),
            training: TrainingConfig {
                episodes: 4000,
                eval_days: 100,
                checkpoint_every: Some(500),
            },
            pricing: PricingConfig::default(),
        }
    }

    /// Small networks and 200 episodes; minutes on a laptop.
    pub fn test_preset() -> Self {
        let mut c = Self::full_scale();
        let hidden = vec![32, 32, 16];
        c.pa_agent = pa_agent_config(&c.env, hidden.clone());
        c.lsa_agent = lsa_agent_config(&c.env, hidden);
        c.pa_agent.buffer_capacity = 100_000;
        c.lsa_agent.buffer_capacity = 100_000;
        c.pa_agent.actor_optimizer.learning_rate = 1e-2;
        c.lsa_agent.actor_optimizer.learning_rate = 1e-2;
        c.lsa_agent.critic_optimizer.learning_rate = 1e-3;
        c.env.pa_reward_scale = 0.1;
        c.env.lsa_reward_scale = 1.0;
        c.forecaster = ForecasterConfig::test_preset();
        c.wind = WindSource::Synthetic(WindSynthSpec {
            days: 60,
            ..WindSynthSpec::default()
        });
        c.training = TrainingConfig {
            episodes: 200,
            eval_days: 50,
            checkpoint_every: None,
        };
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.env.validate()?;
        self.pa_agent.validate()?;
        self.lsa_agent.validate()?;
        if self.pa_agent.obs_dim != self.env.pa_obs_dim() {
            return Err(Error::Config(format!(
                "pa_agent.obs_dim is {}, the environment produces {}",
                self.pa_agent.obs_dim,
                self.env.pa_obs_dim()
            )));
        }
        if self.lsa_agent.obs_dim != self.env.lsa_obs_dim()
            || self.lsa_agent.act_dim != self.env.lsa_act_dim()
        {
            return Err(Error::Config(format!(
                "lsa_agent must map {} features to {} prices",
                self.env.lsa_obs_dim(),
                self.env.lsa_act_dim()
            )));
        }
        if self.training.episodes == 0
            || self.training.eval_days == 0
            || self.training.eval_days > self.training.episodes
        {
            return Err(Error::Config("need 0 < eval_days <= episodes".into()));
        }
        let in_range = |v: &f64| (self.env.price_low..=self.env.price_high).contains(v);
        for (name, s) in [
            ("tou_a", &self.pricing.tou_a),
            ("tou_b", &self.pricing.tou_b),
        ] {
            if s.len() != 24 || !s.iter().all(in_range) {
                return Err(Error::Config(format!(
                    "{name} needs 24 hourly prices inside the price range"
                )));
            }
        }
        if let WindSource::Synthetic(spec) = &self.wind {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let bytes = std::fs::read(path)?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::Config(format!("config is not UTF-8: {e}")))?;
        Ok((Self::from_json(text)?, bytes))
    }
}
