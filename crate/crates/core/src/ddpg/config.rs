use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, OptimizerConfig};

/// Exploration noise falling linearly from `initial` to `final_std` over
/// the first `decay_fraction` of training, then held.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub initial: f64,
    pub final_std: f64,
    pub decay_fraction: f64,
}

impl NoiseSchedule {
    pub fn std_at(&self, episode: usize, total_episodes: usize) -> f64 {
        let span = self.decay_fraction * total_episodes as f64;
        let frac = if span <= 0.0 {
            1.0
        } else {
            (episode as f64 / span).min(1.0)
        };
        self.initial + (self.final_std - self.initial) * frac
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub act_low: Vec<f64>,
    pub act_high: Vec<f64>,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    /// Hidden widths; the actor adds an `act_dim` output layer, the critic a
    /// single output.
    pub hidden_layers: Vec<usize>,
    pub actor_hidden_activation: Activation,
    /// `tanh` or `sigmoid`; bounds the raw output before the affine map to
    /// `[act_low, act_high]`.
    pub actor_output_activation: Activation,
    pub critic_hidden_activation: Activation,
    /// Batch normalization after the first hidden layer of both networks.
    pub batch_norm: bool,
    pub actor_optimizer: OptimizerConfig,
    pub critic_optimizer: OptimizerConfig,
    pub noise: NoiseSchedule,
    pub buffer_capacity: usize,
    /// Updates start once the buffer holds this many transitions; defaults
    /// to ten batches.
    #[serde(default)]
    pub warmup: Option<usize>,
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

impl AgentConfig {
    pub fn warmup_len(&self) -> usize {
        self.warmup.unwrap_or(10 * self.batch_size)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.obs_dim == 0 || self.act_dim == 0 {
            return bad("agent dimensions must be positive".into());
        }
        if self.act_low.len() != self.act_dim || self.act_high.len() != self.act_dim {
            return bad(format!("action bounds must have {} entries", self.act_dim));
        }
        if self
            .act_low
            .iter()
            .zip(&self.act_high)
            .any(|(l, h)| !(l < h))
        {
            return bad("every action lower bound must be below its upper bound".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau {} outside (0, 1]", self.tau));
        }
        if self.batch_size == 0 || (self.batch_norm && self.batch_size < 2) {
            return bad("batch size must be at least 2 with batch normalization".into());
        }
        if !matches!(
            self.actor_output_activation,
            Activation::Tanh | Activation::Sigmoid
        ) {
            return bad("actor output activation must be tanh or sigmoid".into());
        }
        self.actor_optimizer.validate()?;
        self.critic_optimizer.validate()?;
        Ok(())
    }
}
