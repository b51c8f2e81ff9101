use indexmap::IndexMap;
use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::params::{GradStore, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum,
    Adam,
    AdamW,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Descent,
    Ascent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64, momentum: f64) -> Self {
        Self {
            kind: OptimizerKind::SgdMomentum,
            learning_rate,
            momentum,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
            weight_decay: 0.0,
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            ..Self::sgd(learning_rate, 0.0)
        }
    }

    /// AdamW with PyTorch's default decoupled decay of 0.01.
    pub fn adamw(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::AdamW,
            weight_decay: 0.01,
            ..Self::sgd(learning_rate, 0.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// Optimizer hyper-parameters plus per-parameter slots.
///
/// SGD keeps one velocity slot per entry; Adam/AdamW keep first and second
/// moments. Slots are created lazily on the first step and mirror the
/// parameter shapes from then on.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub slots: IndexMap<String, Vec<Array2<f64>>>,
    pub step_count: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            slots: IndexMap::new(),
            step_count: 0,
        }
    }

    fn slot_count(&self) -> usize {
        match self.config.kind {
            OptimizerKind::SgdMomentum => 1,
            OptimizerKind::Adam | OptimizerKind::AdamW => 2,
        }
    }

    /// Applies one update in place. Ascent follows `+grad`, descent `-grad`.
    pub fn step(
        &mut self,
        params: &mut ParamStore,
        grads: &GradStore,
        direction: Direction,
    ) -> Result<()> {
        params.check_layout(grads, "optimizer gradients")?;
        grads.check_finite()?;
        if self.slots.is_empty() {
            let n = self.slot_count();
            for (name, p) in params.iter() {
                self.slots
                    .insert(name.to_string(), vec![Array2::zeros(p.raw_dim()); n]);
            }
        }
        let sign = match direction {
            Direction::Descent => 1.0,
            Direction::Ascent => -1.0,
        };
        self.step_count += 1;
        let c = &self.config;
        let lr = c.learning_rate;
        let t = self.step_count as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);

        for (name, p) in params.iter_mut() {
            let g = grads.expect(name)?;
            let slots = self
                .slots
                .get_mut(name)
                .ok_or_else(|| Error::State(format!("optimizer has no slot for `{name}`")))?;
            match c.kind {
                OptimizerKind::SgdMomentum => {
                    let (mu, wd) = (c.momentum, c.weight_decay);
                    Zip::from(p).and(&mut slots[0]).and(g).for_each(|p, v, &g| {
                        // minimize sign * loss, with coupled L2 decay
                        let d = sign * g + wd * *p;
                        *v = mu * *v + d;
                        *p -= lr * *v;
                    });
                }
                OptimizerKind::Adam | OptimizerKind::AdamW => {
                    let decoupled = if c.kind == OptimizerKind::AdamW {
                        c.weight_decay
                    } else {
                        0.0
                    };
                    let coupled = if c.kind == OptimizerKind::Adam {
                        c.weight_decay
                    } else {
                        0.0
                    };
                    let (b1, b2, eps) = (c.beta1, c.beta2, c.epsilon);
                    let (m_slot, v_slot) = slots.split_at_mut(1);
                    Zip::from(p)
                        .and(&mut m_slot[0])
                        .and(&mut v_slot[0])
                        .and(g)
                        .for_each(|p, m, v, &g| {
                            *p -= lr * decoupled * *p;
                            let d = sign * g + coupled * *p;
                            *m = b1 * *m + (1.0 - b1) * d;
                            *v = b2 * *v + (1.0 - b2) * d * d;
                            let m_hat = *m / bc1;
                            let v_hat = *v / bc2;
                            *p -= lr * m_hat / (v_hat.sqrt() + eps);
                        });
                }
            }
        }
        Ok(())
    }
}

/// Free-function form of [`OptimizerState::step`].
pub fn optimizer_step(
    opt: &mut OptimizerState,
    params: &mut ParamStore,
    grads: &GradStore,
    direction: Direction,
) -> Result<()> {
    opt.step(params, grads, direction)
}
