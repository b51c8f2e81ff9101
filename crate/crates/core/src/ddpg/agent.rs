use std::path::Path;

use indexmap::IndexMap;
use ndarray::{s, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::StreamRng;
use crate::ddpg::buffer::{ReplayBuffer, Transition};
use crate::ddpg::config::AgentConfig;
use crate::env::normalizer::ObservationNormalizer;
use crate::error::{Error, Result};
use crate::nn::checkpoint::{params_from_doc, params_to_doc, OptimizerDoc, ParamsDoc};
use crate::nn::{
    Activation, BatchNormStats, Direction, Mlp, MlpSpec, Mode, OptimizerState, ParamStore,
};

/// Maps a squashed actor output to the action box. `u = 1` lands exactly
/// on `high`.
fn to_bounds(y: f64, act: Activation, low: f64, high: f64) -> f64 {
    let u = match act {
        Activation::Tanh => 0.5 * (y + 1.0),
        _ => y,
    };
    low * (1.0 - u) + high * u
}

/// Action rescaled to `[-1, 1]` for the critic input.
fn to_unit(a: f64, low: f64, high: f64) -> f64 {
    2.0 * (a - low) / (high - low) - 1.0
}

/// d(unit action)/d(actor output).
fn unit_slope(act: Activation) -> f64 {
    match act {
        Activation::Tanh => 1.0,
        _ => 2.0,
    }
}

pub fn actor_spec(cfg: &AgentConfig) -> MlpSpec {
    let mut sizes = cfg.hidden_layers.clone();
    sizes.push(cfg.act_dim);
    let mut acts = vec![cfg.actor_hidden_activation; cfg.hidden_layers.len()];
    acts.push(cfg.actor_output_activation);
    let spec = MlpSpec::new(cfg.obs_dim, sizes, acts);
    if cfg.batch_norm && !cfg.hidden_layers.is_empty() {
        spec.with_batch_norm([0])
    } else {
        spec
    }
}

pub fn critic_spec(cfg: &AgentConfig) -> MlpSpec {
    let mut sizes = cfg.hidden_layers.clone();
    sizes.push(1);
    let mut acts = vec![cfg.critic_hidden_activation; cfg.hidden_layers.len()];
    acts.push(Activation::Linear);
    let spec = MlpSpec::new(cfg.obs_dim + cfg.act_dim, sizes, acts);
    if cfg.batch_norm && !cfg.hidden_layers.is_empty() {
        spec.with_batch_norm([0])
    } else {
        spec
    }
}

/// Deterministic actor output mapped into the action box, plus Gaussian
/// noise, clipped back into the box. `obs` must already be normalized.
pub fn select_action<R: Rng + ?Sized>(
    actor: &Mlp,
    cfg: &AgentConfig,
    obs: &[f64],
    noise_std: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let x = Array2::from_shape_vec((1, obs.len()), obs.to_vec())
        .map_err(|e| Error::Input(format!("observation: {e}")))?;
    let y = actor.predict(&x)?;
    Ok((0..cfg.act_dim)
        .map(|j| {
            let (lo, hi) = (cfg.act_low[j], cfg.act_high[j]);
            let mut a = to_bounds(y[[0, j]], cfg.actor_output_activation, lo, hi);
            if noise_std > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                a += noise_std * z;
            }
            a.clamp(lo, hi)
        })
        .collect())
}

/// `θ′ ← τθ + (1−τ)θ′`.
pub fn soft_update(target: &mut ParamStore, online: &ParamStore, tau: f64) -> Result<()> {
    target.check_layout(online, "soft update")?;
    for (name, t) in target.iter_mut() {
        let o = online.expect(name)?;
        t.zip_mut_with(o, |t, &o| *t = tau * o + (1.0 - tau) * *t);
    }
    Ok(())
}

/// Soft update of parameters and batch-norm running statistics.
pub fn soft_update_network(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    soft_update(&mut target.params, &online.params, tau)?;
    for (t, o) in target.bn_stats_mut().iter_mut().zip(online.bn_stats()) {
        if let (Some(t), Some(o)) = (t.as_mut(), o.as_ref()) {
            t.running_mean
                .zip_mut_with(&o.running_mean, |t, &o| *t = tau * o + (1.0 - tau) * *t);
            t.running_var
                .zip_mut_with(&o.running_var, |t, &o| *t = tau * o + (1.0 - tau) * *t);
        }
    }
    Ok(())
}

/// Actor, critic, their targets, optimizers, replay buffer and observation
/// statistics of one learner.
pub struct DdpgAgent {
    pub config: AgentConfig,
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub actor_opt: OptimizerState,
    pub critic_opt: OptimizerState,
    pub buffer: ReplayBuffer,
    pub normalizer: ObservationNormalizer,
    pub rng: StreamRng,
    /// Episodes completed, drives the noise schedule.
    pub episode: usize,
    pub updates: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

impl DdpgAgent {
    pub fn new(config: AgentConfig, mut rng: StreamRng) -> Result<Self> {
        config.validate()?;
        let actor = Mlp::new(actor_spec(&config), &mut rng)?;
        let critic = Mlp::new(critic_spec(&config), &mut rng)?;
        Ok(Self {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            actor_opt: OptimizerState::new(config.actor_optimizer.clone()),
            critic_opt: OptimizerState::new(config.critic_optimizer.clone()),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            normalizer: ObservationNormalizer::new(config.obs_dim),
            rng,
            episode: 0,
            updates: 0,
            config,
        })
    }

    fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.config.obs_dim {
            return Err(Error::shape(
                "agent observation",
                self.config.obs_dim,
                obs.len(),
            ));
        }
        Ok(())
    }

    /// Folds a raw observation into the running statistics.
    pub fn observe(&mut self, obs: &[f64]) -> Result<()> {
        self.check_obs(obs)?;
        self.normalizer.update(obs);
        Ok(())
    }

    /// Exploratory action for a raw observation.
    pub fn act(&mut self, obs: &[f64], noise_std: f64) -> Result<Vec<f64>> {
        self.check_obs(obs)?;
        let x = self.normalizer.normalize(obs);
        select_action(&self.actor, &self.config, &x, noise_std, &mut self.rng)
    }

    /// Noise-free action.
    pub fn act_greedy(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.check_obs(obs)?;
        let x = self.normalizer.normalize(obs);
        let mut rng = StreamRng::seed_from_u64(0);
        select_action(&self.actor, &self.config, &x, 0.0, &mut rng)
    }

    pub fn noise_std(&self, total_episodes: usize) -> f64 {
        self.config.noise.std_at(self.episode, total_episodes)
    }

    pub fn remember(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    pub fn ready(&self) -> bool {
        self.buffer.len() >= self.config.warmup_len().max(self.config.batch_size)
    }

    /// One critic step, one actor step and both soft updates, if warm.
    pub fn train_step(&mut self) -> Result<Option<UpdateStats>> {
        if !self.ready() {
            return Ok(None);
        }
        let idx =
            rand::seq::index::sample(&mut self.rng, self.buffer.len(), self.config.batch_size)
                .into_vec();
        let batch = self.batch_from_indices(&idx);
        let critic_loss = critic_update(self, &batch)?;
        let actor_objective = actor_update(self, &batch)?;
        soft_update_network(&mut self.actor_target, &self.actor, self.config.tau)?;
        soft_update_network(&mut self.critic_target, &self.critic, self.config.tau)?;
        self.updates += 1;
        Ok(Some(UpdateStats {
            critic_loss,
            actor_objective,
        }))
    }

    fn batch_from_indices(&self, idx: &[usize]) -> Batch {
        let picked: Vec<&Transition> = idx.iter().filter_map(|&i| self.buffer.slot(i)).collect();
        Batch::build(&picked, &self.normalizer, &self.config)
    }
}

/// Normalized mini-batch matrices.
#[derive(Clone, Debug)]
pub struct Batch {
    pub s: Array2<f64>,
    /// Actions rescaled to `[-1, 1]`.
    pub a_unit: Array2<f64>,
    pub r: Vec<f64>,
    pub s_next: Array2<f64>,
    pub terminal: Vec<bool>,
}

impl Batch {
    pub fn build(items: &[&Transition], norm: &ObservationNormalizer, cfg: &AgentConfig) -> Self {
        let n = items.len();
        let mut s = Array2::zeros((n, cfg.obs_dim));
        let mut s_next = Array2::zeros((n, cfg.obs_dim));
        let mut a_unit = Array2::zeros((n, cfg.act_dim));
        for (i, t) in items.iter().enumerate() {
            for (j, v) in norm.normalize(&t.s).into_iter().enumerate() {
                s[[i, j]] = v;
            }
            for (j, v) in norm.normalize(&t.s_next).into_iter().enumerate() {
                s_next[[i, j]] = v;
            }
            for j in 0..cfg.act_dim {
                a_unit[[i, j]] = to_unit(t.a[j], cfg.act_low[j], cfg.act_high[j]);
            }
        }
        Self {
            s,
            a_unit,
            r: items.iter().map(|t| t.r).collect(),
            s_next,
            terminal: items.iter().map(|t| t.terminal).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

fn concat_cols(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()]).expect("row counts match")
}

/// Actor output mapped to unit action coordinates.
fn unit_actions(y: &Array2<f64>, act: Activation) -> Array2<f64> {
    match act {
        Activation::Tanh => y.clone(),
        _ => y.mapv(|v| 2.0 * v - 1.0),
    }
}

/// Bellman targets `y = r + γ Q′(s′, μ′(s′))`, cut at terminal transitions.
pub fn bellman_targets(agent: &DdpgAgent, batch: &Batch) -> Result<Vec<f64>> {
    let y_next = agent.actor_target.predict(&batch.s_next)?;
    let a_next = unit_actions(&y_next, agent.config.actor_output_activation);
    let q_next = agent
        .critic_target
        .predict(&concat_cols(&batch.s_next, &a_next))?;
    Ok((0..batch.len())
        .map(|i| {
            if batch.terminal[i] {
                batch.r[i]
            } else {
                batch.r[i] + agent.config.gamma * q_next[[i, 0]]
            }
        })
        .collect())
}

/// One descent step on the mean squared Bellman error. Returns the loss
/// before the step.
pub fn critic_update(agent: &mut DdpgAgent, batch: &Batch) -> Result<f64> {
    let y = bellman_targets(agent, batch)?;
    let q = agent
        .critic
        .forward(&concat_cols(&batch.s, &batch.a_unit), Mode::Train)?;
    let n = batch.len() as f64;
    let diff: Vec<f64> = (0..batch.len()).map(|i| q[[i, 0]] - y[i]).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            name: "critic loss".into(),
        });
    }
    let grad_out = Array2::from_shape_fn((batch.len(), 1), |(i, _)| 2.0 * diff[i] / n);
    let (mut grads, _) = agent.critic.backward(&grad_out)?;
    if let Some(max) = agent.config.grad_clip {
        grads.clip_global_norm(max);
    }
    agent
        .critic_opt
        .step(&mut agent.critic.params, &grads, Direction::Descent)?;
    Ok(loss)
}

/// `J = mean Q(s, μ(s))` and dJ/dθ^μ through the critic's action input.
/// The critic runs in eval mode and its parameters are not touched.
pub fn actor_objective_gradient(
    actor: &mut Mlp,
    critic: &mut Mlp,
    cfg: &AgentConfig,
    states: &Array2<f64>,
) -> Result<(f64, ParamStore)> {
    let n = states.nrows();
    let mode = if n >= 2 { Mode::Train } else { Mode::Eval };
    let y = actor.forward(states, mode)?;
    let a = unit_actions(&y, cfg.actor_output_activation);
    let q = critic.forward(&concat_cols(states, &a), Mode::Eval)?;
    let j = q.sum() / n as f64;
    let dq = Array2::from_elem((n, 1), 1.0 / n as f64);
    let (_, d_in) = critic.backward(&dq)?;
    let slope = unit_slope(cfg.actor_output_activation);
    let dy = d_in.slice(s![.., cfg.obs_dim..]).mapv(|v| v * slope);
    let (grads, _) = actor.backward(&dy)?;
    critic.clear_cache();
    Ok((j, grads))
}

/// One ascent step on `J`. Returns `J` before the step.
pub fn actor_update(agent: &mut DdpgAgent, batch: &Batch) -> Result<f64> {
    let (j, mut grads) =
        actor_objective_gradient(&mut agent.actor, &mut agent.critic, &agent.config, &batch.s)?;
    if !j.is_finite() {
        return Err(Error::NonFinite {
            name: "actor objective".into(),
        });
    }
    if let Some(max) = agent.config.grad_clip {
        grads.clip_global_norm(max);
    }
    agent
        .actor_opt
        .step(&mut agent.actor.params, &grads, Direction::Ascent)?;
    Ok(j)
}

// ------------------------------------------------------------ checkpoint ----

const AGENT_FORMAT: &str = "gridmarl-agent";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct NetworkDoc {
    params: ParamsDoc,
    bn_stats: Vec<Option<BatchNormStats>>,
}

impl NetworkDoc {
    fn from(m: &Mlp) -> Self {
        Self {
            params: params_to_doc(&m.params),
            bn_stats: m.bn_stats().to_vec(),
        }
    }

    fn restore(&self, spec: MlpSpec) -> Result<Mlp> {
        let mut m = Mlp::from_params(spec, params_from_doc(&self.params)?)?;
        if m.bn_stats().len() != self.bn_stats.len() {
            return Err(Error::Input(
                "batch-norm statistics do not match the network".into(),
            ));
        }
        m.bn_stats_mut().clone_from_slice(&self.bn_stats);
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RngDoc {
    seed: String,
    stream: u64,
    word_pos: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct AgentDoc {
    format: String,
    config: AgentConfig,
    networks: IndexMap<String, NetworkDoc>,
    actor_optimizer: OptimizerDoc,
    critic_optimizer: OptimizerDoc,
    normalizer: ObservationNormalizer,
    episode: usize,
    updates: u64,
    rng: RngDoc,
}

impl DdpgAgent {
    /// Networks, optimizer slots, observation statistics, noise position and
    /// generator state. The replay buffer is not saved.
    pub fn to_json(&self) -> Result<String> {
        let mut networks = IndexMap::new();
        networks.insert("actor".to_string(), NetworkDoc::from(&self.actor));
        networks.insert("critic".to_string(), NetworkDoc::from(&self.critic));
        networks.insert(
            "actor_target".to_string(),
            NetworkDoc::from(&self.actor_target),
        );
        networks.insert(
            "critic_target".to_string(),
            NetworkDoc::from(&self.critic_target),
        );
        let doc = AgentDoc {
            format: AGENT_FORMAT.into(),
            config: self.config.clone(),
            networks,
            actor_optimizer: OptimizerDoc::from(&self.actor_opt),
            critic_optimizer: OptimizerDoc::from(&self.critic_opt),
            normalizer: self.normalizer.clone(),
            episode: self.episode,
            updates: self.updates,
            rng: RngDoc {
                seed: hex::encode(self.rng.get_seed()),
                stream: self.rng.get_stream(),
                word_pos: self.rng.get_word_pos().to_string(),
            },
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: AgentDoc = serde_json::from_str(s)?;
        if doc.format != AGENT_FORMAT {
            return Err(Error::Input("not an agent checkpoint".into()));
        }
        doc.config.validate()?;
        let net = |name: &str, spec: MlpSpec| -> Result<Mlp> {
            doc.networks
                .get(name)
                .ok_or_else(|| Error::Input(format!("agent checkpoint lacks `{name}`")))?
                .restore(spec)
        };
        let seed: [u8; 32] = hex::decode(&doc.rng.seed)
            .ok()
            .and_then(|v| v.try_into().ok())
            .ok_or_else(|| Error::Input("bad rng seed in agent checkpoint".into()))?;
        let mut rng = StreamRng::from_seed(seed);
        rng.set_stream(doc.rng.stream);
        rng.set_word_pos(
            doc.rng
                .word_pos
                .parse()
                .map_err(|_| Error::Input("bad rng position in agent checkpoint".into()))?,
        );
        Ok(Self {
            actor: net("actor", actor_spec(&doc.config))?,
            critic: net("critic", critic_spec(&doc.config))?,
            actor_target: net("actor_target", actor_spec(&doc.config))?,
            critic_target: net("critic_target", critic_spec(&doc.config))?,
            actor_opt: doc.actor_optimizer.to_state()?,
            critic_opt: doc.critic_optimizer.to_state()?,
            buffer: ReplayBuffer::new(doc.config.buffer_capacity),
            normalizer: doc.normalizer,
            rng,
            episode: doc.episode,
            updates: doc.updates,
            config: doc.config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
