use std::path::{Path, PathBuf};

use crate::data::stream;
use crate::ddpg::{AgentConfig, DdpgAgent, Transition};
use crate::env::log::{EpisodeLog, EpisodeSummary};
use crate::env::{generate_exogenous, EnvConfig, ExogenousDay, MarketEnv, WindPool};
use crate::error::{Error, Result};
use crate::retail::PriceSignal;

/// Where retail prices come from.
#[derive(Clone, Debug, PartialEq)]
pub enum PriceRule {
    /// One price per interval, applied to both directions.
    Schedule(Vec<f64>),
    /// The LSA agent's action.
    Agent,
}

/// `Train` explores, stores transitions and learns; `Evaluate` acts
/// greedily and leaves every agent untouched.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RolloutMode {
    Train,
    Evaluate,
}

pub struct Agents {
    pub lsa: Option<DdpgAgent>,
    pub pas: Vec<DdpgAgent>,
}

impl Agents {
    /// PA `i` draws from stream `pa/{i}`, the LSA from `lsa`.
    pub fn new(
        env: &EnvConfig,
        master: u64,
        lsa: Option<&AgentConfig>,
        pa: &AgentConfig,
    ) -> Result<Self> {
        if pa.obs_dim != env.pa_obs_dim() || pa.act_dim != 1 {
            return Err(Error::Config(format!(
                "PA agent must see {} features and emit 1 action, configured {}→{}",
                env.pa_obs_dim(),
                pa.obs_dim,
                pa.act_dim
            )));
        }
        let lsa = match lsa {
            Some(c) => {
                if c.obs_dim != env.lsa_obs_dim() || c.act_dim != env.lsa_act_dim() {
                    return Err(Error::Config(format!(
                        "LSA agent must see {} features and emit {} actions, configured {}→{}",
                        env.lsa_obs_dim(),
                        env.lsa_act_dim(),
                        c.obs_dim,
                        c.act_dim
                    )));
                }
                Some(DdpgAgent::new(c.clone(), stream(master, "lsa"))?)
            }
            None => None,
        };
        let pas = (0..env.prosumers)
            .map(|i| DdpgAgent::new(pa.clone(), stream(master, &format!("pa/{i}"))))
            .collect::<Result<_>>()?;
        Ok(Self { lsa, pas })
    }

    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        if let Some(l) = &self.lsa {
            let p = dir.join("lsa.json");
            l.save(&p)?;
            paths.push(p);
        }
        for (i, a) in self.pas.iter().enumerate() {
            let p = dir.join(format!("pa_{i}.json"));
            a.save(&p)?;
            paths.push(p);
        }
        Ok(paths)
    }

    /// Loads `pa_0.json … pa_{n-1}.json` and `lsa.json` when present.
    pub fn load(dir: &Path, prosumers: usize) -> Result<Self> {
        let lsa_path = dir.join("lsa.json");
        let lsa = if lsa_path.exists() {
            Some(DdpgAgent::load(&lsa_path)?)
        } else {
            None
        };
        let pas = (0..prosumers)
            .map(|i| DdpgAgent::load(&dir.join(format!("pa_{i}.json"))))
            .collect::<Result<_>>()?;
        Ok(Self { lsa, pas })
    }
}

type Pending = Option<(Vec<f64>, Vec<f64>, f64)>;

fn store(agent: &mut DdpgAgent, pending: &mut Pending, s_next: &[f64], terminal: bool) {
    if let Some((s, a, r)) = pending.take() {
        agent.remember(Transition {
            s,
            a,
            r,
            s_next: s_next.to_vec(),
            terminal,
        });
    }
}

/// One day. Within a step the LSA prices first, then each PA acts on the
/// posted price, then the interval clears.
pub fn run_episode(
    cfg: &EnvConfig,
    day: ExogenousDay,
    episode: usize,
    total_episodes: usize,
    agents: &mut Agents,
    rule: &PriceRule,
    mode: RolloutMode,
) -> Result<EpisodeLog> {
    let train = mode == RolloutMode::Train;
    let mut env = MarketEnv::reset(cfg, day, episode)?;
    if agents.pas.len() != cfg.prosumers {
        return Err(Error::Config(format!(
            "{} PA agents for {} prosumers",
            agents.pas.len(),
            cfg.prosumers
        )));
    }
    let lsa_noise = agents
        .lsa
        .as_ref()
        .map_or(0.0, |a| a.noise_std(total_episodes));
    let pa_noise: Vec<f64> = agents
        .pas
        .iter()
        .map(|a| a.noise_std(total_episodes))
        .collect();
    let mut pending_lsa: Pending = None;
    let mut pending_pa: Vec<Pending> = vec![None; cfg.prosumers];

    while !env.is_done() {
        let t = env.step_index();
        let wrap = |e: Error| Error::Episode {
            module: e.module(),
            episode,
            step: t,
            source: Box::new(e),
        };
        let (price, lsa_sa) = match rule {
            PriceRule::Schedule(s) => {
                let p = *s.get(t).ok_or_else(|| {
                    wrap(Error::Config(format!("price schedule has no interval {t}")))
                })?;
                (
                    PriceSignal::net_metering(p.clamp(cfg.price_low, cfg.price_high), t),
                    None,
                )
            }
            PriceRule::Agent => {
                let lsa = agents.lsa.as_mut().ok_or_else(|| {
                    wrap(Error::State("agent pricing needs a trained LSA".into()))
                })?;
                let o = env.lsa_observation().map_err(wrap)?;
                let a = if train {
                    lsa.observe(&o).map_err(wrap)?;
                    store(lsa, &mut pending_lsa, &o, false);
                    lsa.act(&o, lsa_noise).map_err(wrap)?
                } else {
                    lsa.act_greedy(&o).map_err(wrap)?
                };
                (cfg.price_signal(&a, t).map_err(wrap)?, Some((o, a)))
            }
        };

        let mut pa_sa = Vec::with_capacity(cfg.prosumers);
        for (i, pa) in agents.pas.iter_mut().enumerate() {
            let o = env.pa_observation(i, &price).map_err(wrap)?;
            let a = if train {
                pa.observe(&o).map_err(wrap)?;
                store(pa, &mut pending_pa[i], &o, false);
                pa.act(&o, pa_noise[i]).map_err(wrap)?
            } else {
                pa.act_greedy(&o).map_err(wrap)?
            };
            pa_sa.push((o, a));
        }
        let actions: Vec<f64> = pa_sa.iter().map(|(_, a)| a[0]).collect();
        let out = env.step(price, &actions).map_err(wrap)?;
        if !train {
            continue;
        }

        if let Some((o, a)) = lsa_sa {
            pending_lsa = Some((o, a, out.lsa_reward));
        }
        for (i, (o, a)) in pa_sa.into_iter().enumerate() {
            pending_pa[i] = Some((o, a, out.pa_rewards[i]));
        }
        if out.terminal {
            if let Some(lsa) = agents.lsa.as_mut() {
                if pending_lsa.is_some() {
                    let o = env.lsa_observation().map_err(wrap)?;
                    store(lsa, &mut pending_lsa, &o, true);
                }
            }
            for (i, pa) in agents.pas.iter_mut().enumerate() {
                let o = env.pa_observation(i, &price).map_err(wrap)?;
                store(pa, &mut pending_pa[i], &o, true);
            }
        }
        if matches!(rule, PriceRule::Agent) {
            if let Some(lsa) = agents.lsa.as_mut() {
                lsa.train_step().map_err(wrap)?;
            }
        }
        for pa in agents.pas.iter_mut() {
            pa.train_step().map_err(wrap)?;
        }
    }

    if train {
        if matches!(rule, PriceRule::Agent) {
            if let Some(lsa) = agents.lsa.as_mut() {
                lsa.episode += 1;
            }
        }
        for pa in agents.pas.iter_mut() {
            pa.episode += 1;
        }
    }
    Ok(EpisodeLog {
        summary: env.summary()?,
        records: env.records().to_vec(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingOptions {
    pub episodes: usize,
    /// Exogenous day of the first episode.
    pub first_day: usize,
    pub mode: RolloutMode,
    /// Full episode logs kept for the last this many episodes.
    pub keep_logs: usize,
    pub checkpoint_every: Option<usize>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl TrainingOptions {
    pub fn train(episodes: usize) -> Self {
        Self {
            episodes,
            first_day: 0,
            mode: RolloutMode::Train,
            keep_logs: 1,
            checkpoint_every: None,
            checkpoint_dir: None,
        }
    }

    pub fn evaluate(first_day: usize, episodes: usize) -> Self {
        Self {
            episodes,
            first_day,
            mode: RolloutMode::Evaluate,
            keep_logs: episodes,
            checkpoint_every: None,
            checkpoint_dir: None,
        }
    }
}

pub struct TrainingRun {
    pub agents: Agents,
    pub history: Vec<EpisodeSummary>,
    pub logs: Vec<EpisodeLog>,
}

/// Episode `e` replays exogenous day `first_day + e` with pooled wind day
/// `(first_day + e) mod |pool|`.
pub fn run_training(
    cfg: &EnvConfig,
    master: u64,
    pool: &WindPool,
    rule: &PriceRule,
    mut agents: Agents,
    opts: &TrainingOptions,
) -> Result<TrainingRun> {
    let mut history = Vec::with_capacity(opts.episodes);
    let mut logs = Vec::new();
    for e in 0..opts.episodes {
        let day = opts.first_day + e;
        let exo = generate_exogenous(cfg, master, day, pool.get(day))?;
        let log = run_episode(cfg, exo, e, opts.episodes, &mut agents, rule, opts.mode)?;
        history.push(log.summary.clone());
        if opts.episodes - e <= opts.keep_logs {
            logs.push(log);
        }
        if let (Some(every), Some(dir)) = (opts.checkpoint_every, &opts.checkpoint_dir) {
            if every > 0 && (e + 1) % every == 0 {
                agents.save(dir)?;
            }
        }
    }
    Ok(TrainingRun {
        agents,
        history,
        logs,
    })
}
