//! Oracles and harnesses shared by the integration and acceptance tests.
#![allow(dead_code)]

use gridmarl::ddpg::{actor_objective_gradient, AgentConfig, DdpgAgent, NoiseSchedule, Transition};
use gridmarl::env::{generate_exogenous, EnvConfig, MarketEnv, WindDay};
use gridmarl::market::Market;
use gridmarl::nn::gradcheck::check_gradients;
use gridmarl::nn::recurrent::{gru_cell_backward, lstm_cell_backward};
use gridmarl::nn::{
    gru_cell_step, lstm_cell_step, lstm_sequence_gradients, Activation, CellKind, GradStore,
    GruCellParams, LstmCellParams, Mlp, MlpSpec, Mode, OptimizerConfig, ParamStore, SequenceModel,
    SequenceSpec,
};
use gridmarl::retail::PriceSignal;
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = gridmarl::nn::gradcheck::DEFAULT_STEP;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(r: &mut ChaCha8Rng, dim: (usize, usize), scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn(dim, || r.random_range(-scale..scale))
}

fn weighted_sum(y: &Array2<f64>, w: &Array2<f64>) -> f64 {
    (y * w).sum()
}

// ------------------------------------------------------------ gradients ----

pub fn mlp_grad_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let spec = MlpSpec::new(
        4,
        vec![6, 5, 3],
        vec![Activation::Tanh, Activation::Sigmoid, Activation::Linear],
    );
    let mut net = Mlp::new(spec.clone(), &mut r).unwrap();
    let x = uniform(&mut r, (5, 4), 1.5);
    let w = uniform(&mut r, (5, 3), 1.0);
    net.forward(&x, Mode::Train).unwrap();
    let (grads, _) = net.backward(&w).unwrap();
    check_gradients(&net.params, &grads, FD_STEP, |p| {
        Ok(weighted_sum(
            &Mlp::from_params(spec.clone(), p.clone())?.predict(&x)?,
            &w,
        ))
    })
    .unwrap()
    .max_relative_error
}

pub fn batchnorm_grad_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let spec = MlpSpec::new(3, vec![5, 2], vec![Activation::Tanh, Activation::Linear])
        .with_batch_norm([0]);
    let mut net = Mlp::new(spec.clone(), &mut r).unwrap();
    let x = uniform(&mut r, (6, 3), 2.0);
    let w = uniform(&mut r, (6, 2), 1.0);
    net.forward(&x, Mode::Train).unwrap();
    let (grads, _) = net.backward(&w).unwrap();
    check_gradients(&net.params, &grads, FD_STEP, |p| {
        let mut probe = Mlp::from_params(spec.clone(), p.clone())?;
        Ok(weighted_sum(&probe.forward(&x, Mode::Train)?, &w))
    })
    .unwrap()
    .max_relative_error
}

const LSTM_NAMES: [&str; 8] = ["w_f", "w_i", "w_o", "w_c", "b_f", "b_i", "b_o", "b_c"];

fn lstm_store(p: &LstmCellParams, x: &Array2<f64>, h: &Array2<f64>, c: &Array2<f64>) -> ParamStore {
    let mut s = ParamStore::new();
    let arrays = [
        &p.w_f, &p.w_i, &p.w_o, &p.w_c, &p.b_f, &p.b_i, &p.b_o, &p.b_c,
    ];
    for (n, a) in LSTM_NAMES.iter().zip(arrays) {
        s.insert(*n, a.clone()).unwrap();
    }
    s.insert("x", x.clone()).unwrap();
    s.insert("h_prev", h.clone()).unwrap();
    s.insert("c_prev", c.clone()).unwrap();
    s
}

fn lstm_from_store(s: &ParamStore, hidden: usize) -> LstmCellParams {
    let g = |n: &str| s.get(n).unwrap().clone();
    LstmCellParams {
        w_f: g("w_f"),
        w_i: g("w_i"),
        w_o: g("w_o"),
        w_c: g("w_c"),
        b_f: g("b_f"),
        b_i: g("b_i"),
        b_o: g("b_o"),
        b_c: g("b_c"),
        hidden_size: hidden,
    }
}

/// One cell step, checked with respect to weights, input and both states.
pub fn lstm_cell_grad_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (batch, input, hidden) = (3, 2, 4);
    let p = LstmCellParams::random(input, hidden, &mut r);
    let x = uniform(&mut r, (batch, input), 1.0);
    let h = uniform(&mut r, (batch, hidden), 1.0);
    let c = uniform(&mut r, (batch, hidden), 1.0);
    let wh = uniform(&mut r, (batch, hidden), 1.0);
    let wc = uniform(&mut r, (batch, hidden), 1.0);
    let (_, _, cache) = lstm_cell_step(&p, &x, &h, &c).unwrap();
    let (g, dx, dh, dc) = lstm_cell_backward(&p, &cache, &wh, &wc);
    let analytic = lstm_store(&g, &dx, &dh, &dc);
    check_gradients(&lstm_store(&p, &x, &h, &c), &analytic, FD_STEP, |s| {
        let cell = lstm_from_store(s, hidden);
        let (h1, c1, _) = lstm_cell_step(
            &cell,
            s.get("x").unwrap(),
            s.get("h_prev").unwrap(),
            s.get("c_prev").unwrap(),
        )?;
        Ok(weighted_sum(&h1, &wh) + weighted_sum(&c1, &wc))
    })
    .unwrap()
    .max_relative_error
}

const GRU_NAMES: [&str; 9] = [
    "w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h",
];

fn gru_store(p: &GruCellParams, x: &Array2<f64>, h: &Array2<f64>) -> ParamStore {
    let mut s = ParamStore::new();
    let arrays = [
        &p.w_z, &p.w_r, &p.w_h, &p.u_z, &p.u_r, &p.u_h, &p.b_z, &p.b_r, &p.b_h,
    ];
    for (n, a) in GRU_NAMES.iter().zip(arrays) {
        s.insert(*n, a.clone()).unwrap();
    }
    s.insert("x", x.clone()).unwrap();
    s.insert("h_prev", h.clone()).unwrap();
    s
}

fn gru_from_store(s: &ParamStore) -> GruCellParams {
    let g = |n: &str| s.get(n).unwrap().clone();
    GruCellParams {
        w_z: g("w_z"),
        w_r: g("w_r"),
        w_h: g("w_h"),
        u_z: g("u_z"),
        u_r: g("u_r"),
        u_h: g("u_h"),
        b_z: g("b_z"),
        b_r: g("b_r"),
        b_h: g("b_h"),
    }
}

pub fn gru_cell_grad_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (batch, input, hidden) = (3, 2, 4);
    let p = GruCellParams::random(input, hidden, &mut r);
    let x = uniform(&mut r, (batch, input), 1.0);
    let h = uniform(&mut r, (batch, hidden), 1.0);
    let w = uniform(&mut r, (batch, hidden), 1.0);
    let (_, cache) = gru_cell_step(&p, &x, &h).unwrap();
    let (g, dx, dh) = gru_cell_backward(&p, &cache, &w);
    check_gradients(
        &gru_store(&p, &x, &h),
        &gru_store(&g, &dx, &dh),
        FD_STEP,
        |s| {
            let (h1, _) = gru_cell_step(
                &gru_from_store(s),
                s.get("x").unwrap(),
                s.get("h_prev").unwrap(),
            )?;
            Ok(weighted_sum(&h1, &w))
        },
    )
    .unwrap()
    .max_relative_error
}

/// Two stacked layers unrolled over six steps with a linear head.
pub fn sequence_grad_error(kind: CellKind, seed: u64) -> f64 {
    let mut r = rng(seed);
    let spec = SequenceSpec {
        kind,
        input_size: 3,
        hidden_size: 4,
        layers: 2,
        output_size: 2,
    };
    let mut model = SequenceModel::new(spec.clone(), &mut r).unwrap();
    let x = Array3::from_shape_simple_fn((3, 6, 3), || r.random_range(-1.0..1.0));
    let w = uniform(&mut r, (3, 2), 1.0);
    let grads: GradStore = lstm_sequence_gradients(&mut model, &x, &w).unwrap();
    check_gradients(&model.params, &grads, FD_STEP, |p| {
        Ok(weighted_sum(
            &SequenceModel::from_params(spec.clone(), p.clone())?.predict(&x)?,
            &w,
        ))
    })
    .unwrap()
    .max_relative_error
}

pub fn composed_config(out: Activation, low: f64, high: f64) -> AgentConfig {
    AgentConfig {
        obs_dim: 4,
        act_dim: 1,
        act_low: vec![low],
        act_high: vec![high],
        gamma: 0.95,
        tau: 0.005,
        batch_size: 8,
        hidden_layers: vec![7, 5],
        actor_hidden_activation: Activation::LeakyRelu,
        actor_output_activation: out,
        critic_hidden_activation: Activation::Relu,
        batch_norm: true,
        actor_optimizer: OptimizerConfig::sgd(1e-3, 0.8),
        critic_optimizer: OptimizerConfig::adamw(1e-3),
        noise: NoiseSchedule {
            initial: 0.5,
            final_std: 0.05,
            decay_fraction: 0.8,
        },
        buffer_capacity: 100,
        warmup: Some(8),
        grad_clip: Some(10.0),
    }
}

/// Policy objective gradient through the critic into the actor, with batch
/// normalization in both networks. The two output squashings of the agents
/// alternate by seed.
pub fn composed_grad_error(seed: u64) -> f64 {
    let cfg = if seed.is_multiple_of(2) {
        composed_config(Activation::Tanh, -2.0, 2.0)
    } else {
        composed_config(Activation::Sigmoid, 0.05, 0.2)
    };
    let mut agent =
        DdpgAgent::new(cfg.clone(), gridmarl::data::StreamRng::seed_from_u64(seed)).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    let states = uniform(&mut r, (6, cfg.obs_dim), 1.5);
    let (_, grads) =
        actor_objective_gradient(&mut agent.actor, &mut agent.critic, &cfg, &states).unwrap();
    let critic = agent.critic.clone();
    let spec = agent.actor.spec().clone();
    check_gradients(&agent.actor.params, &grads, FD_STEP, |p| {
        let mut actor = Mlp::from_params(spec.clone(), p.clone())?;
        let mut critic = critic.clone();
        Ok(actor_objective_gradient(&mut actor, &mut critic, &cfg, &states)?.0)
    })
    .unwrap()
    .max_relative_error
}

// ------------------------------------------------------------- dispatch ----

pub const GRID_MW: f64 = 1e-3;

/// Least total cost over a 1 kW grid of the first generator's output,
/// plus the points where some unit reaches a limit. Wind is offered below
/// every conventional marginal cost, so for each candidate it absorbs as
/// much of the residual as it can and the second generator takes the rest.
pub fn grid_cost(market: &Market, demand: f64, wind: f64) -> Option<f64> {
    let g1 = &market.generators[0];
    let g2 = &market.generators[1];
    let top = g1.p_max.min(demand);
    let steps = (top / GRID_MW).floor() as usize;
    let breakpoints = [demand - wind, demand - wind - g2.p_max, top];
    let candidates = (0..=steps)
        .map(|k| k as f64 * GRID_MW)
        .chain(breakpoints.into_iter().filter(|p| (0.0..=top).contains(p)));
    let mut best: Option<f64> = None;
    for p1 in candidates {
        let residual = demand - p1;
        let w = residual.min(wind);
        let p2 = residual - w;
        if p2 > g2.p_max + 1e-12 {
            continue;
        }
        let cost = g1.cost(p1) + g2.cost(p2) + market.wind.offer_price * w;
        best = Some(best.map_or(cost, |b: f64| b.min(cost)));
    }
    best
}

/// One-sided slopes of the grid cost around `demand`; a clearing price
/// must lie between them.
pub fn grid_lmp_bracket(market: &Market, demand: f64, wind: f64) -> (f64, f64) {
    let d = 0.01;
    let c0 = grid_cost(market, demand, wind).unwrap();
    let up = (grid_cost(market, demand + d, wind).unwrap() - c0) / d;
    let down = if demand >= d {
        (c0 - grid_cost(market, demand - d, wind).unwrap()) / d
    } else {
        up
    };
    (down.min(up), down.max(up))
}

// ----------------------------------------------------------------- DDPG ----

pub const BOWL_TARGET: f64 = 0.7;

/// One-step task with reward `−(a − 0.7)²` on a fixed state. Returns the
/// greedy action after `steps` environment steps.
pub fn quadratic_bowl(seed: u64, steps: usize) -> f64 {
    let cfg = AgentConfig {
        obs_dim: 1,
        act_dim: 1,
        act_low: vec![-1.0],
        act_high: vec![1.0],
        gamma: 0.0,
        tau: 0.05,
        batch_size: 32,
        hidden_layers: vec![16, 16],
        actor_hidden_activation: Activation::Tanh,
        actor_output_activation: Activation::Tanh,
        critic_hidden_activation: Activation::Tanh,
        batch_norm: false,
        actor_optimizer: OptimizerConfig::adam(1e-3),
        critic_optimizer: OptimizerConfig::adam(1e-2),
        noise: NoiseSchedule {
            initial: 0.5,
            final_std: 0.05,
            decay_fraction: 0.8,
        },
        buffer_capacity: 10_000,
        warmup: Some(64),
        grad_clip: Some(10.0),
    };
    let mut agent = DdpgAgent::new(cfg, gridmarl::data::StreamRng::seed_from_u64(seed)).unwrap();
    let s = vec![1.0];
    for t in 0..steps {
        let noise = 0.5 * (1.0 - t as f64 / steps as f64) + 0.05;
        agent.observe(&s).unwrap();
        let a = agent.act(&s, noise).unwrap();
        let r = -(a[0] - BOWL_TARGET).powi(2);
        agent.remember(Transition {
            s: s.clone(),
            a,
            r,
            s_next: s.clone(),
            terminal: true,
        });
        if agent.ready() {
            agent.train_step().unwrap();
        }
    }
    agent.act_greedy(&s).unwrap()[0]
}

// ----------------------------------------------------------- accounting ----

pub fn sine_wind_day(steps: usize, phase: f64) -> WindDay {
    WindDay {
        actual_mw: (0..steps)
            .map(|t| (25.0 + 20.0 * (t as f64 / 9.0 + phase).sin()).clamp(0.0, 50.0))
            .collect(),
        forecast_mw: (0..24)
            .map(|h| 25.0 + 15.0 * (h as f64 / 2.25 + phase).sin())
            .collect(),
    }
}

/// Rolls one day with random prices and random battery requests.
pub fn random_episode(cfg: &EnvConfig, seed: u64) -> MarketEnv {
    let mut r = rng(seed);
    let wind = sine_wind_day(cfg.steps_per_day, seed as f64);
    let exo = generate_exogenous(cfg, seed, seed as usize, &wind).unwrap();
    let mut env = MarketEnv::reset(cfg, exo, seed as usize).unwrap();
    while !env.is_done() {
        let t = env.step_index();
        let price = PriceSignal {
            sell: r.random_range(0.0..0.3),
            buy: r.random_range(0.0..0.3),
            interval: t,
        };
        let actions: Vec<f64> = (0..cfg.prosumers)
            .map(|_| r.random_range(-3.0..3.0))
            .collect();
        env.step(price, &actions).unwrap();
    }
    env
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Returns the first violated identity of the episode, if any.
pub fn accounting_violation(cfg: &EnvConfig, env: &MarketEnv) -> Option<String> {
    let dt = cfg.dt();
    let mut reward_sums = vec![0.0; cfg.prosumers];
    let mut bill_sums = vec![0.0; cfg.prosumers];
    for (rec, s) in env.records().iter().zip(env.settlements()) {
        let t = rec.step;
        let bills: f64 = s.bills.iter().sum();
        if !rel_close(s.retail_revenue - s.buyback_cost, bills, 1e-9) {
            return Some(format!("step {t}: revenue − buyback ≠ Σ bills"));
        }
        let recomputed: f64 = rec
            .households
            .iter()
            .map(|h| if h.e >= 0.0 { h.e * s.price.buy } else { h.e * s.price.sell } * dt)
            .sum();
        if !rel_close(bills, recomputed, 1e-9) {
            return Some(format!("step {t}: Σ bills ≠ Σ e·price·dt"));
        }
        let l_d: f64 = rec.households.iter().map(|h| h.e).sum();
        if !rel_close(l_d, rec.l_d_kw, 1e-9)
            || !rel_close(rec.imports_kw - rec.exports_kw, l_d, 1e-9)
        {
            return Some(format!("step {t}: aggregate load does not close"));
        }
        if !rel_close(
            s.procurement_cost,
            rec.l_d_kw / 1000.0 * rec.lmp_rt * dt,
            1e-9,
        ) {
            return Some(format!("step {t}: procurement ≠ L·ρ·dt"));
        }
        let supply = rec.conventional_mw + rec.wind_mw;
        if rec.feasible && !rel_close(supply, rec.demand_mw, 1e-9) {
            return Some(format!(
                "step {t}: supply {supply} ≠ demand {}",
                rec.demand_mw
            ));
        }
        for (i, h) in rec.households.iter().enumerate().take(cfg.prosumers) {
            if h.e != h.d - h.g - h.b {
                return Some(format!("step {t}: prosumer {i} net load"));
            }
            reward_sums[i] += rec.pa_rewards[i];
            bill_sums[i] += -h.bill;
        }
    }
    for i in 0..cfg.prosumers {
        if reward_sums[i] != bill_sums[i] {
            return Some(format!(
                "prosumer {i}: Σ reward {} ≠ −Σ bill {}",
                reward_sums[i], bill_sums[i]
            ));
        }
    }
    None
}

// ---------------------------------------------------------- forecasting ----

pub const SINE_SIGMA: f64 = 1.0;

/// Test RMSE of the preset forecaster and of 24-hour persistence on sixty
/// days of `20 + 10·sin(2πh/24) + σε`.
pub fn sinusoid_rmse(seed: u64) -> (f64, f64) {
    let mut cfg = gridmarl::config::ScenarioConfig::test_preset();
    cfg.seed = seed;
    let records = gridmarl::data::sinusoid_records(
        24 * 60,
        10.0,
        20.0,
        SINE_SIGMA,
        &mut gridmarl::data::stream(seed, "sin"),
    );
    let fit = gridmarl::scenarios::fit_forecaster(&cfg, &records, &cfg.forecaster).unwrap();
    (fit.metrics.rmse, fit.persistence.rmse)
}

/// One regime-shift wind series shared by every architecture and seed.
pub fn regime_records() -> Vec<gridmarl::forecast::WindRecord> {
    let spec = gridmarl::data::WindSynthSpec::regime_shift(60);
    gridmarl::data::synthesize_wind(&spec, &mut gridmarl::data::stream(7, "data")).unwrap()
}

/// Test RMSE of one cell kind at the preset width, depth and epochs.
pub fn architecture_rmse(
    records: &[gridmarl::forecast::WindRecord],
    kind: CellKind,
    seed: u64,
) -> f64 {
    let mut cfg = gridmarl::config::ScenarioConfig::test_preset();
    cfg.seed = seed;
    let fc = gridmarl::forecast::ForecasterConfig {
        kind,
        ..cfg.forecaster.clone()
    };
    gridmarl::scenarios::fit_forecaster(&cfg, records, &fc)
        .unwrap()
        .metrics
        .rmse
}

pub struct CaseGaps {
    pub forecaster_rmse: f64,
    /// Mean |ρ^RT − ρ^DA| on days whose regime differs from the day before.
    pub shift_band: f64,
    pub shift_forecaster: f64,
    /// The same on days that repeat the previous day's wind.
    pub repeat_band: f64,
    pub repeat_forecaster: f64,
}

/// Both forecast cases at the fixed tariff on the held-out days of the
/// regime-shift series. Pool day `i` replays data day `i + 1`; data days
/// cycle A, A′, B, so pool days with `i % 3 == 0` repeat and `i % 3 == 1`
/// switch regime.
pub fn regime_case_gaps() -> CaseGaps {
    let mut cfg = gridmarl::config::ScenarioConfig::test_preset();
    cfg.wind =
        gridmarl::config::WindSource::Synthetic(gridmarl::data::WindSynthSpec::regime_shift(60));
    let data = gridmarl::scenarios::WindData::load(&cfg).unwrap();
    let fit = gridmarl::scenarios::fit_forecaster(&cfg, &data.raw, &cfg.forecaster).unwrap();
    let held_out: Vec<usize> = (47..59).collect();
    let gridmarl::scenarios::PolicyKind::Fixed { price } =
        gridmarl::scenarios::PricingPolicy::builtin("fixed", &cfg)
            .unwrap()
            .kind
    else {
        unreachable!("fixed policy")
    };
    let gaps = |days: Vec<usize>| {
        let c = gridmarl::scenarios::run_case_comparison(
            &cfg.env, cfg.seed, &data, &fit.model, &days, price,
        )
        .unwrap();
        (c.margin.lmp_gap_mean, c.forecaster.lmp_gap_mean)
    };
    let (shift_band, shift_forecaster) =
        gaps(held_out.iter().copied().filter(|i| i % 3 == 1).collect());
    let (repeat_band, repeat_forecaster) =
        gaps(held_out.iter().copied().filter(|i| i % 3 == 0).collect());
    CaseGaps {
        forecaster_rmse: fit.metrics.rmse,
        shift_band,
        shift_forecaster,
        repeat_band,
        repeat_forecaster,
    }
}

// ------------------------------------------------------------------ CLI ----

/// Test preset shrunk to a few seconds per command.
pub fn small_config() -> gridmarl::config::ScenarioConfig {
    let mut cfg = gridmarl::config::ScenarioConfig::test_preset();
    cfg.training.episodes = 6;
    cfg.training.eval_days = 3;
    cfg.forecaster.epochs = 3;
    if let gridmarl::config::WindSource::Synthetic(spec) = &mut cfg.wind {
        spec.days = 20;
    }
    cfg
}

pub fn cli(args: &[&str]) -> i32 {
    gridmarl::cli::run(std::iter::once("gridmarl").chain(args.iter().copied()))
}
