//! The retail market seen by the load-serving agent (LSA) and the prosumer
//! agents (PA): observations, rewards and the 15-minute step.

pub mod exogenous;
pub mod log;
pub mod normalizer;
pub mod training;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::data::synth::{HouseholdProfileSpec, Weather};
use crate::error::{Error, Result};
use crate::market::{DispatchResult, Market};
use crate::retail::{
    aggregate_load, battery_step, bill_increment, lse_total_cost, peak_to_average,
    prosumer_net_load, settle_interval, BatterySpec, IntervalSettlement, PriceSignal,
};

pub use exogenous::{generate_exogenous, ExogenousDay, WindDay, WindPool};
pub use log::{
    read_episode_log, write_episode_log, EpisodeLog, EpisodeSummary, HouseholdRow, StepRecord,
};
pub use normalizer::{normalize_observation, ObservationNormalizer};
pub use training::{run_training, Agents, TrainingRun};

/// Hourly wind forecast slots in the LSA observation.
pub const FORECAST_SLOTS: usize = 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub steps_per_day: usize,
    pub prosumers: usize,
    pub consumers: usize,
    pub battery: BatterySpec,
    pub households: HouseholdProfileSpec,
    pub market: Market,
    /// Each simulated household stands for many; aggregate kW times this
    /// factor is the MW demand cleared in the wholesale market.
    pub mw_per_kw: f64,
    pub price_low: f64,
    pub price_high: f64,
    /// One LSA action sets both retail prices.
    pub net_metering: bool,
    /// `N`: past retail prices a PA sees besides the current one.
    pub price_history: usize,
    /// `M`: past LMPs the LSA sees besides the current one.
    pub lmp_history: usize,
    /// Relative standard deviation of the day-ahead load bid error.
    pub da_load_noise: f64,
    pub pa_reward_scale: f64,
    pub lsa_reward_scale: f64,
    /// LSA reward on a step whose real-time dispatch is infeasible.
    pub infeasible_penalty: f64,
    /// Append the day's weather label (1 sunny, 0 cloudy) to PA observations.
    pub weather_label: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            steps_per_day: 96,
            prosumers: 3,
            consumers: 2,
            battery: BatterySpec::default(),
            households: HouseholdProfileSpec::default(),
            market: Market::default(),
            mw_per_kw: 6.0,
            price_low: 0.05,
            price_high: 0.20,
            net_metering: true,
            price_history: 20,
            lmp_history: 24,
            da_load_noise: 0.05,
            pa_reward_scale: 1.0,
            lsa_reward_scale: 10.0,
            infeasible_penalty: -10.0,
            weather_label: false,
        }
    }
}

impl EnvConfig {
    /// Interval length, hours.
    pub fn dt(&self) -> f64 {
        24.0 / self.steps_per_day as f64
    }

    pub fn steps_per_hour(&self) -> usize {
        self.steps_per_day / 24
    }

    pub fn pa_obs_dim(&self) -> usize {
        3 + 2 * (self.price_history + 1) + usize::from(self.weather_label)
    }

    pub fn lsa_obs_dim(&self) -> usize {
        FORECAST_SLOTS + 2 * (self.lmp_history + 1) + 3
    }

    pub fn lsa_act_dim(&self) -> usize {
        if self.net_metering {
            1
        } else {
            2
        }
    }

    /// Retail prices from an LSA action: `[price]` under net metering,
    /// otherwise `[sell, buy]`. Clipped into the price range.
    pub fn price_signal(&self, action: &[f64], interval: usize) -> Result<PriceSignal> {
        let clip = |p: f64| p.clamp(self.price_low, self.price_high);
        match action {
            [p] => Ok(PriceSignal::net_metering(clip(*p), interval)),
            [s, b] if !self.net_metering => Ok(PriceSignal {
                sell: clip(*s),
                buy: clip(*b),
                interval,
            }),
            _ => Err(Error::shape("LSA action", self.lsa_act_dim(), action.len())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.steps_per_day == 0 || !self.steps_per_day.is_multiple_of(24) {
            return bad("steps per day must be a positive multiple of 24");
        }
        if self.prosumers + self.consumers == 0 {
            return bad("the network needs at least one household");
        }
        if !(self.mw_per_kw > 0.0) {
            return bad("mw_per_kw must be positive");
        }
        if !(0.0 < self.price_low && self.price_low < self.price_high) {
            return bad("price range must satisfy 0 < low < high");
        }
        if !(self.pa_reward_scale > 0.0 && self.lsa_reward_scale > 0.0) {
            return bad("reward scales must be positive");
        }
        if !(self.da_load_noise >= 0.0) {
            return bad("day-ahead load noise must be non-negative");
        }
        self.battery.validate()?;
        self.market.validate()
    }
}

/// Fixed-depth history, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct History {
    depth: usize,
    values: VecDeque<f64>,
}

impl History {
    pub fn new(depth: usize) -> Self {
        Self {
            depth,
            values: VecDeque::with_capacity(depth + 1),
        }
    }

    pub fn push(&mut self, v: f64) {
        self.values.push_back(v);
        while self.values.len() > self.depth {
            self.values.pop_front();
        }
    }

    /// The last `depth` values followed by `current`, left-padded with the
    /// oldest value available.
    pub fn window_with(&self, current: f64) -> Vec<f64> {
        let pad = self.values.front().copied().unwrap_or(current);
        let mut w = vec![pad; self.depth - self.values.len()];
        w.extend(self.values.iter().copied());
        w.push(current);
        w
    }
}

/// `[d, g, soc, C^s history…, C^b history…]`.
pub fn build_pa_observation(
    d: f64,
    g: f64,
    soc: f64,
    sell_history: &[f64],
    buy_history: &[f64],
) -> Vec<f64> {
    let mut o = Vec::with_capacity(3 + sell_history.len() + buy_history.len());
    o.extend([d, g, soc]);
    o.extend_from_slice(sell_history);
    o.extend_from_slice(buy_history);
    o
}

/// `[wind forecast (24), ρ^DA history, ρ^RT history, L^DA, L^RT, E]`.
pub fn build_lsa_observation(
    forecast: Option<&[f64]>,
    da_history: &[f64],
    rt_history: &[f64],
    l_da: f64,
    l_rt: f64,
    exports: f64,
) -> Result<Vec<f64>> {
    let f = forecast.ok_or_else(|| {
        Error::State("no wind forecast for this day; issue one with predict_day_ahead first".into())
    })?;
    if f.len() != FORECAST_SLOTS {
        return Err(Error::shape("wind forecast", FORECAST_SLOTS, f.len()));
    }
    let mut o = Vec::with_capacity(FORECAST_SLOTS + da_history.len() + rt_history.len() + 3);
    o.extend_from_slice(f);
    o.extend_from_slice(da_history);
    o.extend_from_slice(rt_history);
    o.extend([l_da, l_rt, exports]);
    Ok(o)
}

/// The negated bill increment.
pub fn pa_reward(e: f64, price: &PriceSignal, dt: f64) -> f64 {
    -bill_increment(e, price, dt)
}

/// `[sales·sell_price − buyback·buyback_price − supply·ρ]·dt`. Loads,
/// supply and prices must be in units whose products agree.
pub fn lsa_reward(
    sales: f64,
    sell_price: f64,
    buyback: f64,
    buyback_price: f64,
    supply: f64,
    rho: f64,
    dt: f64,
) -> f64 {
    (sales * sell_price - buyback * buyback_price - supply * rho) * dt
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub pa_rewards: Vec<f64>,
    pub lsa_reward: f64,
    pub record: StepRecord,
    pub settlement: IntervalSettlement,
    pub dispatch: DispatchResult,
    pub terminal: bool,
    pub truncated: bool,
}

/// One day of the market.
#[derive(Clone, Debug)]
pub struct MarketEnv {
    cfg: EnvConfig,
    day: ExogenousDay,
    episode: usize,
    da: Vec<DispatchResult>,
    t: usize,
    soc: Vec<f64>,
    sell_hist: History,
    buy_hist: History,
    rt_lmps: Vec<f64>,
    last_l_rt: f64,
    last_exports: f64,
    prev_outputs: Option<Vec<f64>>,
    done: bool,
    truncated: bool,
    records: Vec<StepRecord>,
    settlements: Vec<IntervalSettlement>,
}

impl MarketEnv {
    /// Starts a day: batteries at their initial charge and the day-ahead
    /// market cleared against the bid load and the forecast wind.
    pub fn reset(cfg: &EnvConfig, day: ExogenousDay, episode: usize) -> Result<Self> {
        cfg.validate()?;
        day.check(cfg)?;
        let da_load: Vec<f64> = day
            .l_da_kw
            .iter()
            .map(|l| l.max(0.0) * cfg.mw_per_kw)
            .collect();
        let da = crate::market::clear_day_ahead(&da_load, &day.da_wind_mw(cfg), &cfg.market)?
            .into_iter()
            .map(|c| c.result)
            .collect();
        Ok(Self {
            soc: vec![cfg.battery.soc0; cfg.prosumers],
            sell_hist: History::new(cfg.price_history),
            buy_hist: History::new(cfg.price_history),
            rt_lmps: Vec::with_capacity(cfg.steps_per_day),
            last_l_rt: day.l_da_kw[0],
            last_exports: 0.0,
            prev_outputs: None,
            done: false,
            truncated: false,
            records: Vec::with_capacity(cfg.steps_per_day),
            settlements: Vec::with_capacity(cfg.steps_per_day),
            t: 0,
            da,
            day,
            episode,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn day(&self) -> &ExogenousDay {
        &self.day
    }

    pub fn step_index(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn soc(&self) -> &[f64] {
        &self.soc
    }

    pub fn day_ahead(&self) -> &[DispatchResult] {
        &self.da
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn settlements(&self) -> &[IntervalSettlement] {
        &self.settlements
    }

    /// Index clamped to the day, so observations after the last step
    /// repeat the final interval's exogenous values.
    fn slot(&self) -> usize {
        self.t.min(self.cfg.steps_per_day - 1)
    }

    /// PA `i` observing the price about to apply.
    pub fn pa_observation(&self, i: usize, price: &PriceSignal) -> Result<Vec<f64>> {
        if i >= self.cfg.prosumers {
            return Err(Error::Input(format!("no prosumer {i}")));
        }
        let t = self.slot();
        let mut o = build_pa_observation(
            self.day.demand[i][t],
            self.day.pv[i][t],
            self.soc[i],
            &self.sell_hist.window_with(price.sell),
            &self.buy_hist.window_with(price.buy),
        );
        if self.cfg.weather_label {
            o.push(if self.day.weather == Weather::Sunny {
                1.0
            } else {
                0.0
            });
        }
        Ok(o)
    }

    pub fn last_price(&self) -> Option<PriceSignal> {
        self.records.last().map(|r| PriceSignal {
            sell: r.c_s,
            buy: r.c_b,
            interval: r.step,
        })
    }

    pub fn lsa_observation(&self) -> Result<Vec<f64>> {
        let t = self.slot();
        let m = self.cfg.lmp_history;
        let pad = self.da[0].lmp;
        let da_hist: Vec<f64> = (0..=m)
            .map(|k| {
                let idx = t as isize - (m - k) as isize;
                if idx < 0 {
                    pad
                } else {
                    self.da[idx as usize].lmp
                }
            })
            .collect();
        let n = self.rt_lmps.len();
        let rt_hist: Vec<f64> = (0..=m)
            .map(|k| {
                let back = m + 1 - k;
                if back > n {
                    pad
                } else {
                    self.rt_lmps[n - back]
                }
            })
            .collect();
        build_lsa_observation(
            self.day.wind_forecast_mw.as_deref(),
            &da_hist,
            &rt_hist,
            self.day.l_da_kw[t],
            self.last_l_rt,
            self.last_exports,
        )
    }

    /// Prices broadcast, batteries move, the aggregate clears in real time,
    /// and the interval settles.
    pub fn step(&mut self, price: PriceSignal, pa_actions: &[f64]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::State(
                "episode is over; reset the environment".into(),
            ));
        }
        if pa_actions.len() != self.cfg.prosumers {
            return Err(Error::shape(
                "PA actions",
                self.cfg.prosumers,
                pa_actions.len(),
            ));
        }
        let cfg = &self.cfg;
        let t = self.t;
        let dt = cfg.dt();
        let price = PriceSignal {
            sell: price.sell.clamp(cfg.price_low, cfg.price_high),
            buy: price.buy.clamp(cfg.price_low, cfg.price_high),
            interval: t,
        };

        let mut households = Vec::with_capacity(cfg.prosumers + cfg.consumers);
        let mut net = Vec::with_capacity(cfg.prosumers + cfg.consumers);
        for (i, &requested) in pa_actions.iter().enumerate() {
            let (d, g) = (self.day.demand[i][t], self.day.pv[i][t]);
            let soc_before = self.soc[i];
            let (b, soc) = battery_step(&cfg.battery, soc_before, requested, dt);
            self.soc[i] = soc;
            let e = prosumer_net_load(d, g, b);
            net.push(e);
            households.push(HouseholdRow {
                d,
                g,
                soc_before,
                b,
                soc,
                e,
                bill: 0.0,
            });
        }
        let consumer_d: Vec<f64> = (cfg.prosumers..cfg.prosumers + cfg.consumers)
            .map(|h| self.day.demand[h][t])
            .collect();
        for &d in &consumer_d {
            net.push(d);
            households.push(HouseholdRow {
                d,
                g: 0.0,
                soc_before: 0.0,
                b: 0.0,
                soc: 0.0,
                e: d,
                bill: 0.0,
            });
        }
        let l_d = aggregate_load(&consumer_d, &net[..cfg.prosumers]);

        let demand_mw = l_d.max(0.0) * cfg.mw_per_kw;
        let wind_available = self.day.wind_rt_mw[t];
        let dispatch =
            cfg.market
                .dispatch(demand_mw, wind_available, self.prev_outputs.as_deref())?;
        let rho = dispatch.lmp;
        let procurement = l_d / 1000.0 * rho * dt;
        let settlement = settle_interval(t, &net, price, procurement, dt);
        for (h, bill) in households.iter_mut().zip(&settlement.bills) {
            h.bill = *bill;
        }
        let imports = IntervalSettlement::imports(&net);
        let exports = IntervalSettlement::exports(&net);

        let pa_rewards: Vec<f64> = net[..cfg.prosumers]
            .iter()
            .map(|&e| pa_reward(e, &price, dt) / cfg.pa_reward_scale)
            .collect();
        let truncated = !dispatch.feasible;
        let raw = if truncated {
            cfg.infeasible_penalty
        } else {
            lsa_reward(
                imports,
                price.buy,
                exports,
                price.sell,
                l_d / 1000.0,
                rho,
                dt,
            )
        };
        let lsa = raw / cfg.lsa_reward_scale;

        let record = StepRecord {
            episode: self.episode,
            step: t,
            c_s: price.sell,
            c_b: price.buy,
            l_da_kw: self.day.l_da_kw[t],
            l_d_kw: l_d,
            imports_kw: imports,
            exports_kw: exports,
            demand_mw,
            wind_available_mw: wind_available,
            wind_mw: dispatch.wind_dispatched,
            conventional_mw: dispatch.conventional(),
            lmp_da: self.da[t].lmp,
            lmp_rt: rho,
            retail_revenue: settlement.retail_revenue,
            buyback_cost: settlement.buyback_cost,
            procurement_cost: settlement.procurement_cost,
            lsa_reward: lsa,
            pa_rewards: pa_rewards.clone(),
            feasible: dispatch.feasible,
            households,
        };

        self.sell_hist.push(price.sell);
        self.buy_hist.push(price.buy);
        self.rt_lmps.push(rho);
        self.last_l_rt = l_d;
        self.last_exports = exports;
        self.prev_outputs = Some(dispatch.outputs.clone());
        self.t += 1;
        self.truncated = truncated;
        self.done = truncated || self.t == cfg.steps_per_day;
        self.records.push(record.clone());
        self.settlements.push(settlement.clone());

        Ok(StepOutcome {
            pa_rewards,
            lsa_reward: lsa,
            record,
            settlement,
            dispatch,
            terminal: self.done,
            truncated,
        })
    }

    /// Day totals: profit after the day-ahead purchase and real-time
    /// deficiency, PAR of the aggregate, and mean bills.
    pub fn summary(&self) -> Result<EpisodeSummary> {
        summarize(&self.cfg, self.episode, &self.records, self.truncated)
    }
}

pub fn summarize(
    cfg: &EnvConfig,
    episode: usize,
    records: &[StepRecord],
    truncated: bool,
) -> Result<EpisodeSummary> {
    let dt = cfg.dt();
    let mw = |kw: f64| kw / 1000.0;
    let l_da: Vec<f64> = records.iter().map(|r| mw(r.l_da_kw)).collect();
    let l_rt: Vec<f64> = records.iter().map(|r| mw(r.l_d_kw)).collect();
    let rho_da: Vec<f64> = records.iter().map(|r| r.lmp_da).collect();
    let rho_rt: Vec<f64> = records.iter().map(|r| r.lmp_rt).collect();
    let buyback: Vec<f64> = records.iter().map(|r| mw(r.exports_kw)).collect();
    let buyback_price: Vec<f64> = records.iter().map(|r| r.c_s * 1000.0).collect();
    let tc = lse_total_cost(&l_da, &rho_da, &l_rt, &rho_rt, &buyback, &buyback_price, dt)?;
    let sales: f64 = records.iter().map(|r| r.retail_revenue).sum();
    let load: Vec<f64> = records.iter().map(|r| r.l_d_kw).collect();
    let bill = |h: usize| records.iter().map(|r| r.households[h].bill).sum::<f64>();
    let mean = |v: Vec<f64>| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let n = records.len().max(1) as f64;
    Ok(EpisodeSummary {
        episode,
        steps: records.len(),
        profit: sales - tc,
        par: peak_to_average(&load),
        bill_mean: mean((0..cfg.prosumers).map(bill).collect()),
        consumer_bill_mean: mean(
            (cfg.prosumers..cfg.prosumers + cfg.consumers)
                .map(bill)
                .collect(),
        ),
        lsa_return: records.iter().map(|r| r.lsa_reward).sum(),
        pa_return_mean: mean(
            (0..cfg.prosumers)
                .map(|i| records.iter().map(|r| r.pa_rewards[i]).sum())
                .collect(),
        ),
        price_mean: records.iter().map(|r| r.c_s).sum::<f64>() / n,
        lmp_gap: records
            .iter()
            .map(|r| (r.lmp_rt - r.lmp_da).abs())
            .sum::<f64>()
            / n,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn flat_day(cfg: &EnvConfig, demand: f64, pv: f64, wind: f64) -> ExogenousDay {
        let h = cfg.prosumers + cfg.consumers;
        let n = cfg.steps_per_day;
        ExogenousDay {
            index: 0,
            weather: Weather::Sunny,
            demand: vec![vec![demand; n]; h],
            pv: (0..h)
                .map(|i| vec![if i < cfg.prosumers { pv } else { 0.0 }; n])
                .collect(),
            l_da_kw: vec![demand * h as f64; n],
            wind_rt_mw: vec![wind; n],
            wind_forecast_mw: Some(vec![wind; FORECAST_SLOTS]),
        }
    }

    #[test]
    fn observation_lengths() {
        let cfg = EnvConfig::default();
        assert_eq!(cfg.pa_obs_dim(), 45);
        assert_eq!(cfg.lsa_obs_dim(), 77);
        let env = MarketEnv::reset(&cfg, flat_day(&cfg, 1.0, 0.5, 10.0), 0).unwrap();
        let p = PriceSignal::net_metering(0.1, 0);
        assert_eq!(env.pa_observation(0, &p).unwrap().len(), 45);
        assert_eq!(env.lsa_observation().unwrap().len(), 77);
    }

    #[test]
    fn first_step_history_is_padded_with_current_price() {
        let cfg = EnvConfig::default();
        let env = MarketEnv::reset(&cfg, flat_day(&cfg, 3.0, 1.0, 10.0), 0).unwrap();
        let o = env
            .pa_observation(0, &PriceSignal::net_metering(0.1, 0))
            .unwrap();
        assert_eq!(&o[..3], &[3.0, 1.0, cfg.battery.soc0]);
        assert!(o[3..24].iter().all(|p| *p == 0.1));
        assert_eq!(&o[3..24], &o[24..45]);
    }

    #[test]
    fn history_keeps_depth_and_pads_with_oldest() {
        let mut h = History::new(3);
        h.push(1.0);
        h.push(2.0);
        assert_eq!(h.window_with(9.0), vec![1.0, 1.0, 2.0, 9.0]);
        for v in [3.0, 4.0, 5.0] {
            h.push(v);
        }
        assert_eq!(h.window_with(9.0), vec![3.0, 4.0, 5.0, 9.0]);
    }

    #[test]
    fn missing_forecast_is_a_state_error() {
        let cfg = EnvConfig::default();
        let mut day = flat_day(&cfg, 1.0, 0.0, 10.0);
        day.wind_forecast_mw = None;
        let env = MarketEnv::reset(&cfg, day, 0).unwrap();
        let err = env.lsa_observation().unwrap_err();
        assert!(matches!(err, Error::State(ref m) if m.contains("predict_day_ahead")));
    }

    #[test]
    fn steady_state_lsa_observation_is_constant() {
        let cfg = EnvConfig::default();
        let mut env = MarketEnv::reset(&cfg, flat_day(&cfg, 1.0, 0.0, 10.0), 0).unwrap();
        let mut obs = Vec::new();
        for _ in 0..5 {
            obs.push(env.lsa_observation().unwrap());
            env.step(PriceSignal::net_metering(0.1, 0), &[0.0; 3])
                .unwrap();
        }
        assert!(obs.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn exports_count_only_sellers() {
        let cfg = EnvConfig {
            prosumers: 1,
            consumers: 0,
            ..EnvConfig::default()
        };
        let mut env = MarketEnv::reset(&cfg, flat_day(&cfg, 1.0, 3.0, 10.0), 0).unwrap();
        env.step(PriceSignal::net_metering(0.1, 0), &[0.0]).unwrap();
        let o = env.lsa_observation().unwrap();
        assert_eq!(o[o.len() - 1], 2.0);
    }

    #[test]
    fn reward_examples() {
        let p = PriceSignal {
            sell: 0.1,
            buy: 0.2,
            interval: 0,
        };
        assert_abs_diff_eq!(pa_reward(1.0, &p, 0.25), -0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(pa_reward(-2.0, &p, 0.25), 0.05, epsilon = 1e-15);
        assert_eq!(pa_reward(0.0, &p, 0.25), 0.0);
        assert_abs_diff_eq!(
            lsa_reward(10.0, 0.1, 0.0, 0.1, 10.0, 0.05, 0.25),
            0.125,
            epsilon = 1e-15
        );
        assert_eq!(lsa_reward(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.25), 0.0);
        assert_abs_diff_eq!(
            lsa_reward(0.0, 0.1, 2.0, 0.1, 0.0, 0.0, 0.25),
            -0.05,
            epsilon = 1e-15
        );
    }

    #[test]
    fn idle_zero_day_is_all_zero() {
        let cfg = EnvConfig::default();
        let mut env = MarketEnv::reset(&cfg, flat_day(&cfg, 0.0, 0.0, 0.0), 0).unwrap();
        let out = env
            .step(PriceSignal::net_metering(0.1, 0), &[0.0; 3])
            .unwrap();
        assert!(out.pa_rewards.iter().all(|r| *r == 0.0));
        assert_eq!(out.lsa_reward, 0.0);
        assert!(env.soc().iter().all(|s| *s == cfg.battery.soc0));
    }

    #[test]
    fn prosumer_offsetting_consumer_zeroes_revenue() {
        let cfg = EnvConfig {
            prosumers: 1,
            consumers: 1,
            ..EnvConfig::default()
        };
        let mut day = flat_day(&cfg, 2.0, 0.0, 10.0);
        day.demand[0] = vec![0.0; cfg.steps_per_day];
        day.pv[0] = vec![2.0; cfg.steps_per_day];
        let mut env = MarketEnv::reset(&cfg, day, 0).unwrap();
        let out = env.step(PriceSignal::net_metering(0.1, 0), &[0.0]).unwrap();
        assert_eq!(out.record.l_d_kw, 0.0);
        assert_abs_diff_eq!(out.settlement.lse_profit(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn horizon_sets_terminal() {
        let cfg = EnvConfig::default();
        let mut env = MarketEnv::reset(&cfg, flat_day(&cfg, 1.0, 0.5, 10.0), 0).unwrap();
        for t in 0..96 {
            let out = env
                .step(PriceSignal::net_metering(0.1, t), &[0.5, -0.5, 0.0])
                .unwrap();
            assert_eq!(out.terminal, t == 95);
        }
        assert!(env
            .step(PriceSignal::net_metering(0.1, 96), &[0.0; 3])
            .is_err());
        let s = env.summary().unwrap();
        assert_eq!(s.steps, 96);
        assert!(s.par.unwrap() >= 1.0);
    }

    #[test]
    fn shortage_truncates_with_penalty() {
        let cfg = EnvConfig {
            mw_per_kw: 1000.0,
            ..EnvConfig::default()
        };
        let mut env = MarketEnv::reset(&cfg, flat_day(&cfg, 1.0, 0.0, 0.0), 0).unwrap();
        let out = env
            .step(PriceSignal::net_metering(0.1, 0), &[0.0; 3])
            .unwrap();
        assert!(out.truncated && out.terminal && !out.record.feasible);
        assert_eq!(
            out.lsa_reward,
            cfg.infeasible_penalty / cfg.lsa_reward_scale
        );
    }
}
