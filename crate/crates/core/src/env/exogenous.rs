use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::stream;
use crate::data::synth::{synthesize_day, Weather};
use crate::env::{EnvConfig, FORECAST_SLOTS};
use crate::error::{Error, Result};

/// Realized wind at the market resolution and the hourly forecast issued
/// for it the day before, MW.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindDay {
    pub actual_mw: Vec<f64>,
    pub forecast_mw: Vec<f64>,
}

/// Wind days replayed cyclically across episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindPool {
    days: Vec<WindDay>,
}

impl WindPool {
    pub fn new(days: Vec<WindDay>) -> Result<Self> {
        if days.is_empty() {
            return Err(Error::EmptyInput("wind pool has no days".into()));
        }
        if let Some(d) = days.iter().find(|d| d.forecast_mw.len() != FORECAST_SLOTS) {
            return Err(Error::shape(
                "pooled wind forecast",
                FORECAST_SLOTS,
                d.forecast_mw.len(),
            ));
        }
        Ok(Self { days })
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn days(&self) -> &[WindDay] {
        &self.days
    }

    pub fn get(&self, episode: usize) -> &WindDay {
        &self.days[episode % self.days.len()]
    }
}

/// Everything about one day that the agents cannot influence.
#[derive(Clone, Debug, PartialEq)]
pub struct ExogenousDay {
    pub index: usize,
    pub weather: Weather,
    /// `demand[h][t]`, kW, prosumers first.
    pub demand: Vec<Vec<f64>>,
    pub pv: Vec<Vec<f64>>,
    /// The LSE's day-ahead load bid, kW.
    pub l_da_kw: Vec<f64>,
    pub wind_rt_mw: Vec<f64>,
    /// Hourly forecast used in the day-ahead market and shown to the LSA.
    pub wind_forecast_mw: Option<Vec<f64>>,
}

impl ExogenousDay {
    pub fn check(&self, cfg: &EnvConfig) -> Result<()> {
        let h = cfg.prosumers + cfg.consumers;
        let n = cfg.steps_per_day;
        if self.demand.len() != h || self.pv.len() != h {
            return Err(Error::shape("household profiles", h, self.demand.len()));
        }
        if let Some(row) = self.demand.iter().chain(&self.pv).find(|r| r.len() != n) {
            return Err(Error::shape("household profile steps", n, row.len()));
        }
        if self.l_da_kw.len() != n || self.wind_rt_mw.len() != n {
            return Err(Error::shape(
                "day series",
                n,
                self.l_da_kw.len().min(self.wind_rt_mw.len()),
            ));
        }
        Ok(())
    }

    /// Day-ahead wind per interval: the hourly forecast held over each hour,
    /// or the realized wind when no forecast exists.
    pub fn da_wind_mw(&self, cfg: &EnvConfig) -> Vec<f64> {
        match &self.wind_forecast_mw {
            Some(f) => (0..cfg.steps_per_day)
                .map(|t| f[t / cfg.steps_per_hour()])
                .collect(),
            None => self.wind_rt_mw.clone(),
        }
    }
}

/// Household profiles for `day` from stream `exo/{day}`; the day-ahead bid
/// is the previous day's idle-battery aggregate with multiplicative
/// Gaussian error from stream `da_noise/{day}`.
pub fn generate_exogenous(
    cfg: &EnvConfig,
    master: u64,
    day: usize,
    wind: &WindDay,
) -> Result<ExogenousDay> {
    let n = cfg.steps_per_day;
    if wind.actual_mw.len() != n {
        return Err(Error::shape("wind day", n, wind.actual_mw.len()));
    }
    let synth = |name: String| {
        synthesize_day(
            &cfg.households,
            cfg.prosumers,
            cfg.consumers,
            n,
            &mut stream(master, &name),
        )
    };
    let today = synth(format!("exo/{day}"))?;
    let yesterday = synth(format!("exo/{}", day as i64 - 1))?;
    let mut noise = stream(master, &format!("da_noise/{day}"));
    let l_da_kw = yesterday
        .baseline_load()
        .into_iter()
        .map(|l| {
            let z: f64 = StandardNormal.sample(&mut noise);
            l * (1.0 + cfg.da_load_noise * z)
        })
        .collect();
    Ok(ExogenousDay {
        index: day,
        weather: today.weather,
        demand: today.demand,
        pv: today.pv,
        l_da_kw,
        wind_rt_mw: wind
            .actual_mw
            .iter()
            .map(|w| w.clamp(0.0, cfg.market.wind.p_max))
            .collect(),
        wind_forecast_mw: Some(wind.forecast_mw.clone()),
    })
}
