//! Pricing baselines, scenario comparison and the forecast-uncertainty
//! case study.

use std::io::Write;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::config::{ScenarioConfig, WindSource};
use crate::data::synth::synthesize_wind;
use crate::data::{fit_to_capacity, load_wind_csv, stream};
use crate::env::log::EpisodeSummary;
use crate::env::training::{run_training, Agents, PriceRule, TrainingOptions, TrainingRun};
use crate::env::{generate_exogenous, EnvConfig, MarketEnv, WindDay, WindPool};
use crate::error::{Error, Result};
use crate::forecast::preprocess::{impute_missing, resample, resample_hourly};
use crate::forecast::preprocess::{prepare, PreparedData};
use crate::forecast::{
    eval_metrics, persistence_forecast, predict_day_ahead, train_forecaster, ForecasterConfig,
    ForecasterModel, Metrics, WindRecord,
};
use crate::retail::PriceSignal;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    Fixed {
        price: f64,
    },
    /// Hourly tariff, held over each hour.
    Tou {
        hourly: Vec<f64>,
    },
    /// LSA agent reading the trained forecaster.
    DynamicDdpg,
    /// LSA agent reading the persistence band instead.
    DynamicDdpgUncertaintyMargin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PricingPolicy {
    pub name: String,
    #[serde(flatten)]
    pub kind: PolicyKind,
}

impl PricingPolicy {
    /// `fixed`, `tou_a`, `tou_b`, `dynamic` or `margin`. The fixed price is
    /// the time average of `tou_a`.
    pub fn builtin(name: &str, cfg: &ScenarioConfig) -> Result<Self> {
        let p = &cfg.pricing;
        let kind = match name {
            "fixed" => PolicyKind::Fixed {
                price: p.tou_a.iter().sum::<f64>() / p.tou_a.len() as f64,
            },
            "tou_a" => PolicyKind::Tou {
                hourly: p.tou_a.clone(),
            },
            "tou_b" => PolicyKind::Tou {
                hourly: p.tou_b.clone(),
            },
            "dynamic" => PolicyKind::DynamicDdpg,
            "margin" => PolicyKind::DynamicDdpgUncertaintyMargin,
            other => {
                return Err(Error::Config(format!(
                    "unknown scenario `{other}` (expected fixed, tou_a, tou_b, dynamic or margin)"
                )))
            }
        };
        Ok(Self {
            name: name.to_string(),
            kind,
        })
    }

    pub fn is_dynamic(&self) -> bool {
        matches!(
            self.kind,
            PolicyKind::DynamicDdpg | PolicyKind::DynamicDdpgUncertaintyMargin
        )
    }

    /// Per-interval prices for schedule policies.
    pub fn schedule(&self, steps_per_day: usize) -> Option<Vec<f64>> {
        match &self.kind {
            PolicyKind::Fixed { price } => Some(vec![*price; steps_per_day]),
            PolicyKind::Tou { hourly } => {
                let per_hour = steps_per_day / hourly.len().max(1);
                Some(
                    (0..steps_per_day)
                        .map(|t| hourly[(t / per_hour).min(hourly.len() - 1)])
                        .collect(),
                )
            }
            _ => None,
        }
    }

    pub fn rule(&self, steps_per_day: usize) -> PriceRule {
        self.schedule(steps_per_day)
            .map_or(PriceRule::Agent, PriceRule::Schedule)
    }
}

/// Wind records after imputation, at hourly and market resolution.
#[derive(Clone, Debug)]
pub struct WindData {
    pub raw: Vec<WindRecord>,
    pub hourly: Vec<WindRecord>,
    /// Active power per market interval, MW.
    pub interval_mw: Vec<f64>,
    pub steps_per_day: usize,
}

impl WindData {
    pub fn from_records(raw: Vec<WindRecord>, knn_k: usize, steps_per_day: usize) -> Result<Self> {
        let imputed = impute_missing(&raw, knn_k)?;
        let hourly = impute_missing(&resample_hourly(&imputed)?, knn_k)?;
        let width = Duration::minutes((24 * 60 / steps_per_day) as i64);
        let interval = impute_missing(&resample(&imputed, width)?, knn_k)?;
        Ok(Self {
            interval_mw: interval
                .iter()
                .map(|r| r.active_power.unwrap_or(0.0))
                .collect(),
            raw,
            hourly,
            steps_per_day,
        })
    }

    /// Synthetic records from stream `data`, or the CSV file.
    pub fn load(cfg: &ScenarioConfig) -> Result<Self> {
        let raw = match &cfg.wind {
            WindSource::Synthetic(spec) => synthesize_wind(spec, &mut stream(cfg.seed, "data"))?,
            WindSource::Csv {
                path,
                scale_to_capacity,
            } => {
                let mut r = load_wind_csv(path)?;
                if *scale_to_capacity {
                    fit_to_capacity(&mut r, cfg.env.market.wind.p_max);
                }
                r
            }
        };
        Self::from_records(raw, cfg.pipeline.knn_k, cfg.env.steps_per_day)
    }

    /// Whole days covered by both resolutions.
    pub fn days(&self) -> usize {
        (self.hourly.len() / 24).min(self.interval_mw.len() / self.steps_per_day)
    }

    pub fn hourly_power(&self, day: usize) -> Vec<f64> {
        self.hourly[24 * day..24 * day + 24]
            .iter()
            .map(|r| r.active_power.unwrap_or(0.0))
            .collect()
    }

    pub fn interval_power(&self, day: usize) -> Vec<f64> {
        self.interval_mw[day * self.steps_per_day..(day + 1) * self.steps_per_day].to_vec()
    }
}

/// How the day-ahead wind forecast is formed.
pub enum ForecastSource<'a> {
    Model(&'a ForecasterModel),
    /// Yesterday repeated; the midpoint of the ±margin band.
    Persistence,
    /// The realized wind itself.
    Perfect,
}

/// One pooled day per data day that has a full day of history before it.
pub fn build_wind_pool(data: &WindData, source: &ForecastSource) -> Result<WindPool> {
    let days = data.days();
    if days < 2 {
        return Err(Error::InsufficientData(format!(
            "wind data covers {days} whole days, need 2"
        )));
    }
    (1..days)
        .map(|d| {
            let forecast = match source {
                ForecastSource::Model(m) => {
                    predict_day_ahead(m, &data.hourly[24 * d - m.window_len..24 * d])?
                }
                ForecastSource::Persistence => persistence_forecast(&data.hourly_power(d - 1))?,
                ForecastSource::Perfect => data.hourly_power(d),
            };
            Ok(WindDay {
                actual_mw: data.interval_power(d),
                forecast_mw: forecast,
            })
        })
        .collect::<Result<Vec<_>>>()
        .and_then(WindPool::new)
}

pub struct FittedForecaster {
    pub model: ForecasterModel,
    pub prepared: PreparedData,
    /// Scores on the held-out windows, MW.
    pub metrics: Metrics,
    /// The same windows forecast by repeating the previous 24 hours.
    pub persistence: Metrics,
}

/// Scores the 24-hour persistence forecast on the test windows of
/// `prepared`.
pub fn persistence_metrics(prepared: &PreparedData) -> Result<Metrics> {
    let test = &prepared.test;
    let mut pred = Vec::with_capacity(test.len() * test.horizon);
    for &start in &test.starts {
        let first = start + test.window_len;
        if first < 24 {
            return Err(Error::InsufficientData(
                "persistence needs 24 hours before each target".into(),
            ));
        }
        for k in 0..test.horizon {
            let h = first + k - 24;
            pred.push(prepared.hourly[h].active_power.unwrap_or(0.0));
        }
    }
    eval_metrics(
        &pred,
        prepared
            .test_targets_mw
            .as_standard_layout()
            .as_slice()
            .expect("standard layout"),
    )
}

/// Trains `forecaster` on the configured pipeline split, drawing weights and
/// batch order from stream `forecaster`.
pub fn fit_forecaster(
    cfg: &ScenarioConfig,
    records: &[WindRecord],
    forecaster: &ForecasterConfig,
) -> Result<FittedForecaster> {
    let prepared = prepare(records, &cfg.pipeline)?;
    let model = train_forecaster(
        &prepared.train,
        &prepared.scaler,
        forecaster,
        &mut stream(cfg.seed, "forecaster"),
    )?;
    let metrics = model.evaluate(&prepared.test, &prepared.test_targets_mw)?;
    let persistence = persistence_metrics(&prepared)?;
    Ok(FittedForecaster {
        model,
        prepared,
        metrics,
        persistence,
    })
}

/// Day pools for every policy: `margin` reads the persistence band, all
/// others the trained forecaster.
pub struct ScenarioPools {
    pub forecaster: WindPool,
    pub band: WindPool,
}

impl ScenarioPools {
    pub fn build(data: &WindData, model: &ForecasterModel) -> Result<Self> {
        Ok(Self {
            forecaster: build_wind_pool(data, &ForecastSource::Model(model))?,
            band: build_wind_pool(data, &ForecastSource::Persistence)?,
        })
    }

    pub fn for_policy(&self, policy: &PricingPolicy) -> &WindPool {
        match policy.kind {
            PolicyKind::DynamicDdpgUncertaintyMargin => &self.band,
            _ => &self.forecaster,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub profit_mean: f64,
    pub profit_std: f64,
    pub par_mean: f64,
    pub bill_mean: f64,
    pub days: usize,
    /// First episode of the evaluation window.
    pub first_episode: usize,
    pub lmp_gap_mean: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len().max(1) as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Averages over the last `days` summaries.
pub fn report_from_history(
    scenario: &str,
    history: &[EpisodeSummary],
    days: usize,
) -> Result<ScenarioReport> {
    if days == 0 || days > history.len() {
        return Err(Error::Input(format!(
            "evaluation window of {days} days over {} episodes",
            history.len()
        )));
    }
    let window = &history[history.len() - days..];
    let profit: Vec<f64> = window.iter().map(|s| s.profit).collect();
    let (profit_mean, profit_std) = mean_std(&profit);
    let pars: Vec<f64> = window.iter().filter_map(|s| s.par).collect();
    Ok(ScenarioReport {
        scenario: scenario.to_string(),
        profit_mean,
        profit_std,
        par_mean: if pars.is_empty() {
            f64::NAN
        } else {
            mean_std(&pars).0
        },
        bill_mean: mean_std(&window.iter().map(|s| s.bill_mean).collect::<Vec<_>>()).0,
        days,
        first_episode: window[0].episode,
        lmp_gap_mean: mean_std(&window.iter().map(|s| s.lmp_gap).collect::<Vec<_>>()).0,
    })
}

/// Trains the PAs (and the LSA for dynamic policies) under `policy` on
/// the common exogenous days and reports the last `days` episodes.
pub fn run_baseline(
    policy: &PricingPolicy,
    cfg: &ScenarioConfig,
    pool: &WindPool,
    days: usize,
) -> Result<(ScenarioReport, TrainingRun)> {
    let lsa = policy.is_dynamic().then_some(&cfg.lsa_agent);
    let agents = Agents::new(&cfg.env, cfg.seed, lsa, &cfg.pa_agent)?;
    let opts = TrainingOptions::train(cfg.training.episodes);
    let run = run_training(
        &cfg.env,
        cfg.seed,
        pool,
        &policy.rule(cfg.env.steps_per_day),
        agents,
        &opts,
    )?;
    Ok((report_from_history(&policy.name, &run.history, days)?, run))
}

/// Runs each policy on its own thread, at most `threads` at a time. Pools
/// are looked up per policy so the uncertainty-margin case can read a
/// different forecast.
pub fn run_scenarios<'a>(
    policies: &[PricingPolicy],
    cfg: &ScenarioConfig,
    pool_for: &(dyn Fn(&PricingPolicy) -> &'a WindPool + Sync),
    threads: usize,
) -> Result<Vec<(ScenarioReport, TrainingRun)>> {
    let mut out: Vec<Option<Result<(ScenarioReport, TrainingRun)>>> =
        (0..policies.len()).map(|_| None).collect();
    for (chunk_idx, chunk) in policies.chunks(threads.max(1)).enumerate() {
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|p| s.spawn(move || run_baseline(p, cfg, pool_for(p), cfg.training.eval_days)))
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(Error::State("scenario thread panicked".into())))
                })
                .collect()
        });
        for (k, r) in results.into_iter().enumerate() {
            out[chunk_idx * threads.max(1) + k] = Some(r);
        }
    }
    out.into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Profit descending, ties by name.
    pub rows: Vec<ScenarioReport>,
    /// Profit of the top row over each row's profit.
    pub profit_ratios: Vec<(String, f64)>,
}

pub fn compare_scenarios(reports: &[ScenarioReport]) -> Result<Comparison> {
    if reports.len() < 2 {
        return Err(Error::Input("comparison needs at least two reports".into()));
    }
    let (days, first) = (reports[0].days, reports[0].first_episode);
    if let Some(r) = reports
        .iter()
        .find(|r| r.days != days || r.first_episode != first)
    {
        return Err(Error::Input(format!(
            "scenario `{}` uses a different evaluation window",
            r.scenario
        )));
    }
    let mut rows = reports.to_vec();
    rows.sort_by(|a, b| {
        b.profit_mean
            .total_cmp(&a.profit_mean)
            .then_with(|| a.scenario.cmp(&b.scenario))
    });
    let top = rows[0].profit_mean;
    let profit_ratios = rows
        .iter()
        .map(|r| (r.scenario.clone(), top / r.profit_mean))
        .collect();
    Ok(Comparison {
        rows,
        profit_ratios,
    })
}

impl Comparison {
    pub fn ratio(&self, scenario: &str) -> Option<f64> {
        self.profit_ratios
            .iter()
            .find(|(n, _)| n == scenario)
            .map(|(_, r)| *r)
    }

    /// `scenario,profit_mean,profit_std,par_mean,bill_mean,days`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "scenario",
            "profit_mean",
            "profit_std",
            "par_mean",
            "bill_mean",
            "days",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.scenario.clone(),
                r.profit_mean.to_string(),
                r.profit_std.to_string(),
                r.par_mean.to_string(),
                r.bill_mean.to_string(),
                r.days.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Real-time against day-ahead prices for one day with idle batteries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayGap {
    pub day: usize,
    pub lmp_gap: f64,
    pub profit: f64,
    pub par: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case: String,
    pub lmp_gap_mean: f64,
    pub profit_mean: f64,
    pub par_mean: f64,
    pub days: Vec<DayGap>,
}

/// Rolls each listed pool day at the fixed price with every battery idle.
/// Exogenous household streams depend only on the day index, so two pools
/// with the same realized wind differ only through the forecast.
pub fn evaluate_case(
    case: &str,
    env_cfg: &EnvConfig,
    master: u64,
    pool: &WindPool,
    days: &[usize],
    price: f64,
) -> Result<CaseReport> {
    if days.is_empty() {
        return Err(Error::Input(
            "case evaluation needs at least one day".into(),
        ));
    }
    let mut out = Vec::with_capacity(days.len());
    for &d in days {
        let exo = generate_exogenous(env_cfg, master, d, pool.get(d))?;
        let mut env = MarketEnv::reset(env_cfg, exo, d)?;
        let idle = vec![0.0; env_cfg.prosumers];
        while !env.is_done() {
            let t = env.step_index();
            env.step(PriceSignal::net_metering(price, t), &idle)?;
        }
        let s = env.summary()?;
        out.push(DayGap {
            day: d,
            lmp_gap: s.lmp_gap,
            profit: s.profit,
            par: s.par,
        });
    }
    let n = out.len() as f64;
    let pars: Vec<f64> = out.iter().filter_map(|g| g.par).collect();
    Ok(CaseReport {
        case: case.to_string(),
        lmp_gap_mean: out.iter().map(|g| g.lmp_gap).sum::<f64>() / n,
        profit_mean: out.iter().map(|g| g.profit).sum::<f64>() / n,
        par_mean: pars.iter().sum::<f64>() / pars.len().max(1) as f64,
        days: out,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseComparison {
    /// Case 1: persistence band, no forecaster.
    pub margin: CaseReport,
    /// Case 2: trained forecaster.
    pub forecaster: CaseReport,
}

/// Both cases over the same pool days and household streams.
pub fn run_case_comparison(
    env_cfg: &EnvConfig,
    master: u64,
    data: &WindData,
    model: &ForecasterModel,
    days: &[usize],
    price: f64,
) -> Result<CaseComparison> {
    let band = build_wind_pool(data, &ForecastSource::Persistence)?;
    let lstm = build_wind_pool(data, &ForecastSource::Model(model))?;
    Ok(CaseComparison {
        margin: evaluate_case("uncertainty_margin", env_cfg, master, &band, days, price)?,
        forecaster: evaluate_case("lstm", env_cfg, master, &lstm, days, price)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::WindSynthSpec;

    fn report(name: &str, profit: f64) -> ScenarioReport {
        ScenarioReport {
            scenario: name.into(),
            profit_mean: profit,
            profit_std: 0.0,
            par_mean: 1.5,
            bill_mean: 1.0,
            days: 100,
            first_episode: 3900,
            lmp_gap_mean: 0.0,
        }
    }

    #[test]
    fn table_ratios() {
        let c = compare_scenarios(&[
            report("fixed", 4.618),
            report("tou_evergy", 5.846),
            report("tou_edison", 6.211),
            report("margin", 8.536),
            report("lstm", 10.853),
        ])
        .unwrap();
        assert_eq!(c.rows[0].scenario, "lstm");
        assert!((c.ratio("tou_evergy").unwrap() - 1.856).abs() < 5e-4);
    }

    #[test]
    fn duplicate_and_ties() {
        let c = compare_scenarios(&[report("a", 2.0), report("a", 2.0)]).unwrap();
        assert!(c.profit_ratios.iter().all(|(_, r)| *r == 1.0));
        let c = compare_scenarios(&[report("b", 1.0), report("a", 1.0), report("c", 3.0)]).unwrap();
        let names: Vec<_> = c.rows.iter().map(|r| r.scenario.as_str()).collect();
        assert_eq!(names, ["c", "a", "b"]);
    }

    #[test]
    fn mismatched_windows_rejected() {
        let mut b = report("b", 1.0);
        b.days = 50;
        assert!(compare_scenarios(&[report("a", 1.0), b]).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let c = compare_scenarios(&[
            report("fixed", 1.0),
            report("tou_a", 2.0),
            report("dynamic", 3.0),
        ])
        .unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(
            lines[0],
            "scenario,profit_mean,profit_std,par_mean,bill_mean,days"
        );
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("dynamic,"));
    }

    #[test]
    fn schedules() {
        let cfg = ScenarioConfig::test_preset();
        let fixed = PricingPolicy::builtin("fixed", &cfg)
            .unwrap()
            .schedule(96)
            .unwrap();
        assert!(fixed.iter().all(|p| (p - fixed[0]).abs() == 0.0));
        let tou = PricingPolicy::builtin("tou_a", &cfg)
            .unwrap()
            .schedule(96)
            .unwrap();
        assert_eq!(tou[63], 0.08);
        assert_eq!(tou[64], 0.16);
        assert_eq!(tou[79], 0.16);
        assert_eq!(tou[80], 0.08);
        assert!(PricingPolicy::builtin("dynamic", &cfg)
            .unwrap()
            .schedule(96)
            .is_none());
        assert!(PricingPolicy::builtin("nope", &cfg).is_err());
    }

    #[test]
    fn perfect_forecast_cases_coincide() {
        let spec = WindSynthSpec {
            days: 6,
            ..WindSynthSpec::default()
        };
        let data = WindData::from_records(
            synthesize_wind(&spec, &mut stream(3, "data")).unwrap(),
            5,
            96,
        )
        .unwrap();
        let pool = build_wind_pool(&data, &ForecastSource::Perfect).unwrap();
        let cfg = EnvConfig::default();
        let a = evaluate_case("a", &cfg, 9, &pool, &[0, 1, 2], 0.1).unwrap();
        let b = evaluate_case("b", &cfg, 9, &pool.clone(), &[0, 1, 2], 0.1).unwrap();
        assert_eq!(a.days, b.days);
        assert_eq!(pool.len(), 5);
    }
}
