use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::env::{build_pa_observation, EnvConfig, History};
use crate::error::{Error, Result};

/// One household during one interval. Consumers carry zero PV and battery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HouseholdRow {
    pub d: f64,
    pub g: f64,
    pub soc_before: f64,
    /// Battery power actually delivered, kW (positive discharges).
    pub b: f64,
    pub soc: f64,
    pub e: f64,
    pub bill: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode: usize,
    pub step: usize,
    pub c_s: f64,
    pub c_b: f64,
    pub l_da_kw: f64,
    pub l_d_kw: f64,
    pub imports_kw: f64,
    pub exports_kw: f64,
    pub demand_mw: f64,
    pub wind_available_mw: f64,
    pub wind_mw: f64,
    pub conventional_mw: f64,
    pub lmp_da: f64,
    pub lmp_rt: f64,
    pub retail_revenue: f64,
    pub buyback_cost: f64,
    pub procurement_cost: f64,
    pub lsa_reward: f64,
    pub pa_rewards: Vec<f64>,
    pub feasible: bool,
    /// Prosumers first, then consumers.
    pub households: Vec<HouseholdRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub steps: usize,
    /// LSE profit for the day, $.
    pub profit: f64,
    pub par: Option<f64>,
    /// Mean prosumer bill for the day, $.
    pub bill_mean: f64,
    pub consumer_bill_mean: f64,
    pub lsa_return: f64,
    pub pa_return_mean: f64,
    /// Mean retail sell price, $/kWh.
    pub price_mean: f64,
    /// Mean |ρ^RT − ρ^DA|, $/MWh.
    pub lmp_gap: f64,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub records: Vec<StepRecord>,
    pub summary: EpisodeSummary,
}

const FIXED_COLUMNS: [&str; 20] = [
    "episode",
    "step",
    "C_s",
    "C_b",
    "L_DA_kw",
    "L_D_kw",
    "imports_kw",
    "exports_kw",
    "demand_mw",
    "wind_available_mw",
    "wind_mw",
    "conventional_mw",
    "lmp_da",
    "lmp_rt",
    "retail_revenue",
    "buyback_cost",
    "procurement_cost",
    "lsa_reward",
    "feasible",
    "households",
];

const HOUSEHOLD_FIELDS: [&str; 7] = ["d", "g", "soc_before", "b", "soc", "e", "bill"];

fn header(prosumers: usize, households: usize) -> Vec<String> {
    let mut h: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    h.extend((0..prosumers).map(|i| format!("pa_reward_{i}")));
    for k in 0..households {
        h.extend(HOUSEHOLD_FIELDS.iter().map(|f| format!("{f}_{k}")));
    }
    h
}

/// Streams records as CSV, one row per interval with per-household column
/// groups `d_k, g_k, soc_before_k, b_k, soc_k, e_k, bill_k`.
pub fn write_episode_log<W: Write>(writer: W, records: &[StepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let (p, h) = records
        .first()
        .map_or((0, 0), |r| (r.pa_rewards.len(), r.households.len()));
    w.write_record(header(p, h))?;
    for r in records {
        if r.pa_rewards.len() != p || r.households.len() != h {
            return Err(Error::Input(
                "episode log rows disagree on household counts".into(),
            ));
        }
        let mut row: Vec<String> = [
            r.c_s,
            r.c_b,
            r.l_da_kw,
            r.l_d_kw,
            r.imports_kw,
            r.exports_kw,
            r.demand_mw,
            r.wind_available_mw,
            r.wind_mw,
            r.conventional_mw,
            r.lmp_da,
            r.lmp_rt,
            r.retail_revenue,
            r.buyback_cost,
            r.procurement_cost,
            r.lsa_reward,
        ]
        .iter()
        .map(f64::to_string)
        .collect();
        row.insert(0, r.step.to_string());
        row.insert(0, r.episode.to_string());
        row.push(r.feasible.to_string());
        row.push(h.to_string());
        row.extend(r.pa_rewards.iter().map(f64::to_string));
        for x in &r.households {
            row.extend(
                [x.d, x.g, x.soc_before, x.b, x.soc, x.e, x.bill]
                    .iter()
                    .map(f64::to_string),
            );
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_episode_log<R: Read>(reader: R) -> Result<Vec<StepRecord>> {
    let mut rd = csv::Reader::from_reader(reader);
    let head = rd.headers()?.clone();
    let prosumers = head.iter().filter(|c| c.starts_with("pa_reward_")).count();
    let households = (head.len() - FIXED_COLUMNS.len() - prosumers) / HOUSEHOLD_FIELDS.len();
    if head
        .iter()
        .take(FIXED_COLUMNS.len())
        .ne(FIXED_COLUMNS.iter().copied())
        || head.len() != FIXED_COLUMNS.len() + prosumers + households * HOUSEHOLD_FIELDS.len()
    {
        return Err(Error::Parse {
            line: 1,
            message: "not an episode log header".into(),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let line = i + 2;
        let row = row?;
        let perr = |c: usize| Error::Parse {
            line,
            message: format!("bad value in column `{}`", &head[c]),
        };
        let f = |c: usize| row[c].parse::<f64>().map_err(|_| perr(c));
        let u = |c: usize| row[c].parse::<usize>().map_err(|_| perr(c));
        let base = FIXED_COLUMNS.len();
        let hbase = base + prosumers;
        out.push(StepRecord {
            episode: u(0)?,
            step: u(1)?,
            c_s: f(2)?,
            c_b: f(3)?,
            l_da_kw: f(4)?,
            l_d_kw: f(5)?,
            imports_kw: f(6)?,
            exports_kw: f(7)?,
            demand_mw: f(8)?,
            wind_available_mw: f(9)?,
            wind_mw: f(10)?,
            conventional_mw: f(11)?,
            lmp_da: f(12)?,
            lmp_rt: f(13)?,
            retail_revenue: f(14)?,
            buyback_cost: f(15)?,
            procurement_cost: f(16)?,
            lsa_reward: f(17)?,
            feasible: row[18].parse().map_err(|_| perr(18))?,
            pa_rewards: (0..prosumers).map(|k| f(base + k)).collect::<Result<_>>()?,
            households: (0..households)
                .map(|k| {
                    let c = hbase + k * HOUSEHOLD_FIELDS.len();
                    Ok(HouseholdRow {
                        d: f(c)?,
                        g: f(c + 1)?,
                        soc_before: f(c + 2)?,
                        b: f(c + 3)?,
                        soc: f(c + 4)?,
                        e: f(c + 5)?,
                        bill: f(c + 6)?,
                    })
                })
                .collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

/// The observation prosumer `i` saw at `step`, rebuilt from logged rows.
pub fn pa_observation_from_log(
    cfg: &EnvConfig,
    records: &[StepRecord],
    step: usize,
    i: usize,
) -> Result<Vec<f64>> {
    let r = records
        .get(step)
        .ok_or_else(|| Error::Input(format!("log has no step {step}")))?;
    let h = r
        .households
        .get(i)
        .ok_or_else(|| Error::Input(format!("log has no household {i}")))?;
    let mut sell = History::new(cfg.price_history);
    let mut buy = History::new(cfg.price_history);
    for past in &records[..step] {
        sell.push(past.c_s);
        buy.push(past.c_b);
    }
    Ok(build_pa_observation(
        h.d,
        h.g,
        h.soc_before,
        &sell.window_with(r.c_s),
        &buy.window_with(r.c_b),
    ))
}

/// `episode,profit,par,bill_mean,…` one row per summary.
pub fn write_summaries<W: Write>(writer: W, summaries: &[EpisodeSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "episode",
        "steps",
        "profit",
        "par",
        "bill_mean",
        "consumer_bill_mean",
        "lsa_return",
        "pa_return_mean",
        "price_mean",
        "lmp_gap",
        "truncated",
    ])?;
    for s in summaries {
        w.write_record([
            s.episode.to_string(),
            s.steps.to_string(),
            s.profit.to_string(),
            s.par.map_or(String::new(), |p| p.to_string()),
            s.bill_mean.to_string(),
            s.consumer_bill_mean.to_string(),
            s.lsa_return.to_string(),
            s.pa_return_mean.to_string(),
            s.price_mean.to_string(),
            s.lmp_gap.to_string(),
            s.truncated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
