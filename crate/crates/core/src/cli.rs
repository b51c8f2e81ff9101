//! Command-line front end. Every subcommand writes its outputs, the
//! effective `config.json` and a `manifest.json` into one run directory.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::config::{ScenarioConfig, WindSource};
use crate::data::synth::synthesize_wind;
use crate::data::{save_wind_csv, stream, RunManifest};
use crate::env::log::{
    read_episode_log, write_episode_log, write_summaries, EpisodeSummary, StepRecord,
};
use crate::env::training::{run_training, Agents, TrainingOptions};
use crate::error::{Error, Result};
use crate::forecast::{
    eval_metrics, predict_day_ahead, ForecastDocument, ForecasterModel, Metrics,
};
use crate::nn::CellKind;
use crate::scenarios::{
    compare_scenarios, fit_forecaster, report_from_history, run_scenarios, PricingPolicy,
    ScenarioPools, ScenarioReport, WindData,
};

/// Base directory for run outputs when `--out` is not given.
pub const OUT_ENV: &str = "GRIDMARL_OUT";
/// Upper bound on scenarios trained at once by `compare`.
pub const THREADS_ENV: &str = "GRIDMARL_THREADS";

const ALL_SCENARIOS: &str = "fixed,tou_a,tou_b,margin,dynamic";

#[derive(Parser, Debug)]
#[command(
    name = "gridmarl",
    version,
    about = "Wind forecasting and multi-agent retail pricing simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the configured synthetic wind series as CSV.
    SynthData(Common),
    /// Train the wind forecaster and score it on the held-out split.
    TrainLstm {
        #[command(flatten)]
        common: Common,
        /// Override the recurrent cell (lstm, gru or rnn).
        #[arg(long)]
        kind: Option<String>,
    },
    /// Issue one 24-hour forecast from a saved forecaster.
    Forecast {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Day to forecast; defaults to the last whole day of data.
        #[arg(long)]
        day: Option<usize>,
    },
    /// Train the household agents, and the retailer agent for dynamic
    /// scenarios, then checkpoint them.
    TrainAgents {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "dynamic")]
        scenario: String,
        /// Saved forecaster; trained from the config when absent.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Roll checkpointed agents greedily over unseen days.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Directory written by `train-agents`.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        days: Option<usize>,
    },
    /// Train every listed scenario on common days and rank them.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = ALL_SCENARIOS)]
        scenarios: String,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Turn run outputs into tidy CSVs for plotting.
    ExportPlots {
        #[command(flatten)]
        common: Common,
        /// Run directory of `train-agents`, `evaluate` or `compare`.
        #[arg(long)]
        run: PathBuf,
        /// Forecaster whose day-ahead forecasts are set against the data.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario JSON; the built-in preset is used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["test", "full"], default_value = "test")]
    preset: String,
    /// Replaces the master seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Wind CSV replacing the configured wind source.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.module());
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<PathBuf> {
    match cmd {
        Command::SynthData(c) => synth_data(&c),
        Command::TrainLstm { common, kind } => train_lstm(&common, kind.as_deref()),
        Command::Forecast { common, model, day } => forecast(&common, &model, day),
        Command::TrainAgents {
            common,
            scenario,
            model,
        } => train_agents(&common, &scenario, model.as_deref()),
        Command::Evaluate {
            common,
            checkpoint,
            days,
        } => evaluate(&common, &checkpoint, days),
        Command::Compare {
            common,
            scenarios,
            model,
            threads,
        } => compare(&common, &scenarios, model.as_deref(), threads),
        Command::ExportPlots { common, run, model } => {
            export_plots(&common, &run, model.as_deref())
        }
    }
}

/// Open run: output directory, effective config and its manifest.
struct Run {
    dir: PathBuf,
    cfg: ScenarioConfig,
    manifest: RunManifest,
}

impl Run {
    fn start(command: &str, c: &Common) -> Result<Self> {
        let mut cfg = match &c.config {
            Some(p) => ScenarioConfig::load(p)?.0,
            None if c.preset == "full" => ScenarioConfig::full_scale(),
            None => ScenarioConfig::test_preset(),
        };
        if let Some(s) = c.seed {
            cfg.seed = s;
        }
        if let Some(p) = &c.data {
            cfg.wind = WindSource::Csv {
                path: p.clone(),
                scale_to_capacity: false,
            };
        }
        cfg.validate()?;
        let dir = match &c.out {
            Some(d) => d.clone(),
            None => std::env::var_os(OUT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("runs"))
                .join(command),
        };
        std::fs::create_dir_all(&dir)?;
        let bytes = cfg.to_json()?.into_bytes();
        std::fs::write(dir.join("config.json"), &bytes)?;
        let mut manifest = RunManifest::new(command, &bytes, cfg.seed);
        manifest.outputs.push("config.json".into());
        Ok(Self { dir, cfg, manifest })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.to_string());
        self.dir.join(name)
    }

    fn metric(&mut self, name: &str, v: f64) {
        self.manifest.metrics.insert(name.to_string(), v);
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.manifest.write(&self.dir)?;
        Ok(self.dir)
    }
}

fn write_metrics(path: &Path, rows: &IndexMap<String, f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["metric", "value"])?;
    for (k, v) in rows {
        w.write_record([k.as_str(), &v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn metric_rows(prefix: &str, m: &Metrics) -> Vec<(String, f64)> {
    let mut v = vec![
        (format!("{prefix}rmse"), m.rmse),
        (format!("{prefix}mae"), m.mae),
    ];
    if let Some(p) = m.mape {
        v.push((format!("{prefix}mape"), p));
    }
    v
}

fn synth_data(c: &Common) -> Result<PathBuf> {
    let mut run = Run::start("synth-data", c)?;
    let WindSource::Synthetic(spec) = &run.cfg.wind else {
        return Err(Error::Config(
            "synth-data needs a synthetic wind source".into(),
        ));
    };
    let records = synthesize_wind(spec, &mut stream(run.cfg.seed, "data"))?;
    let power: Vec<f64> = records.iter().filter_map(|r| r.active_power).collect();
    let path = run.path("wind.csv");
    save_wind_csv(&path, &records)?;
    let mut m = IndexMap::new();
    m.insert("records".to_string(), records.len() as f64);
    m.insert(
        "mean_power_mw".to_string(),
        power.iter().sum::<f64>() / power.len().max(1) as f64,
    );
    m.insert(
        "max_power_mw".to_string(),
        power.iter().copied().fold(0.0, f64::max),
    );
    let mpath = run.path("metrics.csv");
    write_metrics(&mpath, &m)?;
    run.manifest.metrics = m;
    run.finish()
}

fn parse_kind(s: &str) -> Result<CellKind> {
    match s {
        "lstm" => Ok(CellKind::Lstm),
        "gru" => Ok(CellKind::Gru),
        "rnn" => Ok(CellKind::Rnn),
        other => Err(Error::Config(format!(
            "unknown cell kind `{other}` (expected lstm, gru or rnn)"
        ))),
    }
}

fn train_lstm(c: &Common, kind: Option<&str>) -> Result<PathBuf> {
    let mut run = Run::start("train-lstm", c)?;
    let mut fc = run.cfg.forecaster.clone();
    if let Some(k) = kind {
        fc.kind = parse_kind(k)?;
    }
    let data = WindData::load(&run.cfg)?;
    let fit = fit_forecaster(&run.cfg, &data.raw, &fc)?;
    let model_path = run.path("forecaster.json");
    fit.model.save(&model_path)?;

    let loss_path = run.path("loss.csv");
    let mut w = csv::Writer::from_path(&loss_path)?;
    w.write_record(["epoch", "loss"])?;
    for (e, l) in fit.model.loss_history.iter().enumerate() {
        w.write_record([e.to_string(), l.to_string()])?;
    }
    w.flush()?;

    let mut m = IndexMap::new();
    m.extend(metric_rows("", &fit.metrics));
    m.extend(metric_rows("persistence_", &fit.persistence));
    m.insert(
        "final_loss".into(),
        fit.model.loss_history.last().copied().unwrap_or(f64::NAN),
    );
    m.insert("test_windows".into(), fit.prepared.test.len() as f64);
    let mpath = run.path("metrics.csv");
    write_metrics(&mpath, &m)?;
    run.manifest.metrics = m;
    run.finish()
}

fn forecast(c: &Common, model_path: &Path, day: Option<usize>) -> Result<PathBuf> {
    let mut run = Run::start("forecast", c)?;
    let model = ForecasterModel::load(model_path)?;
    let data = WindData::load(&run.cfg)?;
    let days = data.days();
    let first = model.window_len.div_ceil(24);
    let day = day.unwrap_or(days.saturating_sub(1));
    if day < first || day >= days {
        return Err(Error::Input(format!(
            "day {day} outside the forecastable range {first}..{days}"
        )));
    }
    let history = &data.hourly[24 * day - model.window_len..24 * day];
    let values = predict_day_ahead(&model, history)?;
    let actual = data.hourly_power(day);
    let doc = ForecastDocument {
        model_id: model.model_id(),
        issued_at: data.hourly[24 * day].timestamp,
        values: values.clone(),
    };
    let jpath = run.path("forecast.json");
    std::fs::write(&jpath, serde_json::to_string_pretty(&doc)?)?;
    let cpath = run.path("forecast.csv");
    let mut w = csv::Writer::from_path(&cpath)?;
    w.write_record(["day", "hour", "forecast_mw", "actual_mw"])?;
    for (h, (f, a)) in values.iter().zip(&actual).enumerate() {
        w.write_record([day.to_string(), h.to_string(), f.to_string(), a.to_string()])?;
    }
    w.flush()?;
    let m: IndexMap<String, f64> = metric_rows("", &eval_metrics(&values, &actual)?)
        .into_iter()
        .collect();
    let mpath = run.path("metrics.csv");
    write_metrics(&mpath, &m)?;
    run.manifest.metrics = m;
    run.finish()
}

/// Trained forecaster and the day pools it implies.
fn pools_for(run: &Run, model: Option<&Path>) -> Result<(ForecasterModel, ScenarioPools)> {
    let data = WindData::load(&run.cfg)?;
    let model = match model {
        Some(p) => ForecasterModel::load(p)?,
        None => fit_forecaster(&run.cfg, &data.raw, &run.cfg.forecaster)?.model,
    };
    let pools = ScenarioPools::build(&data, &model)?;
    Ok((model, pools))
}

fn write_history(path: &Path, history: &[EpisodeSummary]) -> Result<()> {
    write_summaries(std::fs::File::create(path)?, history)
}

fn write_logs(path: &Path, records: &[StepRecord]) -> Result<()> {
    write_episode_log(std::fs::File::create(path)?, records)
}

fn report_metrics(run: &mut Run, r: &ScenarioReport) {
    run.metric("profit_mean", r.profit_mean);
    run.metric("profit_std", r.profit_std);
    run.metric("par_mean", r.par_mean);
    run.metric("bill_mean", r.bill_mean);
    run.metric("lmp_gap_mean", r.lmp_gap_mean);
}

const POLICY_FILE: &str = "policy.json";
const FORECASTER_FILE: &str = "forecaster.json";

fn train_agents(c: &Common, scenario: &str, model: Option<&Path>) -> Result<PathBuf> {
    let mut run = Run::start("train-agents", c)?;
    let policy = PricingPolicy::builtin(scenario, &run.cfg)?;
    let (forecaster, pools) = pools_for(&run, model)?;
    let cfg = run.cfg.clone();
    let lsa = policy.is_dynamic().then_some(&cfg.lsa_agent);
    let agents = Agents::new(&cfg.env, cfg.seed, lsa, &cfg.pa_agent)?;
    let mut opts = TrainingOptions::train(cfg.training.episodes);
    let ckpt = run.dir.join("checkpoints");
    if cfg.training.checkpoint_every.is_some() {
        opts.checkpoint_every = cfg.training.checkpoint_every;
        opts.checkpoint_dir = Some(ckpt.clone());
    }
    let trained = run_training(
        &cfg.env,
        cfg.seed,
        pools.for_policy(&policy),
        &policy.rule(cfg.env.steps_per_day),
        agents,
        &opts,
    )?;
    for p in trained.agents.save(&ckpt)? {
        let rel = p.strip_prefix(&run.dir).unwrap_or(&p).display().to_string();
        run.manifest.outputs.push(rel);
    }
    let ppath = run.path(&format!("checkpoints/{POLICY_FILE}"));
    std::fs::write(&ppath, serde_json::to_string_pretty(&policy)?)?;
    let fpath = run.path(&format!("checkpoints/{FORECASTER_FILE}"));
    forecaster.save(&fpath)?;

    let hpath = run.path("metrics.csv");
    write_history(&hpath, &trained.history)?;
    if let Some(last) = trained.logs.last() {
        let lpath = run.path("episode_log.csv");
        write_logs(&lpath, &last.records)?;
    }
    let days = cfg.training.eval_days.min(trained.history.len());
    let report = report_from_history(&policy.name, &trained.history, days)?;
    report_metrics(&mut run, &report);
    run.finish()
}

fn evaluate(c: &Common, checkpoint: &Path, days: Option<usize>) -> Result<PathBuf> {
    let mut run = Run::start("evaluate", c)?;
    let policy_path = checkpoint.join(POLICY_FILE);
    if !policy_path.exists() {
        return Err(Error::MissingArtifact(policy_path));
    }
    let policy: PricingPolicy = serde_json::from_str(&std::fs::read_to_string(&policy_path)?)?;
    let model_path = checkpoint.join(FORECASTER_FILE);
    let (_, pools) = pools_for(&run, Some(&model_path))?;
    let cfg = run.cfg.clone();
    let agents = Agents::load(checkpoint, cfg.env.prosumers)?;
    let days = days.unwrap_or(cfg.training.eval_days);
    let opts = TrainingOptions::evaluate(cfg.training.episodes, days);
    let out = run_training(
        &cfg.env,
        cfg.seed,
        pools.for_policy(&policy),
        &policy.rule(cfg.env.steps_per_day),
        agents,
        &opts,
    )?;
    let hpath = run.path("metrics.csv");
    write_history(&hpath, &out.history)?;
    let records: Vec<StepRecord> = out
        .logs
        .iter()
        .flat_map(|l| l.records.iter().cloned())
        .collect();
    let lpath = run.path("episode_log.csv");
    write_logs(&lpath, &records)?;
    let report = report_from_history(&policy.name, &out.history, days)?;
    let rpath = run.path("report.json");
    std::fs::write(&rpath, serde_json::to_string_pretty(&report)?)?;
    report_metrics(&mut run, &report);
    run.finish()
}

#[derive(Serialize, Deserialize)]
struct ComparisonDoc {
    rows: Vec<ScenarioReport>,
    profit_ratios: IndexMap<String, f64>,
}

fn compare(
    c: &Common,
    names: &str,
    model: Option<&Path>,
    threads: Option<usize>,
) -> Result<PathBuf> {
    let mut run = Run::start("compare", c)?;
    let policies = names
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|n| PricingPolicy::builtin(n, &run.cfg))
        .collect::<Result<Vec<_>>>()?;
    let threads = threads
        .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()))
        .unwrap_or(1);
    let (_, pools) = pools_for(&run, model)?;
    let cfg = run.cfg.clone();
    let results = run_scenarios(&policies, &cfg, &|p| pools.for_policy(p), threads)?;
    let reports: Vec<ScenarioReport> = results.iter().map(|(r, _)| r.clone()).collect();
    let cmp = compare_scenarios(&reports)?;

    let spath = run.path("scenarios.csv");
    cmp.write_csv(std::fs::File::create(&spath)?)?;
    let doc = ComparisonDoc {
        rows: cmp.rows.clone(),
        profit_ratios: cmp.profit_ratios.iter().cloned().collect(),
    };
    let jpath = run.path("comparison.json");
    std::fs::write(&jpath, serde_json::to_string_pretty(&doc)?)?;
    std::fs::create_dir_all(run.dir.join("logs"))?;
    for (report, trained) in &results {
        let hpath = run.path(&format!("logs/{}_metrics.csv", report.scenario));
        write_history(&hpath, &trained.history)?;
        if let Some(last) = trained.logs.last() {
            let lpath = run.path(&format!("logs/{}_episode.csv", report.scenario));
            write_logs(&lpath, &last.records)?;
        }
        run.metric(
            &format!("{}_profit_mean", report.scenario),
            report.profit_mean,
        );
        run.metric(&format!("{}_par_mean", report.scenario), report.par_mean);
    }
    run.finish()
}

/// Episode logs in a run directory, labelled by scenario.
fn find_logs(run_dir: &Path) -> Result<Vec<(String, Vec<StepRecord>)>> {
    let mut out = Vec::new();
    let single = run_dir.join("episode_log.csv");
    if single.exists() {
        let label = RunManifest::read(run_dir)
            .map(|m| m.command)
            .unwrap_or_else(|_| "run".into());
        out.push((label, read_episode_log(std::fs::File::open(&single)?)?));
    }
    let logs = run_dir.join("logs");
    if logs.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&logs)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with("_episode.csv"))
            .collect();
        entries.sort();
        for p in entries {
            let name = p.file_name().unwrap_or_default().to_string_lossy();
            let label = name.trim_end_matches("_episode.csv").to_string();
            out.push((label, read_episode_log(std::fs::File::open(&p)?)?));
        }
    }
    Ok(out)
}

fn export_plots(c: &Common, run_dir: &Path, model: Option<&Path>) -> Result<PathBuf> {
    let mut run = Run::start("export-plots", c)?;
    if !run_dir.is_dir() {
        return Err(Error::MissingArtifact(run_dir.to_path_buf()));
    }
    let logs = find_logs(run_dir)?;
    if logs.is_empty() && model.is_none() {
        return Err(Error::MissingArtifact(run_dir.join("episode_log.csv")));
    }

    let tpath = run.path("price_trace.csv");
    let mut w = csv::Writer::from_path(&tpath)?;
    w.write_record([
        "scenario",
        "episode",
        "step",
        "c_s",
        "c_b",
        "lmp_da",
        "lmp_rt",
        "l_da_kw",
        "l_d_kw",
        "deficiency_kw",
    ])?;
    for (label, recs) in &logs {
        for r in recs {
            w.write_record([
                label.clone(),
                r.episode.to_string(),
                r.step.to_string(),
                r.c_s.to_string(),
                r.c_b.to_string(),
                r.lmp_da.to_string(),
                r.lmp_rt.to_string(),
                r.l_da_kw.to_string(),
                r.l_d_kw.to_string(),
                (r.l_d_kw - r.l_da_kw).to_string(),
            ])?;
        }
    }
    w.flush()?;

    let spath = run.path("soc_profile.csv");
    let mut w = csv::Writer::from_path(&spath)?;
    w.write_record(["scenario", "episode", "step", "household", "soc", "b_kw"])?;
    for (label, recs) in &logs {
        for r in recs {
            for (k, h) in r.households.iter().enumerate() {
                w.write_record([
                    label.clone(),
                    r.episode.to_string(),
                    r.step.to_string(),
                    k.to_string(),
                    h.soc.to_string(),
                    h.b.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;

    let ppath = run.path("par.csv");
    let mut w = csv::Writer::from_path(&ppath)?;
    w.write_record(["scenario", "episode", "par"])?;
    for (label, recs) in &logs {
        let mut episodes: Vec<usize> = recs.iter().map(|r| r.episode).collect();
        episodes.dedup();
        for e in episodes {
            let load: Vec<f64> = recs
                .iter()
                .filter(|r| r.episode == e)
                .map(|r| r.l_d_kw)
                .collect();
            let par = crate::retail::peak_to_average(&load).unwrap_or(f64::NAN);
            w.write_record([label.clone(), e.to_string(), par.to_string()])?;
        }
    }
    w.flush()?;

    if let Some(p) = model {
        let model = ForecasterModel::load(p)?;
        let data = WindData::load(&run.cfg)?;
        let fpath = run.path("forecast_vs_actual.csv");
        let mut w = csv::Writer::from_path(&fpath)?;
        w.write_record(["day", "hour", "forecast_mw", "actual_mw"])?;
        let first = model.window_len.div_ceil(24);
        let mut pred = Vec::new();
        let mut actual = Vec::new();
        for d in first..data.days() {
            let f = predict_day_ahead(&model, &data.hourly[24 * d - model.window_len..24 * d])?;
            let a = data.hourly_power(d);
            for h in 0..24 {
                w.write_record([
                    d.to_string(),
                    h.to_string(),
                    f[h].to_string(),
                    a[h].to_string(),
                ])?;
            }
            pred.extend(f);
            actual.extend(a);
        }
        w.flush()?;
        run.metric("forecast_rmse", eval_metrics(&pred, &actual)?.rmse);
    }
    run.metric(
        "episodes",
        logs.iter().map(|(_, r)| r.len()).sum::<usize>() as f64 / run.cfg.env.steps_per_day as f64,
    );
    run.finish()
}
