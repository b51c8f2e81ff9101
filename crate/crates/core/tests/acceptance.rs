//! One PASS/FAIL line per acceptance criterion. Run with
//! `cargo test --release --test acceptance`.

mod support;

use gridmarl::config::ScenarioConfig;
use gridmarl::env::EnvConfig;
use gridmarl::forecast::eval_metrics;
use gridmarl::market::{check_power_balance, Market};
use gridmarl::nn::CellKind;
use gridmarl::retail::{battery_step, BatterySpec};
use gridmarl::scenarios::{fit_forecaster, run_scenarios, PricingPolicy, ScenarioPools, WindData};
use rand::Rng;
use std::path::Path;
use std::time::{Duration, Instant};
use support::*;

mod tol {
    pub const DISPATCH_COST: f64 = 1e-3;
    pub const DISPATCH_LMP: f64 = 1e-3;
    pub const WORKED_LMP: f64 = 1e-9;
    pub const GRAD: f64 = 1e-4;
    pub const GRAD_COMPOSED: f64 = 1e-3;
    pub const GRAD_SEEDS: u64 = 20;
    pub const BOWL: f64 = 0.05;
    pub const BOWL_STEPS: usize = 2000;
    pub const BOWL_SEEDS: u64 = 3;
    pub const ACCOUNTING_EPISODES: u64 = 50;
    pub const SOC_FUZZ_STEPS: usize = 10_000;
    pub const SOC_ROUND_TRIP: f64 = 1e-12;
    pub const SINE_RMSE_FACTOR: f64 = 1.5;
    pub const METRIC: f64 = 1e-12;
    pub const ARCH_SEEDS: u64 = 3;
    pub const ARCH_REQUIRED: usize = 2;
}

mod budget {
    use std::time::Duration;
    pub const DISPATCH: Duration = Duration::from_secs(10);
    pub const GRADIENTS: Duration = Duration::from_secs(60);
    pub const BOWL: Duration = Duration::from_secs(30);
    pub const FORECASTER: Duration = Duration::from_secs(5 * 60);
    pub const END_TO_END: Duration = Duration::from_secs(20 * 60);
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit: Option<Duration>) -> bool {
    limit.is_none_or(|l| elapsed < l)
}

fn dispatch_oracle() -> Outcome {
    let m = Market::default();
    let worked = [(20.0, 0.0, 18.5), (10.0, 0.0, 14.0), (30.0, 40.0, 5.0)];
    let mut failures = Vec::new();
    for (d, w, lmp) in worked {
        let got = m.dispatch(d, w, None).unwrap().lmp;
        if (got - lmp).abs() > tol::WORKED_LMP {
            failures.push(format!("{d} MW/{w} MW wind: lmp {got} != {lmp}"));
        }
    }
    let mut r = rng(2024);
    let (mut worst_cost, mut worst_lmp) = (0.0f64, 0.0f64);
    for case in 0..200 {
        let demand = r.random_range(0.0..=115.0);
        let wind = r.random_range(0.0..=50.0);
        let d = m.dispatch(demand, wind, None).unwrap();
        if !check_power_balance(&d, demand, 1e-9) {
            failures.push(format!("case {case}: unbalanced"));
        }
        worst_cost =
            worst_cost.max((d.total_variable_cost - grid_cost(&m, demand, wind).unwrap()).abs());
        let (lo, hi) = grid_lmp_bracket(&m, demand, wind);
        worst_lmp = worst_lmp.max(lo - d.lmp).max(d.lmp - hi);
    }
    let pass =
        failures.is_empty() && worst_cost < tol::DISPATCH_COST && worst_lmp < tol::DISPATCH_LMP;
    outcome(
        pass,
        format!(
            "200 cases, max cost gap {worst_cost:.2e}, max LMP excursion {:.2e} {failures:?}",
            worst_lmp.max(0.0)
        ),
    )
}

fn gradient_suite() -> Outcome {
    type Check = (&'static str, fn(u64) -> f64, f64);
    let checks: [Check; 8] = [
        ("mlp", mlp_grad_error, tol::GRAD),
        ("batchnorm", batchnorm_grad_error, tol::GRAD),
        ("lstm cell", lstm_cell_grad_error, tol::GRAD),
        ("gru cell", gru_cell_grad_error, tol::GRAD),
        (
            "stacked lstm",
            |s| sequence_grad_error(CellKind::Lstm, s),
            tol::GRAD,
        ),
        (
            "stacked gru",
            |s| sequence_grad_error(CellKind::Gru, s),
            tol::GRAD,
        ),
        (
            "stacked rnn",
            |s| sequence_grad_error(CellKind::Rnn, s),
            tol::GRAD,
        ),
        ("composed", composed_grad_error, tol::GRAD_COMPOSED),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, f, limit) in checks {
        let worst = (0..tol::GRAD_SEEDS).map(f).fold(0.0, f64::max);
        pass &= worst < limit;
        parts.push(format!("{name} {worst:.1e}"));
    }
    outcome(
        pass,
        format!("{} seeds each: {}", tol::GRAD_SEEDS, parts.join(", ")),
    )
}

fn ddpg_bowl() -> Outcome {
    let mus: Vec<f64> = (0..tol::BOWL_SEEDS)
        .map(|s| quadratic_bowl(s, tol::BOWL_STEPS))
        .collect();
    let pass = mus.iter().all(|m| (m - BOWL_TARGET).abs() < tol::BOWL);
    outcome(
        pass,
        format!("μ after {} steps: {mus:.3?}", tol::BOWL_STEPS),
    )
}

fn accounting() -> Outcome {
    let cfg = EnvConfig::default();
    let bad: Vec<String> = (0..tol::ACCOUNTING_EPISODES)
        .filter_map(|s| {
            accounting_violation(&cfg, &random_episode(&cfg, s)).map(|v| format!("seed {s}: {v}"))
        })
        .collect();
    outcome(
        bad.is_empty(),
        format!(
            "{} episodes, {} violations {bad:?}",
            tol::ACCOUNTING_EPISODES,
            bad.len()
        ),
    )
}

fn battery() -> Outcome {
    let spec = BatterySpec::default();
    let dt = 0.25;
    let mut r = rng(5);
    let mut soc = spec.soc0;
    let (mut lo, mut hi) = (soc, soc);
    let mut worst_trip = 0.0f64;
    for _ in 0..tol::SOC_FUZZ_STEPS {
        let a = r.random_range(-5.0..5.0);
        let (b, next) = battery_step(&spec, soc, a, dt);
        let (_, back) = battery_step(&spec, next, -b, dt);
        worst_trip = worst_trip.max((back - soc).abs());
        soc = next;
        lo = lo.min(soc);
        hi = hi.max(soc);
    }
    let pass = lo >= 0.10 && hi <= 0.90 && worst_trip <= tol::SOC_ROUND_TRIP;
    outcome(
        pass,
        format!(
            "{} steps, SoC range [{lo:.4}, {hi:.4}], round-trip error {worst_trip:.1e}",
            tol::SOC_FUZZ_STEPS
        ),
    )
}

fn forecaster_floor() -> Outcome {
    let triples = [
        (vec![0.0, 0.0], vec![3.0, 4.0], (12.5f64.sqrt(), 3.5, 100.0)),
        (vec![2.0], vec![4.0], (2.0, 2.0, 50.0)),
    ];
    let mut hand_ok = true;
    for (pred, actual, (rmse, mae, mape)) in &triples {
        let m = eval_metrics(pred, actual).unwrap();
        hand_ok &= (m.rmse - rmse).abs() < tol::METRIC && (m.mae - mae).abs() < tol::METRIC;
        hand_ok &= m.mape.is_some_and(|v| (v - mape).abs() < tol::METRIC);
    }
    let (lstm, persistence) = sinusoid_rmse(1);
    let floor = tol::SINE_RMSE_FACTOR * SINE_SIGMA;
    let pass = hand_ok && lstm <= floor && lstm < persistence;
    outcome(
        pass,
        format!("σ = {SINE_SIGMA}: LSTM RMSE {lstm:.3} (floor {floor}), persistence {persistence:.3}, hand triples ok = {hand_ok}"),
    )
}

fn architecture_ordering() -> Outcome {
    let records = regime_records();
    let mut ordered = 0;
    let mut rows = Vec::new();
    for seed in 1..=tol::ARCH_SEEDS {
        let [l, g, r] = [CellKind::Lstm, CellKind::Gru, CellKind::Rnn]
            .map(|k| architecture_rmse(&records, k, seed));
        if l <= g && g <= r {
            ordered += 1;
        }
        rows.push(format!("seed {seed}: lstm {l:.3} gru {g:.3} rnn {r:.3}"));
    }
    outcome(
        ordered >= tol::ARCH_REQUIRED,
        format!(
            "{ordered}/{} seeds ordered; {}",
            tol::ARCH_SEEDS,
            rows.join("; ")
        ),
    )
}

fn end_to_end() -> Outcome {
    let cfg = ScenarioConfig::test_preset();
    let data = WindData::load(&cfg).unwrap();
    let fit = fit_forecaster(&cfg, &data.raw, &cfg.forecaster).unwrap();
    let pools = ScenarioPools::build(&data, &fit.model).unwrap();
    let policies: Vec<PricingPolicy> = ["fixed", "tou_a", "tou_b", "margin", "dynamic"]
        .iter()
        .map(|n| PricingPolicy::builtin(n, &cfg).unwrap())
        .collect();
    let results = run_scenarios(&policies, &cfg, &|p| pools.for_policy(p), 1).unwrap();
    let get = |name: &str| {
        results
            .iter()
            .find(|(r, _)| r.scenario == name)
            .map(|(r, _)| r.clone())
            .unwrap()
    };
    let (fixed, dynamic) = (get("fixed"), get("dynamic"));
    for (r, _) in &results {
        println!(
            "      {:<8} profit {:>8.3} ± {:<7.3} PAR {:.3}  bill {:.3}",
            r.scenario, r.profit_mean, r.profit_std, r.par_mean, r.bill_mean
        );
    }
    let pass = dynamic.profit_mean > fixed.profit_mean && dynamic.par_mean < fixed.par_mean;
    outcome(
        pass,
        format!(
            "last {} of {} episodes: dynamic profit {:.3} vs fixed {:.3}, PAR {:.3} vs {:.3}",
            cfg.training.eval_days,
            cfg.training.episodes,
            dynamic.profit_mean,
            fixed.profit_mean,
            dynamic.par_mean,
            fixed.par_mean
        ),
    )
}

fn forecast_cases() -> Outcome {
    let g = regime_case_gaps();
    let shift_wider = g.shift_band > g.shift_forecaster;
    let narrows = g.repeat_band < g.shift_band;
    outcome(
        shift_wider && narrows,
        format!(
            "forecaster RMSE {:.3}; shift days: band {:.3} vs forecaster {:.3}; repeat days: band {:.3} vs forecaster {:.3}",
            g.forecaster_rmse, g.shift_band, g.shift_forecaster, g.repeat_band, g.repeat_forecaster
        ),
    )
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_default()
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("small.json");
    std::fs::write(&config, small_config().to_json().unwrap()).unwrap();
    let mut checked = Vec::new();
    let mut pass = true;
    for command in ["synth-data", "train-lstm", "train-agents", "compare"] {
        let extra: &[&str] = if command == "compare" {
            &["--scenarios", "fixed,dynamic"]
        } else {
            &[]
        };
        let first = tmp.path().join(format!("{command}-1"));
        let second = tmp.path().join(format!("{command}-2"));
        let replay = tmp.path().join(format!("{command}-3"));
        let mut ok = true;
        for (out, cfg_path) in [
            (&first, config.clone()),
            (&second, config.clone()),
            (&replay, first.join("config.json")),
        ] {
            let mut args = vec![
                command,
                "--config",
                cfg_path.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ];
            args.extend_from_slice(extra);
            ok &= cli(&args) == 0;
        }
        let reference = read(&first.join("metrics.csv"));
        let reference = if reference.is_empty() {
            read(&first.join("scenarios.csv"))
        } else {
            reference
        };
        for other in [&second, &replay] {
            let got = read(&other.join("metrics.csv"));
            let got = if got.is_empty() {
                read(&other.join("scenarios.csv"))
            } else {
                got
            };
            ok &= !reference.is_empty() && got == reference;
        }
        if command == "compare" {
            for name in ["fixed_metrics.csv", "dynamic_metrics.csv"] {
                let reference = read(&first.join("logs").join(name));
                ok &= !reference.is_empty();
                ok &= [&second, &replay]
                    .iter()
                    .all(|d| read(&d.join("logs").join(name)) == reference);
            }
        }
        pass &= ok;
        checked.push(format!(
            "{command} {}",
            if ok { "identical" } else { "DIFFERS" }
        ));
    }
    outcome(
        pass,
        format!(
            "two runs plus a replay of the stored config: {}",
            checked.join(", ")
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome, Option<Duration>);

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [Criterion; 10] = [
        (
            1,
            "dispatch oracle",
            dispatch_oracle,
            Some(budget::DISPATCH),
        ),
        (2, "gradient suite", gradient_suite, Some(budget::GRADIENTS)),
        (3, "ddpg quadratic bowl", ddpg_bowl, Some(budget::BOWL)),
        (4, "accounting closure", accounting, None),
        (5, "battery invariants", battery, None),
        (
            6,
            "forecaster floor",
            forecaster_floor,
            Some(budget::FORECASTER),
        ),
        (7, "architecture ordering", architecture_ordering, None),
        (
            8,
            "end-to-end ordering",
            end_to_end,
            Some(budget::END_TO_END),
        ),
        (9, "band vs forecaster", forecast_cases, None),
        (10, "determinism", determinism, None),
    ];
    let filter: Vec<u32> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (id, name, run, limit) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let on_time = within(elapsed, limit);
        let pass = out.pass && on_time;
        if !pass {
            failed += 1;
        }
        let budget = limit
            .map(|l| format!(" / {:.0} s", l.as_secs_f64()))
            .unwrap_or_default();
        println!(
            "{} {id:>2} {name}: {} [{:.1} s{budget}]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
