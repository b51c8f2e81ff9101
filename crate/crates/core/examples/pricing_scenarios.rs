//! Trains every pricing scenario on common days and ranks them by retailer
//! profit, printing the comparison as CSV.
//!
//! `cargo run --release --example pricing_scenarios -- [episodes]`

use gridmarl::config::ScenarioConfig;
use gridmarl::scenarios::{
    compare_scenarios, fit_forecaster, run_scenarios, PricingPolicy, ScenarioPools, WindData,
};

fn main() -> gridmarl::Result<()> {
    let mut cfg = ScenarioConfig::test_preset();
    if let Some(n) = std::env::args().nth(1).and_then(|a| a.parse().ok()) {
        cfg.training.episodes = n;
        cfg.training.eval_days = cfg.training.eval_days.min(n);
    }
    let data = WindData::load(&cfg)?;
    let fit = fit_forecaster(&cfg, &data.raw, &cfg.forecaster)?;
    let pools = ScenarioPools::build(&data, &fit.model)?;
    let policies = ["fixed", "tou_a", "tou_b", "margin", "dynamic"]
        .iter()
        .map(|n| PricingPolicy::builtin(n, &cfg))
        .collect::<gridmarl::Result<Vec<_>>>()?;
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());

    let results = run_scenarios(&policies, &cfg, &|p| pools.for_policy(p), threads)?;
    let reports: Vec<_> = results.into_iter().map(|(r, _)| r).collect();
    let cmp = compare_scenarios(&reports)?;
    cmp.write_csv(std::io::stdout())?;
    for (name, ratio) in &cmp.profit_ratios {
        eprintln!("top / {name}: {ratio:.2}");
    }
    Ok(())
}
