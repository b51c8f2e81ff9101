//! Trains the retailer and household agents under dynamic pricing and
//! prints learning progress in blocks of episodes.
//!
//! `cargo run --release --example market_training -- [episodes]`

use gridmarl::config::ScenarioConfig;
use gridmarl::scenarios::{fit_forecaster, run_baseline, PricingPolicy, ScenarioPools, WindData};

fn main() -> gridmarl::Result<()> {
    let mut cfg = ScenarioConfig::test_preset();
    if let Some(n) = std::env::args().nth(1).and_then(|a| a.parse().ok()) {
        cfg.training.episodes = n;
        cfg.training.eval_days = cfg.training.eval_days.min(n);
    }
    let data = WindData::load(&cfg)?;
    let fit = fit_forecaster(&cfg, &data.raw, &cfg.forecaster)?;
    let pools = ScenarioPools::build(&data, &fit.model)?;
    let policy = PricingPolicy::builtin("dynamic", &cfg)?;

    let (report, run) = run_baseline(
        &policy,
        &cfg,
        pools.for_policy(&policy),
        cfg.training.eval_days,
    )?;
    println!("episodes   profit    PAR   price  household bill");
    for (i, block) in run.history.chunks(20).enumerate() {
        let n = block.len() as f64;
        let mean = |f: &dyn Fn(&gridmarl::env::log::EpisodeSummary) -> f64| {
            block.iter().map(f).sum::<f64>() / n
        };
        println!(
            "{:>4}-{:<4} {:>7.3} {:>6.3} {:>6.3} {:>8.3}",
            i * 20,
            i * 20 + block.len() - 1,
            mean(&|s| s.profit),
            mean(&|s| s.par.unwrap_or(f64::NAN)),
            mean(&|s| s.price_mean),
            mean(&|s| s.bill_mean)
        );
    }
    println!(
        "last {} episodes: profit {:.3} ± {:.3}, PAR {:.3}",
        report.days, report.profit_mean, report.profit_std, report.par_mean
    );
    Ok(())
}
