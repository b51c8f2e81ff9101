//! Day-ahead wind from the ±10% persistence band against the trained
//! forecaster, on wind that switches regime every few days. The band
//! misprices the day after a switch; the forecaster narrows the gap
//! between real-time and day-ahead LMPs.

use gridmarl::config::{ScenarioConfig, WindSource};
use gridmarl::data::WindSynthSpec;
use gridmarl::scenarios::{
    fit_forecaster, run_case_comparison, PolicyKind, PricingPolicy, WindData,
};

fn main() -> gridmarl::Result<()> {
    let mut cfg = ScenarioConfig::test_preset();
    cfg.wind = WindSource::Synthetic(WindSynthSpec::regime_shift(60));
    let data = WindData::load(&cfg)?;
    let fit = fit_forecaster(&cfg, &data.raw, &cfg.forecaster)?;
    println!("forecaster test rmse {:.3} MW", fit.metrics.rmse);

    let PolicyKind::Fixed { price } = PricingPolicy::builtin("fixed", &cfg)?.kind else {
        unreachable!()
    };
    let held_out = 47..59;
    for (label, phase) in [("repeat", 0), ("switch", 1), ("return", 2)] {
        let days: Vec<usize> = held_out.clone().filter(|i| i % 3 == phase).collect();
        let c = run_case_comparison(&cfg.env, cfg.seed, &data, &fit.model, &days, price)?;
        println!(
            "{label:<7} days {days:?}: mean |LMP gap| band {:.3} $/MWh, forecaster {:.3} $/MWh",
            c.margin.lmp_gap_mean, c.forecaster.lmp_gap_mean
        );
    }
    Ok(())
}
