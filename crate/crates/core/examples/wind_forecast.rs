//! Trains the stacked LSTM forecaster on synthetic wind, scores it against
//! persistence and issues a day-ahead forecast with a ±10% band.

use gridmarl::config::ScenarioConfig;
use gridmarl::forecast::{predict_day_ahead, uncertainty_band_forecast};
use gridmarl::scenarios::{fit_forecaster, WindData};

fn main() -> gridmarl::Result<()> {
    let cfg = ScenarioConfig::test_preset();
    let data = WindData::load(&cfg)?;
    let fit = fit_forecaster(&cfg, &data.raw, &cfg.forecaster)?;
    let m = &fit.metrics;
    println!(
        "{} on {} test windows: rmse {:.3} MW, mae {:.3} MW (persistence rmse {:.3})",
        fit.model.config.kind.name(),
        fit.prepared.test.len(),
        m.rmse,
        m.mae,
        fit.persistence.rmse
    );

    let day = data.days() - 1;
    let w = fit.model.window_len;
    let forecast = predict_day_ahead(&fit.model, &data.hourly[24 * day - w..24 * day])?;
    let band =
        uncertainty_band_forecast(&data.hourly_power(day - 1), cfg.pricing.uncertainty_margin)?;
    let actual = data.hourly_power(day);
    println!("\nhour  actual  lstm   band");
    for h in 0..24 {
        println!(
            "{h:>4} {:>7.2} {:>6.2}  [{:.2}, {:.2}]",
            actual[h], forecast[h], band.low[h], band.high[h]
        );
    }
    Ok(())
}
