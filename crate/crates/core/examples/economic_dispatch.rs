//! Clears the three-unit market over one day of load and wind, then prints
//! the hourly dispatch and LMP.

use gridmarl::market::{clear_series, Market};

fn main() -> gridmarl::Result<()> {
    let market = Market::default();

    for (demand, wind) in [(20.0, 0.0), (10.0, 0.0), (30.0, 40.0)] {
        let d = market.dispatch(demand, wind, None)?;
        println!(
            "{demand:>5.1} MW load, {wind:>4.1} MW wind -> LMP {:.2} $/MWh",
            d.lmp
        );
    }

    let load: Vec<f64> = (0..24)
        .map(|h| {
            60.0 + 35.0
                * (std::f64::consts::PI * (h as f64 - 7.0) / 12.0)
                    .sin()
                    .max(0.0)
        })
        .collect();
    let wind: Vec<f64> = (0..24)
        .map(|h| 25.0 + 15.0 * (h as f64 / 4.0).cos())
        .collect();
    let cleared = clear_series(&load, &wind, &market)?;

    println!("\nhour   load   wind  conventional units      LMP");
    for (h, c) in cleared.iter().enumerate() {
        let r = &c.result;
        let units: Vec<String> = r.outputs.iter().map(|p| format!("{p:>6.1}")).collect();
        println!(
            "{h:>4} {:>6.1} {:>6.1}  {}  {:>8.2}",
            c.load,
            r.wind_dispatched,
            units.join(" "),
            r.lmp
        );
    }
    let cost: f64 = cleared.iter().map(|c| c.result.total_variable_cost).sum();
    println!("daily variable cost {cost:.1} $");
    Ok(())
}
