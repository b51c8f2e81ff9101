//! A household battery following a threshold rule against a time-of-use
//! tariff: charge in the cheap hours before the peak, discharge during it.

use gridmarl::config::ScenarioConfig;
use gridmarl::retail::{battery_step, bill_increment, prosumer_net_load, BatterySpec, PriceSignal};

fn main() {
    let tariff = ScenarioConfig::test_preset().pricing.tou_a;
    let spec = BatterySpec::default();
    let dt = 0.25;
    let cheap = tariff.iter().copied().fold(f64::INFINITY, f64::min);
    let dear = tariff.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let peak_start = tariff.iter().position(|&p| p == dear).unwrap_or(24);

    let mut soc = spec.soc0;
    let (mut bill_idle, mut bill_battery) = (0.0, 0.0);
    println!("hour  price   soc");
    for t in 0..96 {
        let hour = t / 4;
        let price = PriceSignal::net_metering(tariff[hour], t);
        let h = t as f64 * dt;
        let demand = 0.6 + 1.2 * (-(h - 19.0).powi(2) / 8.0).exp();
        let pv = (2.5 * (std::f64::consts::PI * (h - 6.0) / 12.0).sin()).max(0.0);

        let request = if price.buy <= cheap && hour < peak_start {
            -spec.p_charge_max
        } else if price.buy >= dear {
            spec.p_discharge_max
        } else {
            0.0
        };
        let (b, next) = battery_step(&spec, soc, request, dt);
        soc = next;
        bill_idle += bill_increment(prosumer_net_load(demand, pv, 0.0), &price, dt);
        bill_battery += bill_increment(prosumer_net_load(demand, pv, b), &price, dt);
        if t % 4 == 0 {
            println!("{hour:>4} {:>6.3} {soc:>5.2}", price.buy);
        }
    }
    println!("bill without battery {bill_idle:.3} $, with battery {bill_battery:.3} $");
}
