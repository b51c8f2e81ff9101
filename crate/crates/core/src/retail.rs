//! Household physics and retail accounting.
//!
//! Powers are kW averaged over an interval of `dt` hours. A positive battery
//! action discharges into the home, so `e = d − g − b` and the state of
//! charge falls by `b·dt/Q`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatterySpec {
    pub capacity_kwh: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub p_charge_max: f64,
    pub p_discharge_max: f64,
    pub soc0: f64,
    /// One-way efficiency applied on both charge and discharge.
    #[serde(default = "one")]
    pub efficiency: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for BatterySpec {
    fn default() -> Self {
        Self {
            capacity_kwh: 10.0,
            soc_min: 0.10,
            soc_max: 0.90,
            p_charge_max: 2.0,
            p_discharge_max: 2.0,
            soc0: 0.10,
            efficiency: 1.0,
        }
    }
}

impl BatterySpec {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 <= self.soc_min
            && self.soc_min < self.soc_max
            && self.soc_max <= 1.0
            && self.capacity_kwh > 0.0
            && self.p_charge_max > 0.0
            && self.p_discharge_max > 0.0
            && (self.soc_min..=self.soc_max).contains(&self.soc0)
            && self.efficiency > 0.0
            && self.efficiency <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid battery spec {self:?}")))
        }
    }
}

/// Clips the request to the power limits, then to what the state of charge
/// allows over `dt`, and returns `(effective_b, new_soc)`.
pub fn battery_step(spec: &BatterySpec, soc: f64, requested_b: f64, dt: f64) -> (f64, f64) {
    let q = spec.capacity_kwh;
    let eta = spec.efficiency;
    let soc = soc.clamp(spec.soc_min, spec.soc_max);
    let b = requested_b.clamp(-spec.p_charge_max, spec.p_discharge_max);
    let max_discharge = (soc - spec.soc_min) * q * eta / dt;
    let max_charge = (spec.soc_max - soc) * q / (eta * dt);
    let b = b.clamp(-max_charge, max_discharge);
    let drawn = if b >= 0.0 { b / eta } else { b * eta };
    let new_soc = (soc - drawn * dt / q).clamp(spec.soc_min, spec.soc_max);
    (b, new_soc)
}

pub fn prosumer_net_load(d: f64, g: f64, b: f64) -> f64 {
    d - g - b
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceSignal {
    /// Price paid to a household exporting energy, $/kWh.
    pub sell: f64,
    /// Price charged to a household importing energy, $/kWh.
    pub buy: f64,
    pub interval: usize,
}

impl PriceSignal {
    pub fn net_metering(price: f64, interval: usize) -> Self {
        Self {
            sell: price,
            buy: price,
            interval,
        }
    }
}

/// Dollars owed for one interval; negative when the household is paid.
pub fn bill_increment(e: f64, price: &PriceSignal, dt: f64) -> f64 {
    if e >= 0.0 {
        e * dt * price.buy
    } else {
        e * dt * price.sell
    }
}

/// `L^D`: consumers contribute their demand, prosumers their net load.
pub fn aggregate_load(consumer_demand: &[f64], prosumer_net: &[f64]) -> f64 {
    consumer_demand.iter().sum::<f64>() + prosumer_net.iter().sum::<f64>()
}

/// Day-ahead purchase, buy-back from exporting households, and the
/// real-time deficiency settled at the real-time price. Loads and
/// buy-backs must share one power unit consistent with the prices.
#[allow(clippy::too_many_arguments)]
pub fn lse_total_cost(
    l_da: &[f64],
    rho_da: &[f64],
    l_rt: &[f64],
    rho_rt: &[f64],
    buybacks: &[f64],
    buyback_price: &[f64],
    dt: f64,
) -> Result<f64> {
    let n = l_da.len();
    for (name, len) in [
        ("rho_da", rho_da.len()),
        ("l_rt", l_rt.len()),
        ("rho_rt", rho_rt.len()),
        ("buybacks", buybacks.len()),
        ("buyback_price", buyback_price.len()),
    ] {
        if len != n {
            return Err(Error::Input(format!(
                "{name} has {len} intervals, expected {n}"
            )));
        }
    }
    Ok((0..n)
        .map(|t| {
            (l_da[t] * rho_da[t] + buybacks[t] * buyback_price[t] + (l_rt[t] - l_da[t]) * rho_rt[t])
                * dt
        })
        .sum())
}

pub fn lse_profit(retail_sales: f64, total_cost: f64) -> f64 {
    retail_sales - total_cost
}

/// `T·max(L)/ΣL`, or `None` when the total is not positive.
pub fn peak_to_average(load: &[f64]) -> Option<f64> {
    let total: f64 = load.iter().sum();
    if load.is_empty() || total <= 0.0 {
        return None;
    }
    let peak = load.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(load.len() as f64 * peak / total)
}

/// Money flows of one interval, from the households' bills upward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalSettlement {
    pub interval: usize,
    pub l_d: f64,
    pub price: PriceSignal,
    pub bills: Vec<f64>,
    /// Σ positive bills.
    pub retail_revenue: f64,
    /// Σ |negative bills|.
    pub buyback_cost: f64,
    /// Wholesale purchase cost for the interval.
    pub procurement_cost: f64,
}

impl IntervalSettlement {
    pub fn lse_cost(&self) -> f64 {
        self.buyback_cost + self.procurement_cost
    }

    pub fn lse_profit(&self) -> f64 {
        self.retail_revenue - self.lse_cost()
    }

    /// Energy bought from the households during the interval, kW.
    pub fn exports(net_loads: &[f64]) -> f64 {
        net_loads.iter().filter(|e| **e < 0.0).map(|e| -e).sum()
    }

    /// Energy sold to the households during the interval, kW.
    pub fn imports(net_loads: &[f64]) -> f64 {
        net_loads.iter().filter(|e| **e >= 0.0).sum()
    }
}

/// `net_loads` lists every household (consumer demand or prosumer `e`).
pub fn settle_interval(
    interval: usize,
    net_loads: &[f64],
    price: PriceSignal,
    procurement_cost: f64,
    dt: f64,
) -> IntervalSettlement {
    let bills: Vec<f64> = net_loads
        .iter()
        .map(|&e| bill_increment(e, &price, dt))
        .collect();
    IntervalSettlement {
        interval,
        l_d: net_loads.iter().sum(),
        price,
        retail_revenue: bills.iter().filter(|b| **b > 0.0).sum(),
        buyback_cost: bills.iter().filter(|b| **b < 0.0).map(|b| -b).sum(),
        bills,
        procurement_cost,
    }
}

/// Writes `interval,L_D,C_s,C_b,lse_revenue,lse_cost,prosumer_id,bill`,
/// one row per household per interval.
pub fn write_ledger<W: Write>(writer: W, settlements: &[IntervalSettlement]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "interval",
        "L_D",
        "C_s",
        "C_b",
        "lse_revenue",
        "lse_cost",
        "prosumer_id",
        "bill",
    ])?;
    for s in settlements {
        for (id, bill) in s.bills.iter().enumerate() {
            w.write_record([
                s.interval.to_string(),
                s.l_d.to_string(),
                s.price.sell.to_string(),
                s.price.buy.to_string(),
                s.retail_revenue.to_string(),
                s.lse_cost().to_string(),
                id.to_string(),
                bill.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
