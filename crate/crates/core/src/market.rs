//! Uniform-price wholesale clearing over convex quadratic generators and a
//! price-taking wind plant.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub name: String,
    /// `[a0 $, a1 $/MWh, a2 $/MWh²]` for `a0 + a1 p + a2 p²`.
    pub cost_coeffs: [f64; 3],
    pub p_min: f64,
    pub p_max: f64,
    pub ramp_down: f64,
    pub ramp_up: f64,
}

impl GeneratorSpec {
    /// Ramp bounds default to the full range, i.e. inactive.
    pub fn new(name: impl Into<String>, cost_coeffs: [f64; 3], p_min: f64, p_max: f64) -> Self {
        Self {
            name: name.into(),
            cost_coeffs,
            p_min,
            p_max,
            ramp_down: p_max,
            ramp_up: p_max,
        }
    }

    pub fn cost(&self, p: f64) -> f64 {
        let [a0, a1, a2] = self.cost_coeffs;
        a0 + a1 * p + a2 * p * p
    }

    pub fn marginal_cost(&self, p: f64) -> f64 {
        self.cost_coeffs[1] + 2.0 * self.cost_coeffs[2] * p
    }

    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 <= self.p_min
            && self.p_min <= self.p_max
            && self.cost_coeffs[2] >= 0.0
            && self.ramp_down.is_finite()
            && self.ramp_up.is_finite()
            && self.ramp_down >= 0.0
            && self.ramp_up >= 0.0
            && self.cost_coeffs.iter().all(|c| c.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "generator `{}` has invalid limits or costs",
                self.name
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindPlantSpec {
    pub p_max: f64,
    pub offer_price: f64,
}

impl Default for WindPlantSpec {
    fn default() -> Self {
        Self {
            p_max: 50.0,
            offer_price: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    pub outputs: Vec<f64>,
    pub wind_dispatched: f64,
    pub lmp: f64,
    pub total_variable_cost: f64,
    pub feasible: bool,
}

impl DispatchResult {
    pub fn total_supply(&self) -> f64 {
        self.outputs.iter().sum::<f64>() + self.wind_dispatched
    }

    /// Conventional output only (the `P^G` term of the LSE reward).
    pub fn conventional(&self) -> f64 {
        self.outputs.iter().sum()
    }
}

/// One unit as seen by the solver: bounds after ramp tightening, linear and
/// quadratic marginal-cost terms.
#[derive(Clone, Copy, Debug)]
struct Unit {
    lo: f64,
    hi: f64,
    a1: f64,
    a2: f64,
}

impl Unit {
    fn mc(&self, p: f64) -> f64 {
        self.a1 + 2.0 * self.a2 * p
    }

    /// Output at price `lambda`. Flat units sit at `lo` on a tie unless
    /// `upper` is set.
    fn output(&self, lambda: f64, upper: bool) -> f64 {
        if self.a2 > 0.0 {
            ((lambda - self.a1) / (2.0 * self.a2)).clamp(self.lo, self.hi)
        } else if lambda > self.a1 || (upper && lambda == self.a1) {
            self.hi
        } else {
            self.lo
        }
    }
}

fn supply(units: &[Unit], lambda: f64, upper: bool) -> f64 {
    units.iter().map(|u| u.output(lambda, upper)).sum()
}

/// Solves min Σ C_i(p_i) s.t. Σ p_i = demand, lo ≤ p ≤ hi exactly by
/// locating the price at which the supply curve first meets demand.
/// Returns outputs and the price.
fn water_fill(units: &[Unit], demand: f64) -> (Vec<f64>, f64) {
    let mut breaks: Vec<f64> = Vec::with_capacity(units.len() * 2);
    for u in units {
        breaks.push(u.mc(u.lo));
        breaks.push(u.mc(u.hi));
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let floor: f64 = units.iter().map(|u| u.lo).sum();
    if demand <= floor {
        let lambda = units
            .iter()
            .filter(|u| u.hi > u.lo)
            .map(|u| u.mc(u.lo))
            .fold(f64::INFINITY, f64::min);
        let lambda = if lambda.is_finite() {
            lambda
        } else {
            units
                .iter()
                .map(|u| u.mc(u.lo))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        return (units.iter().map(|u| u.lo).collect(), lambda);
    }

    let k = breaks
        .iter()
        .position(|&b| supply(units, b, true) >= demand)
        .unwrap_or(breaks.len() - 1);
    let bk = breaks[k];
    let below = supply(units, bk, false);

    let lambda = if below < demand {
        bk
    } else {
        // demand is met strictly inside (b_{k-1}, b_k]: supply is affine there
        let left = if k == 0 {
            f64::NEG_INFINITY
        } else {
            breaks[k - 1]
        };
        let probe = if left.is_finite() {
            0.5 * (left + bk)
        } else {
            bk - 1.0
        };
        let mut fixed = 0.0;
        let mut slope = 0.0;
        let mut offset = 0.0;
        for u in units {
            let p = u.output(probe, false);
            if u.a2 > 0.0 && p > u.lo && p < u.hi {
                slope += 1.0 / (2.0 * u.a2);
                offset += u.a1 / (2.0 * u.a2);
            } else {
                fixed += p;
            }
        }
        if slope > 0.0 {
            ((demand - fixed + offset) / slope).clamp(left.max(f64::MIN), bk)
        } else {
            bk
        }
    };

    let mut out: Vec<f64> = units.iter().map(|u| u.output(lambda, false)).collect();
    let flats: Vec<usize> = (0..units.len())
        .filter(|&i| units[i].a2 == 0.0 && units[i].a1 == lambda && units[i].hi > units[i].lo)
        .collect();
    if !flats.is_empty() {
        let rest = demand - out.iter().sum::<f64>();
        let headroom: f64 = flats.iter().map(|&i| units[i].hi - units[i].lo).sum();
        let share = (rest / headroom).clamp(0.0, 1.0);
        for &i in &flats {
            out[i] = units[i].lo + share * (units[i].hi - units[i].lo);
        }
    }
    (out, lambda)
}

/// Least-cost dispatch for one interval.
///
/// With `prev_outputs` the generator bounds are tightened to the ramp window
/// around the previous interval. Demand outside the reachable range yields a
/// result with `feasible = false`; on shortage every unit runs at its upper
/// bound and the LMP is the highest marginal cost at cap.
pub fn economic_dispatch(
    demand: f64,
    wind_available: f64,
    gens: &[GeneratorSpec],
    wind: &WindPlantSpec,
    prev_outputs: Option<&[f64]>,
) -> Result<DispatchResult> {
    if !(demand >= 0.0 && demand.is_finite()) {
        return Err(Error::Input(format!(
            "demand must be a finite non-negative MW value, got {demand}"
        )));
    }
    if !(0.0..=wind.p_max + 1e-9).contains(&wind_available) {
        return Err(Error::Input(format!(
            "wind availability {wind_available} MW outside [0, {}]",
            wind.p_max
        )));
    }
    if let Some(prev) = prev_outputs {
        if prev.len() != gens.len() {
            return Err(Error::shape(
                "previous generator outputs",
                gens.len(),
                prev.len(),
            ));
        }
    }
    let mut units = Vec::with_capacity(gens.len() + 1);
    for (i, g) in gens.iter().enumerate() {
        g.validate()?;
        let (mut lo, mut hi) = (g.p_min, g.p_max);
        if let Some(prev) = prev_outputs {
            lo = lo.max(prev[i] - g.ramp_down);
            hi = hi.min(prev[i] + g.ramp_up);
            if lo > hi {
                // ramp window misses the capacity band; stay as close as possible
                let p = prev[i].clamp(g.p_min, g.p_max);
                lo = p;
                hi = p;
            }
        }
        units.push(Unit {
            lo,
            hi,
            a1: g.cost_coeffs[1],
            a2: g.cost_coeffs[2],
        });
    }
    units.push(Unit {
        lo: 0.0,
        hi: wind_available.min(wind.p_max),
        a1: wind.offer_price,
        a2: 0.0,
    });

    let floor: f64 = units.iter().map(|u| u.lo).sum();
    let cap: f64 = units.iter().map(|u| u.hi).sum();
    let (outputs, lmp, feasible) = if demand > cap {
        let lmp = units
            .iter()
            .map(|u| u.mc(u.hi))
            .fold(f64::NEG_INFINITY, f64::max);
        (units.iter().map(|u| u.hi).collect(), lmp, false)
    } else {
        let (out, lambda) = water_fill(&units, demand);
        (out, lambda, demand >= floor)
    };

    let wind_dispatched = outputs[gens.len()];
    let gen_out = outputs[..gens.len()].to_vec();
    let total_variable_cost = gens
        .iter()
        .zip(&gen_out)
        .map(|(g, &p)| g.cost(p))
        .sum::<f64>()
        + wind.offer_price * wind_dispatched;
    Ok(DispatchResult {
        outputs: gen_out,
        wind_dispatched,
        lmp,
        total_variable_cost,
        feasible,
    })
}

/// `|Σ outputs + wind − demand| ≤ tol`; always false for infeasible results.
pub fn check_power_balance(result: &DispatchResult, demand: f64, tol: f64) -> bool {
    result.feasible && (result.total_supply() - demand).abs() <= tol
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clearing {
    pub load: f64,
    pub result: DispatchResult,
}

/// Chains dispatches over consecutive intervals so that ramp limits bind
/// between neighbours.
pub fn clear_series(load: &[f64], wind_mw: &[f64], market: &Market) -> Result<Vec<Clearing>> {
    if load.len() != wind_mw.len() {
        return Err(Error::Input(format!(
            "load has {} intervals but wind has {}",
            load.len(),
            wind_mw.len()
        )));
    }
    let mut prev: Option<Vec<f64>> = None;
    let mut out = Vec::with_capacity(load.len());
    for (&l, &w) in load.iter().zip(wind_mw) {
        let r = market.dispatch(l, w, prev.as_deref())?;
        prev = Some(r.outputs.clone());
        out.push(Clearing { load: l, result: r });
    }
    Ok(out)
}

/// Day-ahead clearing against forecast load and wind.
pub fn clear_day_ahead(
    forecast_load: &[f64],
    forecast_wind: &[f64],
    market: &Market,
) -> Result<Vec<Clearing>> {
    clear_series(forecast_load, forecast_wind, market)
}

/// Real-time clearing against realized load and wind.
pub fn clear_real_time(
    actual_load: &[f64],
    actual_wind: &[f64],
    market: &Market,
) -> Result<Vec<Clearing>> {
    clear_series(actual_load, actual_wind, market)
}

/// Generator roster plus the wind plant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Market {
    pub generators: Vec<GeneratorSpec>,
    pub wind: WindPlantSpec,
}

impl Default for Market {
    fn default() -> Self {
        Self {
            generators: vec![
                GeneratorSpec::new("G1", [100.0, 10.0, 0.2], 0.0, 15.0),
                GeneratorSpec::new("G2", [200.0, 15.0, 0.35], 0.0, 100.0),
            ],
            wind: WindPlantSpec::default(),
        }
    }
}

impl Market {
    pub fn dispatch(
        &self,
        demand: f64,
        wind_available: f64,
        prev: Option<&[f64]>,
    ) -> Result<DispatchResult> {
        let w = wind_available.clamp(0.0, self.wind.p_max);
        economic_dispatch(demand, w, &self.generators, &self.wind, prev)
    }

    pub fn capacity(&self) -> f64 {
        self.generators.iter().map(|g| g.p_max).sum::<f64>() + self.wind.p_max
    }

    pub fn validate(&self) -> Result<()> {
        if self.generators.is_empty() {
            return Err(Error::Config("market needs at least one generator".into()));
        }
        self.generators
            .iter()
            .try_for_each(GeneratorSpec::validate)?;
        if !(self.wind.p_max >= 0.0 && self.wind.offer_price.is_finite()) {
            return Err(Error::Config(
                "wind plant capacity must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Writes `interval,lmp,g1_mw,g2_mw,wind_mw,demand_mw`. Rosters with more
/// than two generators get extra `g{k}_mw` columns.
pub fn write_dispatch_trace<W: Write>(writer: W, clearings: &[Clearing]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let n = clearings
        .first()
        .map_or(2, |c| c.result.outputs.len().max(2));
    let mut header = vec!["interval".to_string(), "lmp".to_string()];
    header.extend((1..=n).map(|k| format!("g{k}_mw")));
    header.extend(["wind_mw".to_string(), "demand_mw".to_string()]);
    w.write_record(&header)?;
    for (i, c) in clearings.iter().enumerate() {
        let mut row = vec![i.to_string(), c.result.lmp.to_string()];
        for k in 0..n {
            row.push(c.result.outputs.get(k).copied().unwrap_or(0.0).to_string());
        }
        row.push(c.result.wind_dispatched.to_string());
        row.push(c.load.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
