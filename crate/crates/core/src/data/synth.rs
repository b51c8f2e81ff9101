//! Synthetic wind and household profiles.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::WindRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub cut_in: f64,
    pub rated_speed: f64,
    pub cut_out: f64,
    pub p_max: f64,
}

impl Default for PowerCurve {
    fn default() -> Self {
        Self {
            cut_in: 3.0,
            rated_speed: 12.0,
            cut_out: 25.0,
            p_max: 50.0,
        }
    }
}

impl PowerCurve {
    /// Cubic ramp between cut-in and rated speed, flat to cut-out.
    pub fn power(&self, v: f64) -> f64 {
        if v < self.cut_in || v >= self.cut_out {
            0.0
        } else if v >= self.rated_speed {
            self.p_max
        } else {
            let (a, b) = (self.cut_in.powi(3), self.rated_speed.powi(3));
            self.p_max * (v.powi(3) - a) / (b - a)
        }
    }
}

/// Shape of one day's mean wind speed and temperature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayRegime {
    pub mean_speed: f64,
    pub diurnal_amplitude: f64,
    /// Hour of the daily speed maximum.
    pub peak_hour: f64,
    #[serde(default)]
    pub temperature_offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindSynthSpec {
    pub days: usize,
    pub start: DateTime<Utc>,
    pub cadence_minutes: u32,
    /// Days cycle through these regimes in order.
    pub regimes: Vec<DayRegime>,
    /// AR(1) speed deviation: `x ← φ x + σ ε` per record.
    pub ar_coeff: f64,
    pub ar_sigma: f64,
    pub temperature_mean: f64,
    pub temperature_amplitude: f64,
    pub direction_mean: f64,
    /// Standard deviation of the direction's AR(1) wander, degrees.
    pub direction_sigma: f64,
    pub power_curve: PowerCurve,
}

impl Default for WindSynthSpec {
    fn default() -> Self {
        Self {
            days: 120,
            start: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
            cadence_minutes: 10,
            regimes: vec![DayRegime {
                mean_speed: 8.5,
                diurnal_amplitude: 3.0,
                peak_hour: 3.0,
                temperature_offset: 0.0,
            }],
            ar_coeff: 0.97,
            ar_sigma: 0.35,
            temperature_mean: 12.0,
            temperature_amplitude: 5.0,
            direction_mean: 220.0,
            direction_sigma: 3.0,
            power_curve: PowerCurve::default(),
        }
    }
}

impl WindSynthSpec {
    /// A cycle A, A′, B: A′ repeats A's wind but is 6 °C warmer, B peaks
    /// twelve hours later at a different level. A forecaster that reads the
    /// temperature can anticipate every transition; repeating yesterday
    /// only works on A′ days.
    pub fn regime_shift(days: usize) -> Self {
        let a = DayRegime {
            mean_speed: 9.0,
            diurnal_amplitude: 4.0,
            peak_hour: 4.0,
            temperature_offset: 0.0,
        };
        let a_prime = DayRegime {
            temperature_offset: 6.0,
            ..a.clone()
        };
        let b = DayRegime {
            mean_speed: 7.0,
            diurnal_amplitude: 4.0,
            peak_hour: 16.0,
            temperature_offset: -6.0,
        };
        Self {
            days,
            regimes: vec![a, a_prime, b],
            ar_coeff: 0.9,
            ar_sigma: 0.1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.days == 0 || self.cadence_minutes == 0 || self.regimes.is_empty() {
            return Err(Error::Config(
                "wind synthesis needs days, cadence and at least one regime".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.ar_coeff.abs()) || self.ar_sigma < 0.0 {
            return Err(Error::Config(
                "AR(1) coefficient must satisfy |φ| < 1 and σ ≥ 0".into(),
            ));
        }
        Ok(())
    }

    pub fn records_per_day(&self) -> usize {
        (24 * 60 / self.cadence_minutes) as usize
    }
}

/// Stationary AR(1) sequence `x_{t+1} = φ x_t + σ ε_t`.
pub fn ar1_series<R: Rng + ?Sized>(phi: f64, sigma: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let sd0 = sigma / (1.0 - phi * phi).sqrt();
    let z: f64 = StandardNormal.sample(rng);
    let mut x = sd0 * z;
    out.push(x);
    for _ in 1..n {
        let e: f64 = StandardNormal.sample(rng);
        x = phi * x + sigma * e;
        out.push(x);
    }
    out
}

/// Records at the configured cadence. With `ar_sigma = 0` and
/// `direction_sigma = 0` the series is an exact repetition of the regime
/// cycle.
pub fn synthesize_wind<R: Rng + ?Sized>(
    spec: &WindSynthSpec,
    rng: &mut R,
) -> Result<Vec<WindRecord>> {
    spec.validate()?;
    let per_day = spec.records_per_day();
    let n = spec.days * per_day;
    let speed_noise = ar1_series(spec.ar_coeff, spec.ar_sigma, n, rng);
    let dir_noise = ar1_series(
        0.99,
        spec.direction_sigma * (1.0 - 0.99f64 * 0.99).sqrt(),
        n,
        rng,
    );
    let step = Duration::minutes(spec.cadence_minutes as i64);
    let tau = std::f64::consts::TAU;
    Ok((0..n)
        .map(|i| {
            let day = i / per_day;
            let r = &spec.regimes[day % spec.regimes.len()];
            let hour = (i % per_day) as f64 * spec.cadence_minutes as f64 / 60.0;
            let phase = tau * (hour - r.peak_hour) / 24.0;
            let speed =
                (r.mean_speed + r.diurnal_amplitude * phase.cos() + speed_noise[i]).max(0.0);
            let temp = spec.temperature_mean
                + r.temperature_offset
                + spec.temperature_amplitude * (tau * (hour - 14.0) / 24.0).cos();
            let dir = (spec.direction_mean + dir_noise[i]).rem_euclid(360.0);
            WindRecord::complete(
                spec.start + step * i as i32,
                speed,
                dir,
                temp,
                spec.power_curve.power(speed),
            )
        })
        .collect())
}

/// Hourly records whose power is `offset + amplitude·sin(2πh/24) + σε`.
/// Speed, direction and temperature are held constant.
pub fn sinusoid_records<R: Rng + ?Sized>(
    hours: usize,
    amplitude: f64,
    offset: f64,
    sigma: f64,
    rng: &mut R,
) -> Vec<WindRecord> {
    let start = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    (0..hours)
        .map(|h| {
            let e: f64 = StandardNormal.sample(rng);
            let p =
                offset + amplitude * (std::f64::consts::TAU * h as f64 / 24.0).sin() + sigma * e;
            WindRecord::complete(start + Duration::hours(h as i64), 8.0, 220.0, 12.0, p)
        })
        .collect()
}

/// Household demand and PV shapes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HouseholdProfileSpec {
    /// Overnight floor, kW.
    pub base_kw: f64,
    pub morning_peak_kw: f64,
    pub morning_peak_hour: f64,
    pub evening_peak_kw: f64,
    pub evening_peak_hour: f64,
    /// Width (standard deviation) of each peak, hours.
    pub peak_width_h: f64,
    /// Each household's demand is scaled by U(1 − j, 1 + j).
    pub household_jitter: f64,
    /// Multiplicative per-step noise, relative standard deviation.
    pub step_noise: f64,
    /// Clear-sky PV peak, kW.
    pub pv_peak_kw: f64,
    pub sunrise_hour: f64,
    pub sunset_hour: f64,
    pub cloudy_scale: f64,
    pub p_sunny: f64,
    /// Upper bound on PV output, kW.
    pub pv_max_kw: f64,
}

impl Default for HouseholdProfileSpec {
    fn default() -> Self {
        Self {
            base_kw: 0.8,
            morning_peak_kw: 0.8,
            morning_peak_hour: 8.0,
            evening_peak_kw: 1.6,
            evening_peak_hour: 19.0,
            peak_width_h: 2.0,
            household_jitter: 0.15,
            step_noise: 0.05,
            pv_peak_kw: 3.0,
            sunrise_hour: 6.0,
            sunset_hour: 18.0,
            cloudy_scale: 0.35,
            p_sunny: 0.6,
            pv_max_kw: 7.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weather {
    Sunny,
    Cloudy,
}

/// Demand and PV of every household for one day.
#[derive(Clone, Debug, PartialEq)]
pub struct DayProfile {
    pub weather: Weather,
    /// `demand[h][t]`, kW.
    pub demand: Vec<Vec<f64>>,
    /// `pv[h][t]`, kW; zero for plain consumers.
    pub pv: Vec<Vec<f64>>,
}

impl DayProfile {
    /// Aggregate `Σ (d − g)` per step with every battery idle.
    pub fn baseline_load(&self) -> Vec<f64> {
        let steps = self.demand.first().map_or(0, Vec::len);
        (0..steps)
            .map(|t| {
                self.demand
                    .iter()
                    .zip(&self.pv)
                    .map(|(d, g)| d[t] - g[t])
                    .sum()
            })
            .collect()
    }
}

/// Noise-free demand shape at `hour`.
pub fn demand_shape(spec: &HouseholdProfileSpec, hour: f64) -> f64 {
    let bump = |center: f64| {
        let z = (hour - center) / spec.peak_width_h;
        (-0.5 * z * z).exp()
    };
    spec.base_kw
        + spec.morning_peak_kw * bump(spec.morning_peak_hour)
        + spec.evening_peak_kw * bump(spec.evening_peak_hour)
}

/// Clear-sky PV at `hour`: a half sine between sunrise and sunset.
pub fn pv_shape(spec: &HouseholdProfileSpec, hour: f64) -> f64 {
    if hour <= spec.sunrise_hour || hour >= spec.sunset_hour {
        return 0.0;
    }
    let x = (hour - spec.sunrise_hour) / (spec.sunset_hour - spec.sunrise_hour);
    spec.pv_peak_kw * (std::f64::consts::PI * x).sin()
}

/// One day for `prosumers` PV households followed by `consumers` load-only
/// households. Steps sample the middle of each interval.
pub fn synthesize_day<R: Rng + ?Sized>(
    spec: &HouseholdProfileSpec,
    prosumers: usize,
    consumers: usize,
    steps: usize,
    rng: &mut R,
) -> Result<DayProfile> {
    let noise = Normal::new(0.0, spec.step_noise.max(0.0))
        .map_err(|e| Error::Config(format!("demand noise: {e}")))?;
    let weather = if rng.random::<f64>() < spec.p_sunny {
        Weather::Sunny
    } else {
        Weather::Cloudy
    };
    let pv_scale = match weather {
        Weather::Sunny => 1.0,
        Weather::Cloudy => spec.cloudy_scale,
    };
    let hours_per_step = 24.0 / steps as f64;
    let mut demand = Vec::with_capacity(prosumers + consumers);
    let mut pv = Vec::with_capacity(prosumers + consumers);
    for h in 0..prosumers + consumers {
        let jitter = 1.0 + spec.household_jitter * (2.0 * rng.random::<f64>() - 1.0);
        let mut d = Vec::with_capacity(steps);
        let mut g = Vec::with_capacity(steps);
        for t in 0..steps {
            let hour = (t as f64 + 0.5) * hours_per_step;
            let eps: f64 = noise.sample(rng);
            d.push((demand_shape(spec, hour) * jitter * (1.0 + eps)).max(0.0));
            let gen = if h < prosumers {
                (pv_shape(spec, hour) * pv_scale).clamp(0.0, spec.pv_max_kw)
            } else {
                0.0
            };
            g.push(gen);
        }
        demand.push(d);
        pv.push(g);
    }
    Ok(DayProfile {
        weather,
        demand,
        pv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::rng::stream;

    #[test]
    fn noise_free_wind_is_periodic() {
        let spec = WindSynthSpec {
            days: 3,
            ar_sigma: 0.0,
            direction_sigma: 0.0,
            ..WindSynthSpec::default()
        };
        let w = synthesize_wind(&spec, &mut stream(1, "data")).unwrap();
        let per = spec.records_per_day();
        for i in 0..per {
            assert_eq!(w[i].active_power, w[i + per].active_power);
            assert_eq!(w[i].wind_speed, w[i + 2 * per].wind_speed);
        }
    }

    #[test]
    fn same_seed_same_series() {
        let spec = WindSynthSpec {
            days: 2,
            ..WindSynthSpec::default()
        };
        let a = synthesize_wind(&spec, &mut stream(5, "data")).unwrap();
        let b = synthesize_wind(&spec, &mut stream(5, "data")).unwrap();
        assert_eq!(a, b);
        assert!(a
            .iter()
            .all(|r| (0.0..=50.0).contains(&r.active_power.unwrap())));
    }

    #[test]
    fn ar1_lag_one_autocorrelation() {
        let x = ar1_series(0.9, 2.0, 10_000, &mut stream(11, "ar"));
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let cov: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        let rho = cov / var;
        assert!((0.85..=0.95).contains(&rho), "lag-1 autocorrelation {rho}");
    }

    #[test]
    fn power_curve_regions() {
        let c = PowerCurve::default();
        assert_eq!(c.power(2.0), 0.0);
        assert_eq!(c.power(15.0), 50.0);
        assert_eq!(c.power(30.0), 0.0);
        assert!(c.power(8.0) > 0.0 && c.power(8.0) < 50.0);
    }

    #[test]
    fn households_have_double_peak_and_daylight_pv() {
        let spec = HouseholdProfileSpec {
            step_noise: 0.0,
            household_jitter: 0.0,
            ..HouseholdProfileSpec::default()
        };
        let day = synthesize_day(&spec, 1, 1, 96, &mut stream(2, "exo")).unwrap();
        let d = &day.demand[0];
        assert!(d[32] > d[48] && d[76] > d[48] && d[76] > d[8]);
        assert_eq!(day.pv[0][0], 0.0);
        assert!(day.pv[0][48] > 0.0);
        assert!(day.pv[1].iter().all(|g| *g == 0.0));
    }
}
