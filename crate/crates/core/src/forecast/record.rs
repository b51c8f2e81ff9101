use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// One observation of the wind farm. Any measurement may be missing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindRecord {
    pub timestamp: DateTime<Utc>,
    /// m/s
    pub wind_speed: Option<f64>,
    /// degrees in [0, 360)
    pub wind_direction: Option<f64>,
    /// °C
    pub temperature: Option<f64>,
    /// MW
    pub active_power: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Feature {
    WindSpeed,
    WindDirection,
    Temperature,
    ActivePower,
}

impl Feature {
    pub const ALL: [Feature; 4] = [
        Feature::WindSpeed,
        Feature::WindDirection,
        Feature::Temperature,
        Feature::ActivePower,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::WindSpeed => "wind_speed",
            Feature::WindDirection => "wind_direction",
            Feature::Temperature => "temperature",
            Feature::ActivePower => "active_power",
        }
    }
}

impl WindRecord {
    pub fn complete(
        timestamp: DateTime<Utc>,
        speed: f64,
        direction: f64,
        temperature: f64,
        power: f64,
    ) -> Self {
        Self {
            timestamp,
            wind_speed: Some(speed),
            wind_direction: Some(direction),
            temperature: Some(temperature),
            active_power: Some(power),
        }
    }

    pub fn get(&self, f: Feature) -> Option<f64> {
        match f {
            Feature::WindSpeed => self.wind_speed,
            Feature::WindDirection => self.wind_direction,
            Feature::Temperature => self.temperature,
            Feature::ActivePower => self.active_power,
        }
    }

    pub fn set(&mut self, f: Feature, v: Option<f64>) {
        match f {
            Feature::WindSpeed => self.wind_speed = v,
            Feature::WindDirection => self.wind_direction = v,
            Feature::Temperature => self.temperature = v,
            Feature::ActivePower => self.active_power = v,
        }
    }

    pub fn is_complete(&self) -> bool {
        Feature::ALL.iter().all(|&f| self.get(f).is_some())
    }
}
