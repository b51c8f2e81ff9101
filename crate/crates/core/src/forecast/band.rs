use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub point: Vec<f64>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

/// Persistence forecast: tomorrow repeats the last 24 hours, with a
/// symmetric relative margin around it.
pub fn uncertainty_band_forecast(last_24h: &[f64], margin: f64) -> Result<Band> {
    if last_24h.len() != 24 {
        return Err(Error::Input(format!(
            "band forecast needs 24 hourly values, got {}",
            last_24h.len()
        )));
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::Input(format!(
            "margin must be non-negative, got {margin}"
        )));
    }
    let point = last_24h.to_vec();
    Ok(Band {
        low: point.iter().map(|p| p * (1.0 - margin)).collect(),
        high: point.iter().map(|p| p * (1.0 + margin)).collect(),
        point,
    })
}

/// Midpoint of the band, which is the persistence forecast itself.
pub fn persistence_forecast(last_24h: &[f64]) -> Result<Vec<f64>> {
    Ok(uncertainty_band_forecast(last_24h, 0.0)?.point)
}
