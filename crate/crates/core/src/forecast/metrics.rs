use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Terms whose actual value is smaller than this are left out of MAPE.
pub const MAPE_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    /// Percent; `None` when every actual value is (near) zero.
    pub mape: Option<f64>,
    /// Number of terms dropped from MAPE.
    pub mape_excluded: usize,
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    Ok(eval_metrics(pred, actual)?.rmse)
}

pub fn eval_metrics(pred: &[f64], actual: &[f64]) -> Result<Metrics> {
    if pred.len() != actual.len() {
        return Err(Error::Input(format!(
            "prediction has {} values, actual has {}",
            pred.len(),
            actual.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("metrics need at least one value".into()));
    }
    let n = pred.len() as f64;
    let mut se = 0.0;
    let mut ae = 0.0;
    let mut pe = 0.0;
    let mut kept = 0usize;
    for (&p, &a) in pred.iter().zip(actual) {
        let d = p - a;
        se += d * d;
        ae += d.abs();
        if a.abs() >= MAPE_EPS {
            pe += (d / a).abs();
            kept += 1;
        }
    }
    Ok(Metrics {
        rmse: (se / n).sqrt(),
        mae: ae / n,
        mape: (kept > 0).then(|| 100.0 * pe / kept as f64),
        mape_excluded: pred.len() - kept,
    })
}
