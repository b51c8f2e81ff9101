use std::path::Path;

use chrono::{DateTime, Utc};
use ndarray::{Array2, Array3, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forecast::metrics::{eval_metrics, Metrics};
use crate::forecast::preprocess::{
    feature_matrix, Scaler, WindowedDataset, INPUT_FEATURES, POWER_COLUMN,
};
use crate::forecast::record::WindRecord;
use crate::nn::checkpoint::{params_from_doc, params_to_doc, ParamsDoc};
use crate::nn::{
    CellKind, Direction, OptimizerConfig, OptimizerState, SequenceModel, SequenceSpec,
};

/// Epoch losses above this abort training.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecasterConfig {
    pub kind: CellKind,
    pub hidden_size: usize,
    pub layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub grad_clip: Option<f64>,
    /// Forecasts are clipped to `[0, p_max]` MW.
    pub p_max: f64,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        Self {
            kind: CellKind::Lstm,
            hidden_size: 100,
            layers: 2,
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            grad_clip: Some(5.0),
            p_max: 50.0,
        }
    }
}

impl ForecasterConfig {
    pub fn test_preset() -> Self {
        Self {
            hidden_size: 16,
            epochs: 40,
            ..Self::default()
        }
    }
}

pub struct ForecasterModel {
    pub config: ForecasterConfig,
    pub network: SequenceModel,
    pub scaler: Scaler,
    pub window_len: usize,
    pub horizon: usize,
    /// Mean squared error on standardized targets, one entry per epoch.
    pub loss_history: Vec<f64>,
}

impl ForecasterModel {
    /// Short content hash of the parameters.
    pub fn model_id(&self) -> String {
        let mut h = Sha256::new();
        for (name, a) in self.network.params.iter() {
            h.update(name.as_bytes());
            for v in a {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(&h.finalize()[..8])
    }

    /// Standardized windows in, MW out (clipped).
    pub fn predict_scaled_windows(&self, inputs: &Array3<f64>) -> Result<Array2<f64>> {
        let out = self.network.predict(inputs)?;
        Ok(out.mapv(|v| {
            self.scaler
                .unscale_value(POWER_COLUMN, v)
                .clamp(0.0, self.config.p_max)
        }))
    }

    pub fn evaluate(&self, test: &WindowedDataset, targets_mw: &Array2<f64>) -> Result<Metrics> {
        let pred = self.predict_scaled_windows(&test.inputs)?;
        eval_metrics(
            pred.as_slice().expect("standard layout"),
            targets_mw
                .as_standard_layout()
                .as_slice()
                .expect("standard layout"),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let doc = ForecasterDoc {
            format: FORECASTER_FORMAT.into(),
            config: self.config.clone(),
            spec: self.network.spec().clone(),
            scaler: self.scaler.clone(),
            window_len: self.window_len,
            horizon: self.horizon,
            loss_history: self.loss_history.clone(),
            params: params_to_doc(&self.network.params),
        };
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let doc: ForecasterDoc = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if doc.format != FORECASTER_FORMAT {
            return Err(Error::Input(format!(
                "{} is not a forecaster checkpoint",
                path.display()
            )));
        }
        Ok(Self {
            network: SequenceModel::from_params(doc.spec, params_from_doc(&doc.params)?)?,
            config: doc.config,
            scaler: doc.scaler,
            window_len: doc.window_len,
            horizon: doc.horizon,
            loss_history: doc.loss_history,
        })
    }
}

const FORECASTER_FORMAT: &str = "gridmarl-forecaster";

#[derive(Serialize, Deserialize)]
struct ForecasterDoc {
    format: String,
    config: ForecasterConfig,
    spec: SequenceSpec,
    scaler: Scaler,
    window_len: usize,
    horizon: usize,
    loss_history: Vec<f64>,
    params: ParamsDoc,
}

/// Mini-batch Adam on mean squared error of standardized targets. Batches
/// are reshuffled every epoch from `rng`.
pub fn train_forecaster<R: Rng + ?Sized>(
    train: &WindowedDataset,
    scaler: &Scaler,
    config: &ForecasterConfig,
    rng: &mut R,
) -> Result<ForecasterModel> {
    if train.is_empty() {
        return Err(Error::InsufficientData("no training windows".into()));
    }
    if scaler.width() != INPUT_FEATURES.len() || train.inputs.dim().2 != scaler.width() {
        return Err(Error::shape(
            "forecaster features",
            scaler.width(),
            train.inputs.dim().2,
        ));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let spec = SequenceSpec {
        kind: config.kind,
        input_size: scaler.width(),
        hidden_size: config.hidden_size,
        layers: config.layers,
        output_size: train.horizon,
    };
    let mut network = SequenceModel::new(spec, rng)?;
    let mut opt = OptimizerState::new(OptimizerConfig::adam(config.learning_rate));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut loss_history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = train.inputs.select(Axis(0), chunk);
            let y = train.targets.select(Axis(0), chunk);
            let pred = network.forward(&x)?;
            let diff = &pred - &y;
            let count = diff.len() as f64;
            total += diff.mapv(|d| d * d).sum();
            let grad_out = diff.mapv(|d| 2.0 * d / count);
            let mut grads = network.backward(&grad_out)?;
            if let Some(max) = config.grad_clip {
                grads.clip_global_norm(max);
            }
            opt.step(&mut network.params, &grads, Direction::Descent)?;
        }
        let loss = total / (train.len() * train.horizon) as f64;
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(Error::TrainingDiverged { epoch, loss });
        }
        loss_history.push(loss);
    }
    Ok(ForecasterModel {
        config: config.clone(),
        network,
        scaler: scaler.clone(),
        window_len: train.window_len,
        horizon: train.horizon,
        loss_history,
    })
}

/// Next-`horizon` hourly forecast in MW from the last `window_len` complete
/// hourly records.
pub fn predict_day_ahead(model: &ForecasterModel, history: &[WindRecord]) -> Result<Vec<f64>> {
    if history.len() != model.window_len {
        return Err(Error::Input(format!(
            "forecast needs exactly {} hourly records, got {}",
            model.window_len,
            history.len()
        )));
    }
    let x = model.scaler.transform(&feature_matrix(history)?)?;
    let x = x.insert_axis(Axis(0));
    Ok(model.predict_scaled_windows(&x)?.row(0).to_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastDocument {
    pub model_id: String,
    pub issued_at: DateTime<Utc>,
    pub values: Vec<f64>,
}
