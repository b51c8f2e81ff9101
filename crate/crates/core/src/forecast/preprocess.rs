use chrono::{DateTime, Duration, DurationRound, Utc};
use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::record::{Feature, WindRecord};

/// Model inputs derived from one complete record. Direction enters as its
/// sine and cosine so that 359° and 1° are neighbours.
pub const INPUT_FEATURES: [&str; 5] = [
    "wind_speed",
    "direction_sin",
    "direction_cos",
    "temperature",
    "active_power",
];
pub const POWER_COLUMN: usize = 4;

fn circular_mean_deg(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut c, mut n) = (0.0, 0.0, 0usize);
    for v in values {
        let r = v.to_radians();
        s += r.sin();
        c += r.cos();
        n += 1;
    }
    if n == 0 {
        return None;
    }
    if s.abs() < 1e-12 && c.abs() < 1e-12 {
        return Some(0.0);
    }
    Some(s.atan2(c).to_degrees().rem_euclid(360.0) % 360.0)
}

fn mean_of(feature: Feature, values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else if feature == Feature::WindDirection {
        circular_mean_deg(values.iter().copied())
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Fills each missing value with the mean of the `k` temporally nearest
/// records that have that feature (circular mean for direction). Ties in
/// distance prefer the earlier record.
pub fn impute_missing(series: &[WindRecord], k: usize) -> Result<Vec<WindRecord>> {
    if k == 0 {
        return Err(Error::Config("imputation needs k >= 1".into()));
    }
    let mut out = series.to_vec();
    for f in Feature::ALL {
        let known: Vec<usize> = (0..series.len())
            .filter(|&i| series[i].get(f).is_some())
            .collect();
        if known.len() == series.len() {
            continue;
        }
        if known.len() < k {
            return Err(Error::Imputation {
                feature: f.name().into(),
                reason: format!("{} complete values, need at least {k}", known.len()),
            });
        }
        let secs: Vec<i64> = series.iter().map(|r| r.timestamp.timestamp()).collect();
        for i in 0..series.len() {
            if series[i].get(f).is_some() {
                continue;
            }
            // two-pointer walk outward from the insertion point
            let pos = known.partition_point(|&j| j < i);
            let (mut lo, mut hi) = (pos, pos);
            let mut picked = Vec::with_capacity(k);
            while picked.len() < k {
                let left = (lo > 0).then(|| known[lo - 1]);
                let right = (hi < known.len()).then(|| known[hi]);
                let take_left = match (left, right) {
                    (Some(l), Some(r)) => (secs[i] - secs[l]).abs() <= (secs[r] - secs[i]).abs(),
                    (Some(_), None) => true,
                    (None, Some(_)) => false,
                    (None, None) => break,
                };
                if take_left {
                    picked.push(series[known[lo - 1]].get(f).unwrap_or_default());
                    lo -= 1;
                } else {
                    picked.push(series[known[hi]].get(f).unwrap_or_default());
                    hi += 1;
                }
            }
            out[i].set(f, mean_of(f, &picked));
        }
    }
    Ok(out)
}

/// Averages records into a contiguous hourly grid (hour-start timestamps)
/// from the first to the last record's hour. Hours without any value for a
/// feature stay missing.
pub fn resample_hourly(series: &[WindRecord]) -> Result<Vec<WindRecord>> {
    resample(series, Duration::hours(1))
}

/// As [`resample_hourly`] with an arbitrary bucket width.
pub fn resample(series: &[WindRecord], width: Duration) -> Result<Vec<WindRecord>> {
    let Some(first) = series.first() else {
        return Ok(Vec::new());
    };
    let floor = |t: DateTime<Utc>| {
        t.duration_trunc(width)
            .map_err(|e| Error::Input(format!("cannot bucket timestamp {t}: {e}")))
    };
    let start = floor(first.timestamp)?;
    let end = floor(series[series.len() - 1].timestamp)?;
    let n = ((end - start).num_seconds() / width.num_seconds()) as usize + 1;
    let mut buckets: Vec<[Vec<f64>; 4]> = (0..n).map(|_| Default::default()).collect();
    for r in series {
        let idx = ((floor(r.timestamp)? - start).num_seconds() / width.num_seconds()) as usize;
        if idx >= n {
            return Err(Error::Ordering { line: 0 });
        }
        for (fi, f) in Feature::ALL.iter().enumerate() {
            if let Some(v) = r.get(*f) {
                buckets[idx][fi].push(v);
            }
        }
    }
    Ok(buckets
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let mut rec = WindRecord {
                timestamp: start + width * i as i32,
                wind_speed: None,
                wind_direction: None,
                temperature: None,
                active_power: None,
            };
            for (fi, f) in Feature::ALL.iter().enumerate() {
                rec.set(*f, mean_of(*f, &b[fi]));
            }
            rec
        })
        .collect())
}

/// `[T, 5]` model-input matrix in [`INPUT_FEATURES`] order.
pub fn feature_matrix(records: &[WindRecord]) -> Result<Array2<f64>> {
    let mut m = Array2::zeros((records.len(), INPUT_FEATURES.len()));
    for (i, r) in records.iter().enumerate() {
        let missing =
            |f: Feature| Error::Input(format!("record {i} lacks {} (impute first)", f.name()));
        let dir = r
            .wind_direction
            .ok_or_else(|| missing(Feature::WindDirection))?
            .to_radians();
        m[[i, 0]] = r.wind_speed.ok_or_else(|| missing(Feature::WindSpeed))?;
        m[[i, 1]] = dir.sin();
        m[[i, 2]] = dir.cos();
        m[[i, 3]] = r.temperature.ok_or_else(|| missing(Feature::Temperature))?;
        m[[i, 4]] = r
            .active_power
            .ok_or_else(|| missing(Feature::ActivePower))?;
    }
    Ok(m)
}

/// Per-feature standardization with population statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    /// Rejects any feature whose standard deviation is zero.
    pub fn fit(rows: ArrayView2<f64>, names: &[&str]) -> Result<Self> {
        let s = Self::fit_with_floor(rows, names, 0.0)?;
        if let Some(i) = s.std.iter().position(|&v| v <= 0.0) {
            return Err(Error::ConstantFeature(s.names[i].clone()));
        }
        Ok(s)
    }

    /// Like [`Scaler::fit`], but a feature whose standard deviation is below
    /// `floor` is divided by `floor` instead.
    pub fn fit_with_floor(rows: ArrayView2<f64>, names: &[&str], floor: f64) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::EmptyInput("scaler needs at least one row".into()));
        }
        if rows.ncols() != names.len() {
            return Err(Error::shape(
                "scaler feature names",
                rows.ncols(),
                names.len(),
            ));
        }
        let mean = rows.mean_axis(Axis(0)).expect("non-empty");
        let var = rows.var_axis(Axis(0), 0.0);
        Ok(Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            mean: mean.to_vec(),
            std: var.iter().map(|v| v.sqrt().max(floor)).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.width() {
            return Err(Error::shape("scaler input", self.width(), rows.ncols()));
        }
        let mut out = rows.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| (v - self.mean[j]) / self.std[j]);
        }
        Ok(out)
    }

    pub fn inverse(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.width() {
            return Err(Error::shape("scaler input", self.width(), rows.ncols()));
        }
        let mut out = rows.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| v * self.std[j] + self.mean[j]);
        }
        Ok(out)
    }

    pub fn scale_value(&self, column: usize, v: f64) -> f64 {
        (v - self.mean[column]) / self.std[column]
    }

    pub fn unscale_value(&self, column: usize, v: f64) -> f64 {
        v * self.std[column] + self.mean[column]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    /// `[samples, window_len, features]`
    pub inputs: Array3<f64>,
    /// `[samples, horizon]`
    pub targets: Array2<f64>,
    pub window_len: usize,
    pub horizon: usize,
    /// Row of the series at which each sample's input window starts.
    pub starts: Vec<usize>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.targets.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> WindowedDataset {
        WindowedDataset {
            inputs: self.inputs.select(Axis(0), idx),
            targets: self.targets.select(Axis(0), idx),
            window_len: self.window_len,
            horizon: self.horizon,
            starts: idx.iter().map(|&i| self.starts[i]).collect(),
        }
    }
}

/// Number of windows a series of `len` rows yields.
pub fn window_count(len: usize, window_len: usize, horizon: usize) -> usize {
    (len + 1).saturating_sub(window_len + horizon)
}

/// Slides a `window_len` input window and the following `horizon` targets
/// over the series, then splits the samples in time order: the first
/// `floor(split_fraction · n)` train, the rest test.
pub fn make_windows(
    features: &Array2<f64>,
    target: &[f64],
    window_len: usize,
    horizon: usize,
    split_fraction: f64,
) -> Result<(WindowedDataset, WindowedDataset)> {
    if window_len == 0 || horizon == 0 {
        return Err(Error::Config("window and horizon must be positive".into()));
    }
    if !(0.0..=1.0).contains(&split_fraction) {
        return Err(Error::Config(format!(
            "split fraction {split_fraction} outside [0, 1]"
        )));
    }
    let len = features.nrows();
    if target.len() != len {
        return Err(Error::shape("window targets", len, target.len()));
    }
    if len < window_len + horizon {
        return Err(Error::InsufficientData(format!(
            "series of {len} rows is shorter than window {window_len} + horizon {horizon}"
        )));
    }
    let n = window_count(len, window_len, horizon);
    let f = features.ncols();
    let mut inputs = Array3::zeros((n, window_len, f));
    let mut targets = Array2::zeros((n, horizon));
    for s0 in 0..n {
        inputs
            .slice_mut(s![s0, .., ..])
            .assign(&features.slice(s![s0..s0 + window_len, ..]));
        for h in 0..horizon {
            targets[[s0, h]] = target[s0 + window_len + h];
        }
    }
    let all = WindowedDataset {
        inputs,
        targets,
        window_len,
        horizon,
        starts: (0..n).collect(),
    };
    let n_train = (split_fraction * n as f64).floor() as usize;
    let train_idx: Vec<usize> = (0..n_train).collect();
    let test_idx: Vec<usize> = (n_train..n).collect();
    Ok((all.select(&train_idx), all.select(&test_idx)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub knn_k: usize,
    pub window_len: usize,
    pub horizon: usize,
    pub split_fraction: f64,
    /// Minimum standard deviation used when standardizing a feature.
    pub std_floor: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            knn_k: 5,
            window_len: 24,
            horizon: 24,
            split_fraction: 0.8,
            std_floor: 1e-3,
        }
    }
}

/// Standardized train/test windows plus everything needed to undo the
/// scaling.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub hourly: Vec<WindRecord>,
    pub scaler: Scaler,
    pub train: WindowedDataset,
    pub test: WindowedDataset,
    /// Unscaled test targets, MW.
    pub test_targets_mw: Array2<f64>,
}

/// Impute, resample to hours, fill empty hours, window, and standardize
/// with statistics of the rows the training windows read.
pub fn prepare(records: &[WindRecord], cfg: &PipelineConfig) -> Result<PreparedData> {
    let imputed = impute_missing(records, cfg.knn_k)?;
    let hourly = impute_missing(&resample_hourly(&imputed)?, cfg.knn_k)?;
    let raw = feature_matrix(&hourly)?;
    let power: Vec<f64> = raw.column(POWER_COLUMN).to_vec();
    let (train_raw, _) = make_windows(
        &raw,
        &power,
        cfg.window_len,
        cfg.horizon,
        cfg.split_fraction,
    )?;
    if train_raw.is_empty() {
        return Err(Error::InsufficientData(
            "split leaves no training windows".into(),
        ));
    }
    let fit_rows = train_raw.starts[train_raw.len() - 1] + cfg.window_len;
    let scaler = Scaler::fit_with_floor(
        raw.slice(s![..fit_rows, ..]),
        &INPUT_FEATURES,
        cfg.std_floor,
    )?;
    let scaled = scaler.transform(&raw)?;
    let scaled_power: Vec<f64> = power
        .iter()
        .map(|&p| scaler.scale_value(POWER_COLUMN, p))
        .collect();
    let (train, test) = make_windows(
        &scaled,
        &scaled_power,
        cfg.window_len,
        cfg.horizon,
        cfg.split_fraction,
    )?;
    let test_targets_mw = test.targets.mapv(|v| scaler.unscale_value(POWER_COLUMN, v));
    Ok(PreparedData {
        hourly,
        scaler,
        train,
        test,
        test_targets_mw,
    })
}
