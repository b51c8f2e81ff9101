//! Per-feature batch normalization over the batch axis.
//!
//! Train mode normalizes with the batch mean and population variance and
//! folds them into the running statistics with an exponential average. Eval
//! mode uses the running statistics only, so it is a fixed affine map.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Mode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNormStats {
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNormStats {
    pub fn new(features: usize) -> Self {
        Self {
            running_mean: Array1::zeros(features),
            running_var: Array1::ones(features),
            momentum: 0.1,
            epsilon: 1e-5,
        }
    }

    pub fn features(&self) -> usize {
        self.running_mean.len()
    }
}

/// Intermediate values kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache {
    mode: Mode,
    x_hat: Array2<f64>,
    inv_std: Array1<f64>,
}

pub fn batchnorm_forward(
    stats: &mut BatchNormStats,
    gamma: ArrayView1<f64>,
    beta: ArrayView1<f64>,
    input: &Array2<f64>,
    mode: Mode,
) -> Result<(Array2<f64>, BatchNormCache)> {
    let features = stats.features();
    if input.ncols() != features || gamma.len() != features || beta.len() != features {
        return Err(Error::shape("batchnorm input", features, input.ncols()));
    }
    let (mean, var) = match mode {
        Mode::Train => {
            let n = input.nrows();
            if n < 2 {
                return Err(Error::BatchSize(n));
            }
            let mean = input.mean_axis(Axis(0)).expect("non-empty batch");
            let centered = input - &mean;
            let var = centered
                .mapv(|x| x * x)
                .mean_axis(Axis(0))
                .expect("non-empty batch");
            let m = stats.momentum;
            stats.running_mean = &stats.running_mean * (1.0 - m) + &mean * m;
            stats.running_var = &stats.running_var * (1.0 - m) + &var * m;
            (mean, var)
        }
        Mode::Eval => (stats.running_mean.clone(), stats.running_var.clone()),
    };
    let inv_std = var.mapv(|v| 1.0 / (v + stats.epsilon).sqrt());
    let x_hat = (input - &mean) * &inv_std;
    let out = &x_hat * &gamma + beta;
    Ok((
        out,
        BatchNormCache {
            mode,
            x_hat,
            inv_std,
        },
    ))
}

/// Returns `(d_input, d_gamma, d_beta)`.
pub fn batchnorm_backward(
    cache: &BatchNormCache,
    gamma: ArrayView1<f64>,
    grad_out: &Array2<f64>,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let d_beta = grad_out.sum_axis(Axis(0));
    let d_gamma = (grad_out * &cache.x_hat).sum_axis(Axis(0));
    let d_xhat = grad_out * &gamma;
    let d_input = match cache.mode {
        Mode::Eval => &d_xhat * &cache.inv_std,
        Mode::Train => {
            // dx = inv_std * (dxh - mean(dxh) - x_hat * mean(dxh * x_hat))
            let n = grad_out.nrows() as f64;
            let mean_d = d_xhat.sum_axis(Axis(0)) / n;
            let mean_dx = (&d_xhat * &cache.x_hat).sum_axis(Axis(0)) / n;
            (&d_xhat - &mean_d - &(&cache.x_hat * &mean_dx)) * &cache.inv_std
        }
    };
    (d_input, d_gamma, d_beta)
}

/// Self-contained batch-norm layer with its own learnable scale and shift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub stats: BatchNormStats,
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: Array1::ones(features),
            beta: Array1::zeros(features),
            stats: BatchNormStats::new(features),
        }
    }

    pub fn apply(&mut self, input: &Array2<f64>, mode: Mode) -> Result<Array2<f64>> {
        batchnorm_forward(
            &mut self.stats,
            self.gamma.view(),
            self.beta.view(),
            input,
            mode,
        )
        .map(|(out, _)| out)
    }
}
