//! Dense and recurrent network kernels with hand-written gradients.

pub mod activation;
pub mod batchnorm;
pub mod checkpoint;
pub mod gradcheck;
pub mod mlp;
pub mod optim;
pub mod params;
pub mod recurrent;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use activation::Activation;
pub use batchnorm::{BatchNorm, BatchNormStats};
pub use checkpoint::Checkpoint;
pub use mlp::{Mlp, MlpSpec};
pub use optim::{optimizer_step, Direction, OptimizerConfig, OptimizerKind, OptimizerState};
pub use params::{GradStore, ParamStore};
pub use recurrent::{
    gru_cell_step, lstm_cell_step, lstm_sequence_gradients, CellKind, GruCellParams,
    LstmCellParams, SequenceModel, SequenceSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

pub(crate) fn init_uniform<R: Rng + ?Sized>(
    rng: &mut R,
    dim: (usize, usize),
    bound: f64,
) -> Array2<f64> {
    Array2::from_shape_simple_fn(dim, || rng.random_range(-bound..=bound))
}
