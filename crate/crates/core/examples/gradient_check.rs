//! Central finite differences against backpropagation for a small MLP and
//! a two-layer LSTM.

use gridmarl::nn::gradcheck::{check_gradients, DEFAULT_STEP};
use gridmarl::nn::{
    lstm_sequence_gradients, Activation, CellKind, Mlp, MlpSpec, Mode, SequenceModel, SequenceSpec,
};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn main() -> gridmarl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = MlpSpec::new(
        4,
        vec![8, 8, 2],
        vec![Activation::Relu, Activation::Tanh, Activation::Linear],
    )
    .with_batch_norm([0]);
    let mut net = Mlp::new(spec.clone(), &mut rng)?;
    let x = random(&mut rng, (16, 4));
    let w = random(&mut rng, (16, 2));

    net.forward(&x, Mode::Train)?;
    let (grads, _) = net.backward(&w)?;
    let report = check_gradients(&net.params, &grads, DEFAULT_STEP, |p| {
        let mut probe = Mlp::from_params(spec.clone(), p.clone())?;
        Ok((probe.forward(&x, Mode::Train)? * &w).sum())
    })?;
    println!(
        "mlp with batch norm: {} parameters, max relative error {:.2e}",
        report.checked, report.max_relative_error
    );

    for kind in [CellKind::Lstm, CellKind::Gru, CellKind::Rnn] {
        let spec = SequenceSpec {
            kind,
            input_size: 3,
            hidden_size: 6,
            layers: 2,
            output_size: 4,
        };
        let mut model = SequenceModel::new(spec.clone(), &mut rng)?;
        let x = Array3::from_shape_simple_fn((4, 12, 3), || rng.random_range(-1.0..1.0));
        let w = random(&mut rng, (4, 4));
        let grads = lstm_sequence_gradients(&mut model, &x, &w)?;
        let report = check_gradients(&model.params, &grads, DEFAULT_STEP, |p| {
            Ok((SequenceModel::from_params(spec.clone(), p.clone())?.predict(&x)? * &w).sum())
        })?;
        println!(
            "stacked {} over 12 steps: {} parameters, max relative error {:.2e}",
            kind.name(),
            report.checked,
            report.max_relative_error
        );
    }
    Ok(())
}
