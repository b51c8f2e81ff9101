mod support;

use gridmarl::nn::CellKind;
use support::*;

const SEEDS: u64 = 20;

fn worst(f: impl Fn(u64) -> f64) -> (f64, u64) {
    (0..SEEDS)
        .map(|s| (f(s), s))
        .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a })
}

#[test]
fn mlp_matches_finite_differences() {
    let (e, s) = worst(mlp_grad_error);
    assert!(e < 1e-4, "seed {s}: {e:e}");
}

#[test]
fn batchnorm_matches_finite_differences() {
    let (e, s) = worst(batchnorm_grad_error);
    assert!(e < 1e-4, "seed {s}: {e:e}");
}

#[test]
fn lstm_cell_matches_finite_differences() {
    let (e, s) = worst(lstm_cell_grad_error);
    assert!(e < 1e-4, "seed {s}: {e:e}");
}

#[test]
fn gru_cell_matches_finite_differences() {
    let (e, s) = worst(gru_cell_grad_error);
    assert!(e < 1e-4, "seed {s}: {e:e}");
}

#[test]
fn stacked_sequences_match_finite_differences() {
    for kind in [CellKind::Lstm, CellKind::Gru, CellKind::Rnn] {
        let (e, s) = worst(|seed| sequence_grad_error(kind, seed));
        assert!(e < 1e-4, "{kind:?} seed {s}: {e:e}");
    }
}

#[test]
fn actor_through_critic_matches_finite_differences() {
    let (e, s) = worst(composed_grad_error);
    assert!(e < 1e-3, "seed {s}: {e:e}");
}
