use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

/// Negative-side slope of the leaky ReLU.
pub const LEAKY_RELU_SLOPE: f64 = 0.01;

/// Fixed negative-side slope used for RReLU. Randomized ReLU normally draws
/// the slope from `[1/8, 1/3]` during training; here it is pinned to the
/// lower bound so forward passes are reproducible in every mode.
pub const RRELU_SLOPE: f64 = 1.0 / 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    #[serde(rename = "rrelu-deterministic", alias = "rrelu")]
    RreluDeterministic,
    Tanh,
    Sigmoid,
    Linear,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => leaky(x, LEAKY_RELU_SLOPE),
            Activation::RreluDeterministic => leaky(x, RRELU_SLOPE),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_RELU_SLOPE
                }
            }
            Activation::RreluDeterministic => {
                if x > 0.0 {
                    1.0
                } else {
                    RRELU_SLOPE
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Linear => 1.0,
        }
    }

    pub fn forward(self, pre: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Linear => pre.clone(),
            _ => pre.mapv(|x| self.apply(x)),
        }
    }

    /// Chains `grad_out` (dL/dy) through the activation into dL/dx.
    pub fn backward(
        self,
        pre: &Array2<f64>,
        out: &Array2<f64>,
        grad_out: &Array2<f64>,
    ) -> Array2<f64> {
        if self == Activation::Linear {
            return grad_out.clone();
        }
        let mut g = grad_out.clone();
        Zip::from(&mut g)
            .and(pre)
            .and(out)
            .for_each(|g, &x, &y| *g *= self.derivative(x, y));
        g
    }
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_central_differences_away_from_kinks() {
        let h = 1e-6;
        for act in [
            Activation::Relu,
            Activation::LeakyRelu,
            Activation::RreluDeterministic,
            Activation::Tanh,
            Activation::Sigmoid,
            Activation::Linear,
        ] {
            for &x in &[-2.3, -0.4, 0.7, 1.9] {
                let numeric = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                let analytic = act.derivative(x, act.apply(x));
                assert!((numeric - analytic).abs() < 1e-7, "{act:?} at {x}");
            }
        }
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn serde_tags_are_kebab_case() {
        let s = serde_json::to_string(&Activation::RreluDeterministic).unwrap();
        assert_eq!(s, "\"rrelu-deterministic\"");
        let a: Activation = serde_json::from_str("\"leaky-relu\"").unwrap();
        assert_eq!(a, Activation::LeakyRelu);
    }
}
