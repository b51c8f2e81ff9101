//! Fully connected feed-forward network with optional batch normalization.
//!
//! Layer `l` computes `act_l(bn_l(x W_l + b_l))`, where the batch-norm step
//! is present only for layers listed in [`MlpSpec::batch_norm_layers`].
//! Weights are stored `[fan_in, fan_out]` so a batch of row vectors is
//! propagated with a single matrix product.

use std::collections::BTreeSet;

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::activation::Activation;
use crate::nn::batchnorm::{batchnorm_backward, batchnorm_forward, BatchNormCache, BatchNormStats};
use crate::nn::params::{GradStore, ParamStore};
use crate::nn::{init_uniform, Mode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_size: usize,
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    #[serde(default)]
    pub batch_norm_layers: BTreeSet<usize>,
}

impl MlpSpec {
    pub fn new(input_size: usize, layer_sizes: Vec<usize>, activations: Vec<Activation>) -> Self {
        Self {
            input_size,
            layer_sizes,
            activations,
            batch_norm_layers: BTreeSet::new(),
        }
    }

    pub fn with_batch_norm(mut self, layers: impl IntoIterator<Item = usize>) -> Self {
        self.batch_norm_layers = layers.into_iter().collect();
        self
    }

    pub fn output_size(&self) -> usize {
        self.layer_sizes.last().copied().unwrap_or(self.input_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.is_empty() {
            return Err(Error::Config("MLP needs at least one layer".into()));
        }
        if self.input_size == 0 || self.layer_sizes.contains(&0) {
            return Err(Error::Config("MLP layer sizes must be positive".into()));
        }
        if self.activations.len() != self.layer_sizes.len() {
            return Err(Error::Config(format!(
                "{} activations for {} layers",
                self.activations.len(),
                self.layer_sizes.len()
            )));
        }
        if let Some(&bad) = self
            .batch_norm_layers
            .iter()
            .find(|&&l| l >= self.layer_sizes.len())
        {
            return Err(Error::Config(format!(
                "batch-norm layer index {bad} out of range"
            )));
        }
        Ok(())
    }

    fn fan_in(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_size
        } else {
            self.layer_sizes[layer - 1]
        }
    }
}

fn weight_name(l: usize) -> String {
    format!("layer{l}.weight")
}
fn bias_name(l: usize) -> String {
    format!("layer{l}.bias")
}
fn gamma_name(l: usize) -> String {
    format!("layer{l}.bn_gamma")
}
fn beta_name(l: usize) -> String {
    format!("layer{l}.bn_beta")
}

#[derive(Clone, Debug)]
struct LayerCache {
    input: Array2<f64>,
    bn: Option<BatchNormCache>,
    pre: Array2<f64>,
    out: Array2<f64>,
}

#[derive(Clone, Debug)]
pub struct Mlp {
    spec: MlpSpec,
    pub params: ParamStore,
    bn_stats: Vec<Option<BatchNormStats>>,
    cache: Option<Vec<LayerCache>>,
}

impl Mlp {
    /// Uniform `±1/sqrt(fan_in)` initialization for weights and biases.
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamStore::new();
        for (l, &out) in spec.layer_sizes.iter().enumerate() {
            let fan_in = spec.fan_in(l);
            let bound = 1.0 / (fan_in as f64).sqrt();
            params.insert(weight_name(l), init_uniform(rng, (fan_in, out), bound))?;
            params.insert(bias_name(l), init_uniform(rng, (1, out), bound))?;
            if spec.batch_norm_layers.contains(&l) {
                params.insert(gamma_name(l), Array2::ones((1, out)))?;
                params.insert(beta_name(l), Array2::zeros((1, out)))?;
            }
        }
        Self::from_params(spec, params)
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamStore::new();
        for (l, &out) in spec.layer_sizes.iter().enumerate() {
            params.insert(weight_name(l), Array2::zeros((spec.fan_in(l), out)))?;
            params.insert(bias_name(l), Array2::zeros((1, out)))?;
            if spec.batch_norm_layers.contains(&l) {
                params.insert(gamma_name(l), Array2::ones((1, out)))?;
                params.insert(beta_name(l), Array2::zeros((1, out)))?;
            }
        }
        Self::from_params(spec, params)
    }

    pub fn from_params(spec: MlpSpec, params: ParamStore) -> Result<Self> {
        spec.validate()?;
        for (l, &out) in spec.layer_sizes.iter().enumerate() {
            let expect = |name: String, dim: (usize, usize)| -> Result<()> {
                let p = params.expect(&name)?;
                if p.dim() != dim {
                    return Err(Error::shape(
                        name,
                        format!("{dim:?}"),
                        format!("{:?}", p.dim()),
                    ));
                }
                Ok(())
            };
            expect(weight_name(l), (spec.fan_in(l), out))?;
            expect(bias_name(l), (1, out))?;
            if spec.batch_norm_layers.contains(&l) {
                expect(gamma_name(l), (1, out))?;
                expect(beta_name(l), (1, out))?;
            }
        }
        let bn_stats = spec
            .layer_sizes
            .iter()
            .enumerate()
            .map(|(l, &out)| {
                spec.batch_norm_layers
                    .contains(&l)
                    .then(|| BatchNormStats::new(out))
            })
            .collect();
        Ok(Self {
            spec,
            params,
            bn_stats,
            cache: None,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn bn_stats(&self) -> &[Option<BatchNormStats>] {
        &self.bn_stats
    }

    pub fn bn_stats_mut(&mut self) -> &mut [Option<BatchNormStats>] {
        &mut self.bn_stats
    }

    /// Forward pass that keeps activations for [`backward`](Self::backward).
    /// In train mode batch-norm running statistics are updated.
    pub fn forward(&mut self, input: &Array2<f64>, mode: Mode) -> Result<Array2<f64>> {
        let mut stats = self.bn_stats.clone();
        let (out, cache) = self.run(input, mode, &mut stats)?;
        self.bn_stats = stats;
        self.cache = Some(cache);
        Ok(out)
    }

    /// Stateless eval-mode forward pass (no cache, no statistics update).
    pub fn predict(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        let mut stats = self.bn_stats.clone();
        self.run(input, Mode::Eval, &mut stats).map(|(out, _)| out)
    }

    fn run(
        &self,
        input: &Array2<f64>,
        mode: Mode,
        stats: &mut [Option<BatchNormStats>],
    ) -> Result<(Array2<f64>, Vec<LayerCache>)> {
        if input.ncols() != self.spec.input_size {
            return Err(Error::shape(
                "mlp input width",
                self.spec.input_size,
                input.ncols(),
            ));
        }
        let mut caches = Vec::with_capacity(self.spec.layer_sizes.len());
        let mut x = input.clone();
        for (l, &act) in self.spec.activations.iter().enumerate() {
            let w = self.params.expect(&weight_name(l))?;
            let b = self.params.expect(&bias_name(l))?;
            let mut pre = x.dot(w) + b;
            let mut bn_cache = None;
            if let Some(st) = stats[l].as_mut() {
                let gamma = self.params.expect(&gamma_name(l))?.row(0);
                let beta = self.params.expect(&beta_name(l))?.row(0);
                let (normed, c) = batchnorm_forward(st, gamma, beta, &pre, mode)?;
                pre = normed;
                bn_cache = Some(c);
            }
            let out = act.forward(&pre);
            caches.push(LayerCache {
                input: x,
                bn: bn_cache,
                pre,
                out: out.clone(),
            });
            x = out;
        }
        if x.iter().any(|v| !v.is_finite()) {
            self.params.check_finite()?;
            return Err(Error::NonFinite {
                name: "mlp output".into(),
            });
        }
        Ok((x, caches))
    }

    /// Back-propagates `output_grad` (dL/d output) through the cached
    /// forward pass. Returns parameter gradients and dL/d input.
    pub fn backward(&self, output_grad: &Array2<f64>) -> Result<(GradStore, Array2<f64>)> {
        let caches = self.cache.as_ref().ok_or_else(|| {
            Error::State("mlp backward called without a cached forward pass".into())
        })?;
        let last = caches.last().expect("at least one layer");
        if output_grad.dim() != last.out.dim() {
            return Err(Error::shape(
                "mlp output gradient",
                format!("{:?}", last.out.dim()),
                format!("{:?}", output_grad.dim()),
            ));
        }
        let mut grads = self.params.zeros_like();
        let mut g = output_grad.clone();
        for l in (0..caches.len()).rev() {
            let c = &caches[l];
            let mut d_pre = self.spec.activations[l].backward(&c.pre, &c.out, &g);
            if let Some(bn) = &c.bn {
                let gamma = self.params.expect(&gamma_name(l))?.row(0);
                let (dx, dgamma, dbeta) = batchnorm_backward(bn, gamma, &d_pre);
                grads.expect_mut(&gamma_name(l))?.row_mut(0).assign(&dgamma);
                grads.expect_mut(&beta_name(l))?.row_mut(0).assign(&dbeta);
                d_pre = dx;
            }
            *grads.expect_mut(&weight_name(l))? = c.input.t().dot(&d_pre);
            grads
                .expect_mut(&bias_name(l))?
                .row_mut(0)
                .assign(&d_pre.sum_axis(Axis(0)));
            g = d_pre.dot(&self.params.expect(&weight_name(l))?.t());
        }
        Ok((grads, g))
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let spec = MlpSpec::new(3, vec![4, 2], vec![Activation::Linear, Activation::Linear]);
        let mut net = Mlp::zeros(spec).unwrap();
        let out = net.forward(&array![[1.0, -2.0, 5.0]], Mode::Eval).unwrap();
        assert_eq!(out, array![[0.0, 0.0]]);
    }

    #[test]
    fn single_affine_unit() {
        let spec = MlpSpec::new(1, vec![1], vec![Activation::Linear]);
        let mut params = ParamStore::new();
        params.insert("layer0.weight", array![[2.0]]).unwrap();
        params.insert("layer0.bias", array![[1.0]]).unwrap();
        let mut net = Mlp::from_params(spec, params).unwrap();
        assert_eq!(
            net.forward(&array![[3.0]], Mode::Eval).unwrap(),
            array![[7.0]]
        );
    }

    #[test]
    fn affine_gradient_by_hand() {
        let spec = MlpSpec::new(1, vec![1], vec![Activation::Linear]);
        let mut params = ParamStore::new();
        params.insert("layer0.weight", array![[0.5]]).unwrap();
        params.insert("layer0.bias", array![[0.0]]).unwrap();
        let mut net = Mlp::from_params(spec, params).unwrap();
        net.forward(&array![[2.0]], Mode::Train).unwrap();
        let (g, dx) = net.backward(&array![[1.0]]).unwrap();
        assert_eq!(g.get("layer0.weight").unwrap(), &array![[2.0]]);
        assert_eq!(g.get("layer0.bias").unwrap(), &array![[1.0]]);
        assert_eq!(dx, array![[0.5]]);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = MlpSpec::new(4, vec![5, 3], vec![Activation::Tanh, Activation::Sigmoid])
            .with_batch_norm([0]);
        let mut net = Mlp::new(spec, &mut rng).unwrap();
        let x = Array2::from_shape_fn((4, 4), |(i, j)| (i * 4 + j) as f64 * 0.1 - 0.7);
        net.forward(&x, Mode::Train).unwrap();
        let (g, dx) = net.backward(&Array2::zeros((4, 3))).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_without_forward_is_a_state_error() {
        let spec = MlpSpec::new(2, vec![1], vec![Activation::Linear]);
        let net = Mlp::zeros(spec).unwrap();
        assert!(matches!(net.backward(&array![[1.0]]), Err(Error::State(_))));
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let spec = MlpSpec::new(2, vec![1], vec![Activation::Linear]);
        let mut net = Mlp::zeros(spec).unwrap();
        assert!(matches!(
            net.forward(&array![[1.0, 2.0, 3.0]], Mode::Eval),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn nan_weight_is_reported_by_name() {
        let spec = MlpSpec::new(1, vec![1], vec![Activation::Linear]);
        let mut net = Mlp::zeros(spec).unwrap();
        net.params.get_mut("layer0.weight").unwrap()[[0, 0]] = f64::NAN;
        match net.forward(&array![[1.0]], Mode::Eval) {
            Err(Error::NonFinite { name }) => assert_eq!(name, "layer0.weight"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec = MlpSpec::new(
            3,
            vec![6, 1],
            vec![Activation::RreluDeterministic, Activation::Linear],
        );
        let net = Mlp::new(spec, &mut rng).unwrap();
        let x = array![[0.1, -0.5, 2.0]];
        assert_eq!(net.predict(&x).unwrap(), net.predict(&x).unwrap());
    }
}
