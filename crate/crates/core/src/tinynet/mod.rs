//! A small fully connected network engine.
//!
//! Networks are chains of affine layers with a shared hidden activation and an
//! identity output. Parameters are stored per layer as `out x in` weights plus
//! a bias vector; an optional `log_std` vector rides along for Gaussian
//! policies so that optimizers and checkpoints treat it like any other
//! parameter block.

mod gradcheck;
mod optim;

pub use gradcheck::{check_random_mlp, grad_check, relative_error, GradCheckReport, GRAD_FLOOR};
pub use optim::{Optimizer, OptimizerKind};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Initial log standard deviation of a policy head.
pub const INITIAL_LOG_STD: f64 = -std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Tanh => z.mapv(f64::tanh),
            Activation::Identity => z.clone(),
        }
    }

    /// Multiplies `delta` in place by the derivative, given the activation
    /// output `a`.
    fn backprop(self, delta: &mut Array2<f64>, a: &Array2<f64>) {
        if let Activation::Tanh = self {
            ndarray::Zip::from(delta)
                .and(a)
                .for_each(|d, &a| *d *= 1.0 - a * a);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out x in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }
}

/// Parameters of one network. Gradients and optimizer moments use the same
/// shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
    pub hidden_activation: Activation,
    pub log_std: Option<Array1<f64>>,
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::InvalidLayers(sizes.to_vec()));
    }
    Ok(())
}

impl MlpParams {
    /// Uniform fan-based initialization with zero biases.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        check_sizes(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                    rng.random_range(-limit..limit)
                });
                Dense {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self {
            layers,
            hidden_activation: Activation::Tanh,
            log_std: None,
        })
    }

    /// Like [`MlpParams::init`], plus a per-output `log_std` at ln(0.5).
    pub fn init_policy(sizes: &[usize], seed: u64) -> Result<Self> {
        let mut params = Self::init(sizes, seed)?;
        params.log_std = Some(Array1::from_elem(params.output_dim(), INITIAL_LOG_STD));
        Ok(params)
    }

    pub fn zeros(sizes: &[usize], with_log_std: bool) -> Result<Self> {
        check_sizes(sizes)?;
        let layers: Vec<Dense> = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        let out = sizes[sizes.len() - 1];
        Ok(Self {
            layers,
            hidden_activation: Activation::Tanh,
            log_std: with_log_std.then(|| Array1::zeros(out)),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = Self::zeros(&self.layer_sizes(), self.log_std.is_some())
            .expect("existing network has valid sizes");
        z.hidden_activation = self.hidden_activation;
        z
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.hidden_activation = activation;
        self
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(Dense::fan_out));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    /// Parameter blocks in declaration order: each layer's weight (row
    /// major) then bias, then `log_std` if present.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 1);
        for layer in &self.layers {
            out.push(layer.weight.as_slice().expect("standard layout"));
            out.push(layer.bias.as_slice().expect("standard layout"));
        }
        if let Some(ls) = &self.log_std {
            out.push(ls.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 1);
        for layer in &mut self.layers {
            out.push(layer.weight.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        if let Some(ls) = &mut self.log_std {
            out.push(ls.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks().concat()
    }

    /// Fills parameters from a flat array in declaration order.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.num_params();
        if flat.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: flat.len(),
            });
        }
        let mut offset = 0;
        for block in self.blocks_mut() {
            block.copy_from_slice(&flat[offset..offset + block.len()]);
            offset += block.len();
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Elementwise `self += other`. Shapes must match.
    pub fn accumulate(&mut self, other: &MlpParams) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
    }

    /// Euclidean norm over all parameters.
    pub fn norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for block in self.blocks_mut() {
            block.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.layer_sizes() == other.layer_sizes()
            && self.log_std.as_ref().map(Array1::len) == other.log_std.as_ref().map(Array1::len)
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let batch = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
        let (out, cache) = self.forward_batch(batch)?;
        Ok((out.into_raw_vec_and_offset().0, cache))
    }

    /// Forward pass without keeping intermediates.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward(input).map(|(out, _)| out)
    }

    /// Forward pass over rows of `inputs` (`n x input_dim`).
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: inputs.ncols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        activations.push(inputs.to_owned());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = activations[k].dot(&layer.weight.t());
            z += &layer.bias;
            let a = if k == last {
                z.clone()
            } else {
                self.hidden_activation.apply(&z)
            };
            pre_activations.push(z);
            activations.push(a);
        }
        let output = activations.pop().expect("at least one layer");
        Ok((
            output,
            ForwardCache {
                activations,
                pre_activations,
            },
        ))
    }

    /// Reverse-mode gradient of a scalar loss given `dloss/doutput` for every
    /// row of the cached batch. The returned `log_std` block, if any, is zero.
    pub fn backward(&self, cache: &ForwardCache, output_grad: ArrayView2<f64>) -> Result<MlpParams> {
        if !cache.matches(self) {
            return Err(Error::StaleCache);
        }
        let n = cache.batch_len();
        if output_grad.dim() != (n, self.output_dim()) {
            return Err(Error::DimensionMismatch {
                expected: n * self.output_dim(),
                actual: output_grad.len(),
            });
        }
        let mut grads = self.zeros_like();
        let mut delta = output_grad.to_owned();
        for k in (0..self.layers.len()).rev() {
            let input = &cache.activations[k];
            grads.layers[k].weight = delta.t().dot(input);
            grads.layers[k].bias = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut next = delta.dot(&self.layers[k].weight);
                self.hidden_activation.backprop(&mut next, input);
                delta = next;
            }
        }
        Ok(grads)
    }
}

/// Intermediates of a forward pass, consumed by [`MlpParams::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer; entry 0 is the network input.
    pub activations: Vec<Array2<f64>>,
    /// Affine output of each layer before its activation.
    pub pre_activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn batch_len(&self) -> usize {
        self.activations[0].nrows()
    }

    fn matches(&self, params: &MlpParams) -> bool {
        let n = self.batch_len();
        self.activations.len() == params.layers.len()
            && self.pre_activations.len() == params.layers.len()
            && params.layers.iter().enumerate().all(|(k, layer)| {
                self.activations[k].dim() == (n, layer.fan_in())
                    && self.pre_activations[k].dim() == (n, layer.fan_out())
            })
    }
}
