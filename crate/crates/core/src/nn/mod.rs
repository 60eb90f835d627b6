//! Dense layers, activations, softmax cross-entropy and analytic backpropagation.
//!
//! Weights are stored `input_dim x output_dim` so a layer computes
//! `activation(input · W + b)` on a row-per-sample batch.

mod matrix;

pub mod gradcheck;

pub use gradcheck::{finite_diff_grad, relative_error};
pub use matrix::Matrix;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exponent arguments are clamped to this magnitude before `exp`.
pub const EXP_CLAMP: f64 = 500.0;

/// Default negative-side slope of leaky ReLU.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op}: non-finite value at ({row}, {col})")]
    NonFinite {
        op: &'static str,
        row: usize,
        col: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("label {label} at row {row} is out of range for {classes} classes")]
    Label {
        row: usize,
        label: usize,
        classes: usize,
    },
    #[error("invalid state: {0}")]
    State(String),
    #[error("loss closure is not deterministic: {first} then {second}")]
    OracleInvalid { first: f64, second: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    LeakyRelu { slope: f64 },
    Softmax,
    Identity,
}

impl Activation {
    pub fn leaky_relu() -> Self {
        Activation::LeakyRelu {
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix, NnError> {
        match *self {
            Activation::Sigmoid => Ok(sigmoid(x)),
            Activation::LeakyRelu { slope } => leaky_relu(x, slope),
            Activation::Softmax => Ok(softmax_rows(x)),
            Activation::Identity => Ok(x.clone()),
        }
    }

    /// Maps a gradient w.r.t. the activation output back to the pre-activation,
    /// using only the forward output `y`.
    fn backprop(&self, y: &Matrix, grad: &Matrix) -> Result<Matrix, NnError> {
        if y.shape() != grad.shape() {
            return Err(NnError::Dimension {
                op: "activation_backward",
                left: y.shape(),
                right: grad.shape(),
            });
        }
        let mut out = grad.clone();
        match *self {
            Activation::Identity => {}
            Activation::Sigmoid => {
                for (g, &s) in out.data_mut().iter_mut().zip(y.data()) {
                    *g *= s * (1.0 - s);
                }
            }
            Activation::LeakyRelu { slope } => {
                // y = 0 exactly iff x = 0; the derivative there is taken as 1.
                for (g, &v) in out.data_mut().iter_mut().zip(y.data()) {
                    if v < 0.0 {
                        *g *= slope;
                    }
                }
            }
            Activation::Softmax => {
                for r in 0..y.rows() {
                    let p = y.row(r);
                    let g = out.row_mut(r);
                    let dot: f64 = p.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
                    for (gi, &pi) in g.iter_mut().zip(p) {
                        *gi = pi * (*gi - dot);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            activation,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(NnError::Config(format!(
                "layer dimensions must be positive, got {}x{}",
                self.input_dim, self.output_dim
            )));
        }
        if let Activation::LeakyRelu { slope } = self.activation {
            check_slope(slope)?;
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.input_dim * self.output_dim + self.output_dim
    }
}

/// Fully connected layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub spec: LayerSpec,
    pub weights: Matrix,
    pub bias: Matrix,
}

impl Dense {
    /// Uniform init in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn init(spec: LayerSpec, rng: &mut impl Rng) -> Result<Self, NnError> {
        spec.validate()?;
        let limit = (6.0 / (spec.input_dim + spec.output_dim) as f64).sqrt();
        let data = (0..spec.input_dim * spec.output_dim)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Ok(Self {
            spec,
            weights: Matrix::from_vec(spec.input_dim, spec.output_dim, data)?,
            bias: Matrix::zeros(1, spec.output_dim),
        })
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix, NnError> {
        let z = affine_forward(input, &self.weights, &self.bias)?;
        self.spec.activation.apply(&z)
    }
}

/// `input · weights + bias`.
pub fn affine_forward(input: &Matrix, weights: &Matrix, bias: &Matrix) -> Result<Matrix, NnError> {
    if input.cols() != weights.rows() {
        return Err(NnError::Dimension {
            op: "affine_forward",
            left: input.shape(),
            right: weights.shape(),
        });
    }
    if bias.shape() != (1, weights.cols()) {
        return Err(NnError::Dimension {
            op: "affine_forward(bias)",
            left: weights.shape(),
            right: bias.shape(),
        });
    }
    let mut out = input.matmul(weights)?;
    let b = bias.row(0);
    for r in 0..out.rows() {
        for (o, bv) in out.row_mut(r).iter_mut().zip(b) {
            *o += bv;
        }
    }
    out.ensure_finite("affine_forward")?;
    Ok(out)
}

pub fn sigmoid(x: &Matrix) -> Matrix {
    x.map(|v| 1.0 / (1.0 + (-v.clamp(-EXP_CLAMP, EXP_CLAMP)).exp()))
}

fn check_slope(slope: f64) -> Result<(), NnError> {
    if slope > 0.0 && slope < 1.0 {
        Ok(())
    } else {
        Err(NnError::Config(format!(
            "leaky ReLU slope must lie in (0, 1), got {slope}"
        )))
    }
}

pub fn leaky_relu(x: &Matrix, slope: f64) -> Result<Matrix, NnError> {
    check_slope(slope)?;
    Ok(x.map(|v| v.max(slope * v)))
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).clamp(-EXP_CLAMP, EXP_CLAMP).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn check_labels(probs: &Matrix, labels: &[usize]) -> Result<(), NnError> {
    if probs.rows() != labels.len() {
        return Err(NnError::Dimension {
            op: "cross_entropy",
            left: probs.shape(),
            right: (labels.len(), 1),
        });
    }
    for (row, &label) in labels.iter().enumerate() {
        if label >= probs.cols() {
            return Err(NnError::Label {
                row,
                label,
                classes: probs.cols(),
            });
        }
    }
    Ok(())
}

/// Mean negative log-likelihood of the true class.
pub fn cross_entropy_loss(probs: &Matrix, labels: &[usize]) -> Result<f64, NnError> {
    if labels.is_empty() {
        check_labels(probs, labels)?;
        return Ok(0.0);
    }
    let w = vec![1.0 / labels.len() as f64; labels.len()];
    weighted_cross_entropy(probs, labels, &w)
}

/// `-Σ_i w_i · log p_i[label_i]`.
pub fn weighted_cross_entropy(
    probs: &Matrix,
    labels: &[usize],
    weights: &[f64],
) -> Result<f64, NnError> {
    check_labels(probs, labels)?;
    let mut loss = 0.0;
    for (i, (&y, &w)) in labels.iter().zip(weights).enumerate() {
        loss -= w * probs.get(i, y).max(f64::MIN_POSITIVE).ln();
    }
    Ok(loss)
}

/// Gradient of [`weighted_cross_entropy`] w.r.t. the softmax logits: `w_i (p_i - onehot_i)`.
pub fn softmax_xent_logit_grad(
    probs: &Matrix,
    labels: &[usize],
    weights: &[f64],
) -> Result<Matrix, NnError> {
    check_labels(probs, labels)?;
    let mut g = probs.clone();
    for (i, (&y, &w)) in labels.iter().zip(weights).enumerate() {
        let row = g.row_mut(i);
        row[y] -= 1.0;
        for v in row.iter_mut() {
            *v *= w;
        }
    }
    Ok(g)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub weight_grad: Matrix,
    pub bias_grad: Matrix,
    /// `None` only for the bottom layer when the caller asked to skip it.
    pub input_grad: Option<Matrix>,
}

/// Forward activations of one minibatch through a [`Stack`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    version: u64,
    inputs: Vec<Matrix>,
    output: Matrix,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        &self.output
    }

    pub fn into_output(self) -> Matrix {
        self.output
    }

    pub fn rows(&self) -> usize {
        self.output.rows()
    }
}

/// Ordered list of dense layers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Stack {
    layers: Vec<Dense>,
    #[serde(skip)]
    version: u64,
}

impl PartialEq for Stack {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Stack {
    pub fn new(layers: Vec<Dense>) -> Result<Self, NnError> {
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].spec.output_dim != w[1].spec.input_dim {
                return Err(NnError::Config(format!(
                    "layer {i} outputs {} units but layer {} expects {}",
                    w[0].spec.output_dim,
                    i + 1,
                    w[1].spec.input_dim
                )));
            }
        }
        if let Some(pos) = layers
            .iter()
            .position(|l| l.spec.activation == Activation::Softmax)
        {
            if pos + 1 != layers.len() {
                return Err(NnError::Config(format!(
                    "softmax is only allowed on the last layer, found at layer {pos}"
                )));
            }
        }
        Ok(Self { layers, version: 0 })
    }

    /// Random stack from a list of layer specs.
    pub fn init(specs: &[LayerSpec], rng: &mut impl Rng) -> Result<Self, NnError> {
        let layers = specs
            .iter()
            .map(|s| Dense::init(*s, rng))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(layers)
    }

    pub fn init_seeded(specs: &[LayerSpec], seed: u64) -> Result<Self, NnError> {
        Self::init(specs, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable access invalidates outstanding forward caches.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.version += 1;
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Dense> {
        self.layers
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.layers.first().map(|l| l.spec.input_dim)
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.layers.last().map(|l| l.spec.output_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.spec.param_count()).sum()
    }

    pub fn forward(&self, input: &Matrix) -> Result<ForwardCache, NnError> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let y = layer.forward(&x)?;
            inputs.push(x);
            x = y;
        }
        Ok(ForwardCache {
            version: self.version,
            inputs,
            output: x,
        })
    }

    /// Inference-only forward pass.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix, NnError> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    /// Analytic gradients given `upstream`, the loss gradient w.r.t. the stack output.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: &Matrix,
    ) -> Result<Vec<LayerGrads>, NnError> {
        self.check_cache(cache)?;
        let last = self
            .layers
            .last()
            .ok_or_else(|| NnError::State("backward through an empty stack".into()))?;
        let dz = last.spec.activation.backprop(&cache.output, upstream)?;
        self.backward_preact(cache, dz, true)
    }

    /// Like [`Stack::backward`] but `dlogits` is already the gradient w.r.t. the
    /// last layer's pre-activation, which is how fused softmax cross-entropy enters.
    pub fn backward_from_logits(
        &self,
        cache: &ForwardCache,
        dlogits: Matrix,
        need_input_grad: bool,
    ) -> Result<Vec<LayerGrads>, NnError> {
        self.check_cache(cache)?;
        self.backward_preact(cache, dlogits, need_input_grad)
    }

    /// Backward from a gradient on the stack output, optionally skipping the
    /// bottom layer's input gradient.
    pub fn backward_with(
        &self,
        cache: &ForwardCache,
        upstream: &Matrix,
        need_input_grad: bool,
    ) -> Result<Vec<LayerGrads>, NnError> {
        self.check_cache(cache)?;
        let last = self
            .layers
            .last()
            .ok_or_else(|| NnError::State("backward through an empty stack".into()))?;
        let dz = last.spec.activation.backprop(&cache.output, upstream)?;
        self.backward_preact(cache, dz, need_input_grad)
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<(), NnError> {
        if cache.version != self.version || cache.inputs.len() != self.layers.len() {
            return Err(NnError::State(
                "forward cache does not belong to the current parameters".into(),
            ));
        }
        for (layer, input) in self.layers.iter().zip(&cache.inputs) {
            if input.cols() != layer.spec.input_dim {
                return Err(NnError::State("forward cache shape is stale".into()));
            }
        }
        Ok(())
    }

    fn backward_preact(
        &self,
        cache: &ForwardCache,
        mut dz: Matrix,
        need_input_grad: bool,
    ) -> Result<Vec<LayerGrads>, NnError> {
        if dz.shape() != cache.output.shape() {
            return Err(NnError::Dimension {
                op: "backward",
                left: cache.output.shape(),
                right: dz.shape(),
            });
        }
        let n = self.layers.len();
        let mut grads: Vec<LayerGrads> = Vec::with_capacity(n);
        for idx in (0..n).rev() {
            let layer = &self.layers[idx];
            let input = &cache.inputs[idx];
            let weight_grad = input.t_matmul(&dz)?;
            let bias_grad = dz.sum_rows();
            let input_grad = if idx > 0 || need_input_grad {
                Some(dz.matmul_t(&layer.weights)?)
            } else {
                None
            };
            if idx > 0 {
                let below = &self.layers[idx - 1];
                let g = input_grad.as_ref().expect("computed above");
                dz = below.spec.activation.backprop(input, g)?;
            }
            grads.push(LayerGrads {
                weight_grad,
                bias_grad,
                input_grad,
            });
        }
        grads.reverse();
        for g in &grads {
            g.weight_grad.ensure_finite("backward")?;
        }
        Ok(grads)
    }

    /// All weights then bias of each layer, flattened in layer order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(l.bias.data());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<(), NnError> {
        if flat.len() != self.param_count() {
            return Err(NnError::Dimension {
                op: "set_flat_params",
                left: (self.param_count(), 1),
                right: (flat.len(), 1),
            });
        }
        let mut offset = 0;
        for l in self.layers_mut() {
            let nw = l.weights.data().len();
            l.weights.data_mut().copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = l.bias.data().len();
            l.bias.data_mut().copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }
}

/// Flattens per-layer gradients in the same order as [`Stack::flat_params`].
pub fn flatten_grads(grads: &[LayerGrads]) -> Vec<f64> {
    let mut out = Vec::new();
    for g in grads {
        out.extend_from_slice(g.weight_grad.data());
        out.extend_from_slice(g.bias_grad.data());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn affine_identity_and_hand_product() {
        let out = affine_forward(&m(&[&[1.0, 2.0]]), &m(&[&[1.0, 0.0], &[0.0, 1.0]]), &m(&[&[0.0, 0.0]]))
            .unwrap();
        assert_eq!(out, m(&[&[1.0, 2.0]]));
        let out = affine_forward(&m(&[&[1.0, 1.0]]), &m(&[&[2.0, 0.0], &[0.0, 3.0]]), &m(&[&[1.0, -1.0]]))
            .unwrap();
        assert_eq!(out, m(&[&[3.0, 2.0]]));
    }

    #[test]
    fn affine_shape_mismatch_names_both_shapes() {
        let err = affine_forward(&Matrix::zeros(1, 3), &Matrix::zeros(2, 2), &Matrix::zeros(1, 2))
            .unwrap_err();
        assert_eq!(
            err,
            NnError::Dimension {
                op: "affine_forward",
                left: (1, 3),
                right: (2, 2)
            }
        );
        assert!(err.to_string().contains("(1, 3)") && err.to_string().contains("(2, 2)"));
    }

    #[test]
    fn sigmoid_fixed_points() {
        let s = sigmoid(&m(&[&[0.0, 1000.0, -1000.0, 3.0, -3.0]]));
        assert_eq!(s.get(0, 0), 0.5);
        assert!((s.get(0, 1) - 1.0).abs() < 1e-12);
        assert!(s.get(0, 2) >= 0.0 && s.get(0, 2) < 1e-12);
        assert!((s.get(0, 3) + s.get(0, 4) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn leaky_relu_cases() {
        let y = leaky_relu(&m(&[&[5.0, -2.0, 0.0]]), 0.01).unwrap();
        assert_eq!(y.get(0, 0), 5.0);
        assert!((y.get(0, 1) + 0.02).abs() < 1e-15);
        assert_eq!(y.get(0, 2), 0.0);
        assert!(matches!(leaky_relu(&y, 0.0), Err(NnError::Config(_))));
        assert!(matches!(leaky_relu(&y, 1.0), Err(NnError::Config(_))));
    }

    #[test]
    fn leaky_relu_derivative_at_zero_is_one() {
        let y = Matrix::zeros(1, 1);
        let g = Activation::leaky_relu().backprop(&y, &Matrix::filled(1, 1, 2.0)).unwrap();
        assert_eq!(g.get(0, 0), 2.0);
    }

    #[test]
    fn softmax_cases() {
        let p = softmax_rows(&m(&[&[0.0, 0.0], &[1000.0, 0.0], &[0.3, -1.2]]));
        assert_eq!(p.row(0), &[0.5, 0.5]);
        assert_eq!(p.get(1, 0), 1.0);
        assert!(p.get(1, 1) < 1e-200);
        let shifted = softmax_rows(&m(&[&[7.3, 5.8]]));
        assert!((shifted.get(0, 0) - p.get(2, 0)).abs() < 1e-15);
        assert!(p.is_finite());
    }

    #[test]
    fn cross_entropy_cases() {
        assert_eq!(cross_entropy_loss(&m(&[&[0.0, 1.0]]), &[1]).unwrap(), 0.0);
        let e = (-1.0f64).exp();
        let l = cross_entropy_loss(&m(&[&[e, 1.0 - e]]), &[0]).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
        let l = cross_entropy_loss(&m(&[&[0.5, 0.5], &[0.25, 0.75]]), &[0, 0]).unwrap();
        assert!((l - (2f64.ln() + 4f64.ln()) / 2.0).abs() < 1e-15);
        assert!((l - 1.0397).abs() < 1e-4);
        assert!(matches!(
            cross_entropy_loss(&m(&[&[0.5, 0.5]]), &[2]),
            Err(NnError::Label { label: 2, .. })
        ));
    }

    #[test]
    fn linear_layer_weight_grad_is_input_transpose_times_ones() {
        let spec = LayerSpec::new(3, 2, Activation::Identity);
        let stack = Stack::init_seeded(&[spec], 4).unwrap();
        let x = m(&[&[1.0, 2.0, 3.0], &[-1.0, 0.5, 4.0]]);
        let cache = stack.forward(&x).unwrap();
        let grads = stack.backward(&cache, &Matrix::filled(2, 2, 1.0)).unwrap();
        let expected = x.t_matmul(&Matrix::filled(2, 2, 1.0)).unwrap();
        assert_eq!(grads[0].weight_grad, expected);
        assert_eq!(grads[0].bias_grad, m(&[&[2.0, 2.0]]));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let specs = [
            LayerSpec::new(4, 5, Activation::Sigmoid),
            LayerSpec::new(5, 3, Activation::Softmax),
        ];
        let stack = Stack::init_seeded(&specs, 1).unwrap();
        let cache = stack.forward(&Matrix::filled(3, 4, 0.2)).unwrap();
        let grads = stack.backward(&cache, &Matrix::zeros(3, 3)).unwrap();
        assert!(flatten_grads(&grads).iter().all(|&g| g == 0.0));
        assert!(grads[0].input_grad.as_ref().unwrap().data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let specs = [LayerSpec::new(2, 2, Activation::Sigmoid)];
        let mut stack = Stack::init_seeded(&specs, 0).unwrap();
        let cache = stack.forward(&Matrix::zeros(1, 2)).unwrap();
        stack.layers_mut()[0].bias.set(0, 0, 1.0);
        assert!(matches!(
            stack.backward(&cache, &Matrix::zeros(1, 2)),
            Err(NnError::State(_))
        ));
        let other = Stack::init_seeded(&[LayerSpec::new(2, 2, Activation::Sigmoid); 2], 0).unwrap();
        assert!(matches!(
            other.backward(&cache, &Matrix::zeros(1, 2)),
            Err(NnError::State(_))
        ));
    }

    #[test]
    fn softmax_must_be_terminal() {
        let specs = [
            LayerSpec::new(2, 2, Activation::Softmax),
            LayerSpec::new(2, 2, Activation::Sigmoid),
        ];
        assert!(matches!(Stack::init_seeded(&specs, 0), Err(NnError::Config(_))));
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let spec = LayerSpec::new(30, 20, Activation::Sigmoid);
        let a = Stack::init_seeded(&[spec], 9).unwrap();
        let b = Stack::init_seeded(&[spec], 9).unwrap();
        assert_eq!(a, b);
        let limit = (6.0f64 / 50.0).sqrt();
        assert!(a.layers()[0].weights.data().iter().all(|w| w.abs() <= limit));
    }
}
