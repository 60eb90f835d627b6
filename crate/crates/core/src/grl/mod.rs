//! Partitioned acoustic-model network with a gradient-reversed domain head.
//!
//! The main network is a sigmoid MLP with a softmax over frame classes. For
//! adaptation it is cut after hidden layer `f`: layers `1..=f` form the shared
//! feature extractor, the rest form the senone head, and a leaky-ReLU domain
//! discriminator reads the feature layer through a [`GradientReversal`] node.

mod checkpoint;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use train::{
    adapt_adversarial, adaptation_gradients, adaptation_step, evaluate, evaluate_domain, grl_equivalence_check,
    supervised_step, train_supervised, AdaptConfig, AdaptGrads, EquivalenceReport, MetricsRecord,
    MixingPolicy, TrainConfig, DOMAIN_GROUP, SENONE_GROUP, SHARED_GROUP,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::nn::{Activation, LayerSpec, Matrix, NnError, Stack};
use crate::optim::OptimError;

#[derive(Debug, Error)]
pub enum AdaptError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid state: {0}")]
    State(String),
}

/// Effective reversal coefficient for a 0-based epoch: `min(epoch / 10, 1) · base`.
pub fn lambda_schedule(epoch: usize, lambda_base: f64) -> f64 {
    (epoch as f64 / 10.0).min(1.0) * lambda_base
}

/// Identity going forward, `-λ_e` times the gradient going backward.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientReversal {
    pub lambda_effective: f64,
}

impl GradientReversal {
    pub fn new(lambda_effective: f64) -> Self {
        Self { lambda_effective }
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        grl_forward(x)
    }

    pub fn backward(&self, g: &Matrix) -> Matrix {
        grl_backward(g, self.lambda_effective)
    }
}

pub fn grl_forward(x: &Matrix) -> Matrix {
    x.clone()
}

pub fn grl_backward(g: &Matrix, lambda_effective: f64) -> Matrix {
    g.map(|v| -lambda_effective * v)
}

/// Network parameters split into shared stack, senone head and optional domain head.
///
/// Without a domain head the split point is unset: `shared` is empty and the
/// whole main network lives in `senone_head`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    shared: Stack,
    senone_head: Stack,
    domain_head: Option<Stack>,
    feature_layer: Option<usize>,
}

/// Sigmoid hidden layers of the given widths followed by a softmax over `n_classes`.
pub fn build_main_network(
    n_input: usize,
    n_classes: usize,
    hidden: &[usize],
    seed: u64,
) -> Result<NetworkParams, AdaptError> {
    if hidden.is_empty() {
        return Err(AdaptError::Config("at least one hidden layer is required".into()));
    }
    if n_input == 0 || n_classes == 0 {
        return Err(AdaptError::Config(
            "input and class counts must be positive".into(),
        ));
    }
    let mut specs = Vec::with_capacity(hidden.len() + 1);
    let mut prev = n_input;
    for &w in hidden {
        specs.push(LayerSpec::new(prev, w, Activation::Sigmoid));
        prev = w;
    }
    specs.push(LayerSpec::new(prev, n_classes, Activation::Softmax));
    Ok(NetworkParams {
        shared: Stack::new(Vec::new())?,
        senone_head: Stack::init_seeded(&specs, seed)?,
        domain_head: None,
        feature_layer: None,
    })
}

/// Attaches a fresh discriminator (leaky-ReLU hidden layers, 2-way softmax) at
/// the output of hidden layer `f` (1-based).
pub fn attach_domain_head(
    mut net: NetworkParams,
    f: usize,
    widths: &[usize],
    slope: f64,
    seed: u64,
) -> Result<NetworkParams, AdaptError> {
    if net.domain_head.is_some() {
        return Err(AdaptError::State("a domain head is already attached".into()));
    }
    let n_hidden = net.hidden_layer_count();
    if f == 0 || f > n_hidden {
        return Err(AdaptError::Config(format!(
            "feature layer index {f} outside 1..={n_hidden}"
        )));
    }
    let mut layers = net.senone_head.into_layers();
    let head = layers.split_off(f);
    let width = layers[f - 1].spec.output_dim;
    let mut specs = Vec::with_capacity(widths.len() + 1);
    let mut prev = width;
    for &w in widths {
        specs.push(LayerSpec::new(prev, w, Activation::LeakyRelu { slope }));
        prev = w;
    }
    specs.push(LayerSpec::new(prev, 2, Activation::Softmax));
    net.shared = Stack::new(layers)?;
    net.senone_head = Stack::new(head)?;
    net.domain_head = Some(Stack::init_seeded(&specs, seed)?);
    net.feature_layer = Some(f);
    Ok(net)
}

impl NetworkParams {
    pub fn shared(&self) -> &Stack {
        &self.shared
    }

    pub fn senone_head(&self) -> &Stack {
        &self.senone_head
    }

    pub fn domain_head(&self) -> Option<&Stack> {
        self.domain_head.as_ref()
    }

    pub fn feature_layer_index(&self) -> Option<usize> {
        self.feature_layer
    }

    /// Mutable shared stack, senone head and domain head. Layer shapes are
    /// fixed; only parameter values can change through these.
    pub fn parts_mut(&mut self) -> (&mut Stack, &mut Stack, Option<&mut Stack>) {
        (
            &mut self.shared,
            &mut self.senone_head,
            self.domain_head.as_mut(),
        )
    }

    pub fn hidden_layer_count(&self) -> usize {
        self.shared.len() + self.senone_head.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.shared
            .input_dim()
            .or(self.senone_head.input_dim())
            .expect("main network is never empty")
    }

    pub fn n_classes(&self) -> usize {
        self.senone_head.output_dim().expect("main network is never empty")
    }

    /// Parameters of the main (senone) network, excluding any domain head.
    pub fn main_param_count(&self) -> usize {
        self.shared.param_count() + self.senone_head.param_count()
    }

    /// Removes the domain head and merges the shared layers back into the main network.
    pub fn detach_domain_head(self) -> (NetworkParams, Option<Stack>) {
        let mut layers = self.shared.into_layers();
        layers.extend(self.senone_head.into_layers());
        let net = NetworkParams {
            shared: Stack::new(Vec::new()).expect("empty stack"),
            senone_head: Stack::new(layers).expect("layers were valid before the split"),
            domain_head: None,
            feature_layer: None,
        };
        (net, self.domain_head)
    }

    /// Feature-layer activations (the shared stack output).
    pub fn features(&self, x: &Matrix) -> Result<Matrix, NnError> {
        self.shared.predict(x)
    }

    /// Class posteriors.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix, NnError> {
        let h = self.shared.predict(x)?;
        self.senone_head.predict(&h)
    }

    /// Domain posteriors (column 0 source, column 1 target).
    pub fn predict_domain(&self, x: &Matrix) -> Result<Matrix, AdaptError> {
        let head = self
            .domain_head
            .as_ref()
            .ok_or_else(|| AdaptError::State("no domain head attached".into()))?;
        let h = self.shared.predict(x)?;
        Ok(head.predict(&grl_forward(&h))?)
    }

    /// All main-network parameters in layer order; used for bitwise comparisons.
    pub fn main_flat_params(&self) -> Vec<f64> {
        let mut p = self.shared.flat_params();
        p.extend(self.senone_head.flat_params());
        p
    }
}
