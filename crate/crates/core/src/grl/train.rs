//! Supervised training and adversarial adaptation loops.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{grl_backward, grl_forward, lambda_schedule, AdaptError, NetworkParams};
use crate::corpus::{Domain, FrameDataset, MixedBatch, MixedBatchIterator};
use crate::nn::{
    cross_entropy_loss, flatten_grads, softmax_xent_logit_grad, weighted_cross_entropy,
    LayerGrads, Matrix, Stack,
};
use crate::optim::{Adam, NewBobConfig, NewBobState};

const EVAL_CHUNK: usize = 2048;

pub const SHARED_GROUP: &str = "shared";
pub const SENONE_GROUP: &str = "senone_head";
pub const DOMAIN_GROUP: &str = "domain_head";

/// Per-epoch accuracies and losses. Training-split values are running averages
/// over the epoch's minibatches; validation values come from a full pass after
/// the epoch. Domain fields are `None` for supervised training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub senone_acc_train: f64,
    pub senone_acc_valid: f64,
    pub domain_acc_train: Option<f64>,
    pub domain_acc_valid: Option<f64>,
    pub senone_loss: f64,
    pub domain_loss: Option<f64>,
    pub lambda_effective: f64,
    pub learning_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

/// How adaptation minibatches are drawn from the two domains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingPolicy {
    /// One shuffle over the union of both sets per epoch.
    #[default]
    GlobalShuffle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub lambda_base: f64,
    pub feature_layer_index: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub mixing: MixingPolicy,
    pub seed: u64,
    /// New-bob scheduling during adaptation; off when `None`.
    #[serde(default)]
    pub newbob: Option<NewBobConfig>,
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<(), AdaptError> {
        if !(self.lambda_base >= 0.0 && self.lambda_base.is_finite()) {
            return Err(AdaptError::Config(format!(
                "lambda must be a finite non-negative number, got {}",
                self.lambda_base
            )));
        }
        if self.epochs == 0 {
            return Err(AdaptError::Config("adaptation needs at least one epoch".into()));
        }
        if self.batch_size < 2 {
            return Err(AdaptError::Config(
                "batch size must be at least 2 to hold both domains".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(AdaptError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

fn step_stack(
    adam: &mut Adam,
    group: &str,
    stack: &mut Stack,
    grads: &[LayerGrads],
) -> Result<(), AdaptError> {
    let mut params = Vec::with_capacity(stack.len() * 2);
    for layer in stack.layers_mut() {
        params.push(&mut layer.weights);
        params.push(&mut layer.bias);
    }
    let mut g = Vec::with_capacity(grads.len() * 2);
    for lg in grads {
        g.push(&lg.weight_grad);
        g.push(&lg.bias_grad);
    }
    adam.step(group, &mut params, &g)?;
    Ok(())
}

fn count_correct(probs: &Matrix, labels: &[usize]) -> usize {
    probs
        .argmax_rows()
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count()
}

/// One supervised update on a labeled minibatch. Returns the batch loss and the
/// number of correctly classified rows.
pub fn supervised_step(
    net: &mut NetworkParams,
    x: &Matrix,
    labels: &[usize],
    adam: &mut Adam,
) -> Result<(f64, usize), AdaptError> {
    if labels.is_empty() {
        return Ok((0.0, 0));
    }
    let (shared, senone, _) = net.parts_mut();
    let shared_cache = if shared.is_empty() {
        None
    } else {
        Some(shared.forward(x)?)
    };
    let h = shared_cache.as_ref().map_or(x, |c| c.output());
    let cache = senone.forward(h)?;
    let probs = cache.output();
    let w = vec![1.0 / labels.len() as f64; labels.len()];
    let loss = weighted_cross_entropy(probs, labels, &w)?;
    let correct = count_correct(probs, labels);
    let dlogits = softmax_xent_logit_grad(probs, labels, &w)?;
    let senone_grads = senone.backward_from_logits(&cache, dlogits, shared_cache.is_some())?;
    if let Some(sc) = &shared_cache {
        let dh = senone_grads[0].input_grad.as_ref().expect("requested");
        let shared_grads = shared.backward_with(sc, dh, false)?;
        step_stack(adam, SHARED_GROUP, shared, &shared_grads)?;
    }
    step_stack(adam, SENONE_GROUP, senone, &senone_grads)?;
    Ok((loss, correct))
}

/// Mean cross-entropy and argmax accuracy of the senone path on labeled data.
pub fn evaluate(net: &NetworkParams, data: &FrameDataset) -> Result<(f64, f64), AdaptError> {
    let labels = data.require_labels("evaluate")?;
    let mut correct = 0;
    let mut loss = 0.0;
    for start in (0..data.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(data.len());
        let rows: Vec<usize> = (start..end).collect();
        let x = data.features().select_rows(&rows);
        let p = net.predict(&x)?;
        let y = &labels[start..end];
        correct += count_correct(&p, y);
        loss += cross_entropy_loss(&p, y)? * y.len() as f64;
    }
    let n = data.len() as f64;
    Ok((correct as f64 / n, loss / n))
}

/// Discriminator accuracy over datasets whose rows are tagged by their dataset's domain.
pub fn evaluate_domain(net: &NetworkParams, sets: &[&FrameDataset]) -> Result<f64, AdaptError> {
    let mut correct = 0;
    let mut total = 0;
    for d in sets {
        let y = d.domain().class_index();
        for start in (0..d.len()).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(d.len());
            let rows: Vec<usize> = (start..end).collect();
            let p = net.predict_domain(&d.features().select_rows(&rows))?;
            correct += p.argmax_rows().iter().filter(|&&c| c == y).count();
            total += end - start;
        }
    }
    if total == 0 {
        return Err(AdaptError::Config("domain evaluation on empty data".into()));
    }
    Ok(correct as f64 / total as f64)
}

/// Senone accuracy pooled over the labeled sets; unlabeled sets are skipped.
fn valid_accuracy(net: &NetworkParams, valid: &[&FrameDataset]) -> Result<f64, AdaptError> {
    let mut correct = 0.0;
    let mut n = 0.0;
    for v in valid.iter().filter(|v| v.has_labels()) {
        let (acc, _) = evaluate(net, v)?;
        correct += acc * v.len() as f64;
        n += v.len() as f64;
    }
    if n == 0.0 {
        return Err(AdaptError::Config("no labeled validation data".into()));
    }
    Ok(correct / n)
}

/// Stage-one training on labeled source data. `valid` sets must be labeled.
pub fn train_supervised(
    mut net: NetworkParams,
    labeled: &FrameDataset,
    valid: &[&FrameDataset],
    adam: &mut Adam,
    mut scheduler: Option<&mut NewBobState>,
    cfg: &TrainConfig,
) -> Result<(NetworkParams, Vec<MetricsRecord>), AdaptError> {
    labeled.require_labels("train_supervised")?;
    if net.domain_head().is_some() {
        return Err(AdaptError::State(
            "supervised training expects a network without a domain head".into(),
        ));
    }
    if cfg.epochs == 0 {
        return Ok((net, Vec::new()));
    }
    if let Some(s) = scheduler.as_deref() {
        adam.set_learning_rate(s.current_lr);
    }
    let mut it = MixedBatchIterator::new(
        labeled,
        None,
        cfg.batch_size,
        ChaCha8Rng::seed_from_u64(cfg.seed),
    )?;
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if epoch > 0 {
            it.new_epoch();
        }
        let lr = adam.learning_rate();
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        while let Some(batch) = it.next_batch() {
            let (x, y) = batch.source_part();
            let (loss, c) = supervised_step(&mut net, &x, &y, adam)?;
            loss_sum += loss * y.len() as f64;
            correct += c;
            seen += y.len();
        }
        let valid_acc = valid_accuracy(&net, valid)?;
        records.push(MetricsRecord {
            epoch: epoch + 1,
            senone_acc_train: correct as f64 / seen as f64,
            senone_acc_valid: valid_acc,
            domain_acc_train: None,
            domain_acc_valid: None,
            senone_loss: loss_sum / seen as f64,
            domain_loss: None,
            lambda_effective: 0.0,
            learning_rate: lr,
        });
        if let Some(s) = scheduler.as_deref_mut() {
            let (next_lr, stop) = s.step(valid_acc);
            adam.set_learning_rate(next_lr);
            if stop {
                break;
            }
        }
    }
    Ok((net, records))
}

/// Gradients of one adaptation minibatch. A group is `None` when the batch
/// holds nothing that contributes to it.
#[derive(Clone, Debug)]
pub struct AdaptGrads {
    pub shared: Option<Vec<LayerGrads>>,
    pub senone: Option<Vec<LayerGrads>>,
    pub domain: Vec<LayerGrads>,
    pub senone_loss: f64,
    pub domain_loss: f64,
    pub senone_correct: usize,
    pub domain_correct: usize,
    pub n_source: usize,
}

/// Per-row weights for the two-domain loss: `1/N^s` on source rows and `1/N^t`
/// on target rows, each over the batch's own counts.
fn domain_weights(domains: &[Domain]) -> (Vec<usize>, Vec<f64>) {
    let ns = domains.iter().filter(|&&d| d == Domain::Source).count();
    let nt = domains.len() - ns;
    let labels = domains.iter().map(|d| d.class_index()).collect();
    let weights = domains
        .iter()
        .map(|d| match d {
            Domain::Source => 1.0 / ns as f64,
            Domain::Target => 1.0 / nt as f64,
        })
        .collect();
    (labels, weights)
}

/// Senone loss on source rows, domain loss on all rows, and the shared-stack
/// gradient routed through the reversal node, all on the current parameters.
pub fn adaptation_gradients(
    net: &NetworkParams,
    batch: &MixedBatch,
    lambda_effective: f64,
) -> Result<AdaptGrads, AdaptError> {
    let head = net
        .domain_head()
        .ok_or_else(|| AdaptError::State("adaptation requires a domain head".into()))?;
    let shared = net.shared();
    let senone = net.senone_head();
    let shared_cache = shared.forward(&batch.features)?;
    let h = shared_cache.output();
    let mut dh = Matrix::zeros(h.rows(), h.cols());

    let src = batch.source_rows();
    let (senone_grads, senone_loss, senone_correct) = if src.is_empty() {
        (None, 0.0, 0)
    } else {
        let labels: Vec<usize> = src
            .iter()
            .map(|&r| batch.labels[r].expect("source rows carry labels"))
            .collect();
        let cache = senone.forward(&h.select_rows(&src))?;
        let probs = cache.output();
        let w = vec![1.0 / src.len() as f64; src.len()];
        let loss = weighted_cross_entropy(probs, &labels, &w)?;
        let correct = count_correct(probs, &labels);
        let grads =
            senone.backward_from_logits(&cache, softmax_xent_logit_grad(probs, &labels, &w)?, true)?;
        let dhs = grads[0].input_grad.as_ref().expect("requested");
        for (k, &r) in src.iter().enumerate() {
            dh.row_mut(r).copy_from_slice(dhs.row(k));
        }
        (Some(grads), loss, correct)
    };

    let (dlabels, dweights) = domain_weights(&batch.domains);
    let dcache = head.forward(&grl_forward(h))?;
    let q = dcache.output();
    let domain_loss = weighted_cross_entropy(q, &dlabels, &dweights)?;
    let domain_correct = count_correct(q, &dlabels);
    let domain_grads =
        head.backward_from_logits(&dcache, softmax_xent_logit_grad(q, &dlabels, &dweights)?, true)?;

    // λ_e = 0 blocks the adversary completely; skipping the add keeps the
    // shared gradient bitwise equal to the senone-only one.
    let reversal_active = lambda_effective != 0.0;
    if reversal_active {
        let reversed = grl_backward(
            domain_grads[0].input_grad.as_ref().expect("requested"),
            lambda_effective,
        );
        for (d, r) in dh.data_mut().iter_mut().zip(reversed.data()) {
            *d += r;
        }
    }
    let shared_grads = if !src.is_empty() || reversal_active {
        Some(shared.backward_with(&shared_cache, &dh, false)?)
    } else {
        None
    };
    Ok(AdaptGrads {
        shared: shared_grads,
        senone: senone_grads,
        domain: domain_grads,
        senone_loss,
        domain_loss,
        senone_correct,
        domain_correct,
        n_source: src.len(),
    })
}

/// Computes [`adaptation_gradients`] on `batch` and applies them: the shared
/// and senone groups only when the batch contributes to them, the domain head
/// always. Returns the gradients for bookkeeping.
pub fn adaptation_step(
    net: &mut NetworkParams,
    batch: &MixedBatch,
    lambda_effective: f64,
    adam: &mut Adam,
) -> Result<AdaptGrads, AdaptError> {
    let g = adaptation_gradients(net, batch, lambda_effective)?;
    let (shared, senone, head) = net.parts_mut();
    let head = head.ok_or_else(|| AdaptError::State("adaptation requires a domain head".into()))?;
    if let Some(sg) = &g.shared {
        step_stack(adam, SHARED_GROUP, shared, sg)?;
    }
    if let Some(yg) = &g.senone {
        step_stack(adam, SENONE_GROUP, senone, yg)?;
    }
    step_stack(adam, DOMAIN_GROUP, head, &g.domain)?;
    Ok(g)
}

/// Outcome of comparing the reversal-routed shared gradient with
/// `∂L_y/∂θ_f − λ_e·∂L_d/∂θ_f` from two separate backward passes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub lambda_effective: f64,
    pub max_abs_deviation: f64,
    /// `max_abs_deviation` divided by the largest explicit gradient magnitude.
    pub max_relative_deviation: f64,
    pub n_params: usize,
}

pub fn grl_equivalence_check(
    net: &NetworkParams,
    batch: &MixedBatch,
    lambda_effective: f64,
) -> Result<EquivalenceReport, AdaptError> {
    let head = net
        .domain_head()
        .ok_or_else(|| AdaptError::State("equivalence check requires a domain head".into()))?;
    let routed = adaptation_gradients(net, batch, lambda_effective)?;
    let n_params = net.shared().param_count();
    let routed = routed
        .shared
        .map(|g| flatten_grads(&g))
        .unwrap_or_else(|| vec![0.0; n_params]);

    let shared = net.shared();
    let cache = shared.forward(&batch.features)?;
    let h = cache.output();

    // pass 1: senone loss only
    let src = batch.source_rows();
    let mut dh_y = Matrix::zeros(h.rows(), h.cols());
    if !src.is_empty() {
        let labels: Vec<usize> = src.iter().map(|&r| batch.labels[r].unwrap()).collect();
        let sc = net.senone_head().forward(&h.select_rows(&src))?;
        let w = vec![1.0 / src.len() as f64; src.len()];
        let g = net.senone_head().backward(
            &sc,
            &xent_prob_grad(sc.output(), &labels, &w),
        )?;
        let dhs = g[0].input_grad.as_ref().unwrap();
        for (k, &r) in src.iter().enumerate() {
            dh_y.row_mut(r).copy_from_slice(dhs.row(k));
        }
    }
    let grad_y = flatten_grads(&shared.backward(&cache, &dh_y)?);

    // pass 2: domain loss only, no reversal
    let (dl, dw) = domain_weights(&batch.domains);
    let dc = head.forward(h)?;
    let g = head.backward(&dc, &xent_prob_grad(dc.output(), &dl, &dw))?;
    let dh_d = g[0].input_grad.as_ref().unwrap();
    let grad_d = flatten_grads(&shared.backward(&cache, dh_d)?);

    let explicit: Vec<f64> = grad_y
        .iter()
        .zip(&grad_d)
        .map(|(y, d)| y - lambda_effective * d)
        .collect();
    let scale = explicit.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let max_abs = routed
        .iter()
        .zip(&explicit)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(EquivalenceReport {
        lambda_effective,
        max_abs_deviation: max_abs,
        max_relative_deviation: if scale > 0.0 { max_abs / scale } else { max_abs },
        n_params,
    })
}

/// Gradient of `-Σ w_i log p_i[y_i]` w.r.t. the probabilities themselves.
fn xent_prob_grad(probs: &Matrix, labels: &[usize], weights: &[f64]) -> Matrix {
    let mut g = Matrix::zeros(probs.rows(), probs.cols());
    for (i, (&y, &w)) in labels.iter().zip(weights).enumerate() {
        g.set(i, y, -w / probs.get(i, y));
    }
    g
}

/// Adversarial adaptation (two-stage method, second stage).
///
/// Every minibatch updates the senone head on source rows, the domain head on
/// all rows, and the shared stack with the senone gradient plus the reversed
/// domain gradient scaled by the epoch's `λ_e`. The domain head is removed from
/// the returned network.
///
/// Validation senone accuracy pools the labeled sets in `valid`; domain
/// accuracy uses every set, tagged by its domain.
pub fn adapt_adversarial(
    mut net: NetworkParams,
    source_labeled: &FrameDataset,
    target_unlabeled: &FrameDataset,
    valid: &[&FrameDataset],
    cfg: &AdaptConfig,
    adam: &mut Adam,
) -> Result<(NetworkParams, Vec<MetricsRecord>), AdaptError> {
    cfg.validate()?;
    source_labeled.require_labels("adaptation source")?;
    target_unlabeled.require_unlabeled("adaptation target")?;
    if net.domain_head().is_none() {
        return Err(AdaptError::State(
            "attach a domain head before adaptation".into(),
        ));
    }
    if net.feature_layer_index() != Some(cfg.feature_layer_index) {
        return Err(AdaptError::Config(format!(
            "domain head sits at layer {:?} but the config asks for {}",
            net.feature_layer_index(),
            cfg.feature_layer_index
        )));
    }
    adam.set_learning_rate(cfg.learning_rate);
    let mut scheduler = cfg.newbob.map(|nb| {
        NewBobState::new(NewBobConfig {
            initial_lr: cfg.learning_rate,
            ..nb
        })
    });
    let mut it = MixedBatchIterator::new(
        source_labeled,
        Some(target_unlabeled),
        cfg.batch_size,
        ChaCha8Rng::seed_from_u64(cfg.seed),
    )?;

    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if epoch > 0 {
            it.new_epoch();
        }
        let lambda_e = lambda_schedule(epoch, cfg.lambda_base);
        let lr = adam.learning_rate();
        let mut s_loss = 0.0;
        let mut d_loss = 0.0;
        let (mut s_correct, mut s_seen, mut d_correct, mut d_seen, mut batches) = (0, 0, 0, 0, 0);
        while let Some(batch) = it.next_batch() {
            let g = adaptation_step(&mut net, &batch, lambda_e, adam)?;
            s_loss += g.senone_loss * g.n_source as f64;
            s_correct += g.senone_correct;
            s_seen += g.n_source;
            d_loss += g.domain_loss;
            d_correct += g.domain_correct;
            d_seen += batch.len();
            batches += 1;
        }
        let senone_valid = valid_accuracy(&net, valid)?;
        let domain_valid = evaluate_domain(&net, valid)?;
        records.push(MetricsRecord {
            epoch: epoch + 1,
            senone_acc_train: s_correct as f64 / s_seen.max(1) as f64,
            senone_acc_valid: senone_valid,
            domain_acc_train: Some(d_correct as f64 / d_seen.max(1) as f64),
            domain_acc_valid: Some(domain_valid),
            senone_loss: s_loss / s_seen.max(1) as f64,
            domain_loss: Some(d_loss / batches.max(1) as f64),
            lambda_effective: lambda_e,
            learning_rate: lr,
        });
        if let Some(s) = scheduler.as_mut() {
            let (next_lr, stop) = s.step(senone_valid);
            adam.set_learning_rate(next_lr);
            if stop {
                break;
            }
        }
    }
    adam.forget(DOMAIN_GROUP);
    let (net, _) = net.detach_domain_head();
    Ok((net, records))
}
