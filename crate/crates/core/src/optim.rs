//! Adam with bias correction and the new-bob learning-rate scheduler.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient in parameter group `{group}` (tensor {tensor})")]
    NonFinite { group: String, tensor: usize },
    #[error("parameter group `{group}`: {detail}")]
    Shape { group: String, detail: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for one parameter group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: Vec<Matrix>,
    pub second_moment: Vec<Matrix>,
}

impl AdamState {
    pub fn for_shapes(shapes: &[(usize, usize)]) -> Self {
        Self {
            step_count: 0,
            first_moment: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            second_moment: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
        }
    }
}

/// One bias-corrected Adam step on a single parameter group.
pub fn adam_apply(
    cfg: &AdamConfig,
    state: &mut AdamState,
    group: &str,
    params: &mut [&mut Matrix],
    grads: &[&Matrix],
) -> Result<(), OptimError> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(OptimError::Shape {
            group: group.to_string(),
            detail: format!(
                "{} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                state.first_moment.len()
            ),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.first_moment[i].shape() != p.shape() {
            return Err(OptimError::Shape {
                group: group.to_string(),
                detail: format!(
                    "tensor {i}: param {:?}, grad {:?}, moment {:?}",
                    p.shape(),
                    g.shape(),
                    state.first_moment[i].shape()
                ),
            });
        }
        if !g.is_finite() {
            return Err(OptimError::NonFinite {
                group: group.to_string(),
                tensor: i,
            });
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.first_moment[i].data_mut();
        let v = state.second_moment[i].data_mut();
        for (((theta, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *theta -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

/// Adam over named parameter groups, each with its own moments and step count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    groups: BTreeMap<String, AdamState>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            groups: BTreeMap::new(),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.config.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    pub fn state(&self, group: &str) -> Option<&AdamState> {
        self.groups.get(group)
    }

    /// Drops the moments of a group, e.g. when its parameters are discarded.
    pub fn forget(&mut self, group: &str) {
        self.groups.remove(group);
    }

    pub fn step(
        &mut self,
        group: &str,
        params: &mut [&mut Matrix],
        grads: &[&Matrix],
    ) -> Result<(), OptimError> {
        let shapes: Vec<_> = params.iter().map(|p| p.shape()).collect();
        let state = self
            .groups
            .entry(group.to_string())
            .or_insert_with(|| AdamState::for_shapes(&shapes));
        adam_apply(&self.config, state, group, params, grads)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewBobConfig {
    pub initial_lr: f64,
    pub halving_factor: f64,
    /// Minimum relative improvement of the validation metric, as a fraction.
    pub improvement_threshold: f64,
}

impl Default for NewBobConfig {
    fn default() -> Self {
        Self {
            initial_lr: 1e-4,
            halving_factor: 0.5,
            improvement_threshold: 0.005,
        }
    }
}

/// Validation-driven schedule: constant rate until improvement stalls, then
/// halving every epoch, then stop when it stalls again.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewBobState {
    pub current_lr: f64,
    pub halving_factor: f64,
    pub improvement_threshold: f64,
    pub ramping: bool,
    pub best_valid_metric: Option<f64>,
    pub stopped: bool,
}

impl NewBobState {
    pub fn new(cfg: NewBobConfig) -> Self {
        Self {
            current_lr: cfg.initial_lr,
            halving_factor: cfg.halving_factor,
            improvement_threshold: cfg.improvement_threshold,
            ramping: false,
            best_valid_metric: None,
            stopped: false,
        }
    }

    /// Feeds one epoch's validation accuracy (higher is better). Returns the
    /// rate for the next epoch and whether to stop. `stop` is reported once;
    /// later calls leave the state untouched.
    pub fn step(&mut self, valid_metric: f64) -> (f64, bool) {
        if self.stopped {
            return (self.current_lr, false);
        }
        let improvement = match self.best_valid_metric {
            None => f64::INFINITY,
            Some(best) => (valid_metric - best) / best.abs().max(f64::MIN_POSITIVE),
        };
        if self.best_valid_metric.is_none_or(|best| valid_metric > best) {
            self.best_valid_metric = Some(valid_metric);
        }
        let stalled = improvement < self.improvement_threshold;
        if self.ramping {
            if stalled {
                self.stopped = true;
                return (self.current_lr, true);
            }
            self.current_lr *= self.halving_factor;
        } else if stalled {
            self.ramping = true;
            self.current_lr *= self.halving_factor;
        }
        (self.current_lr, false)
    }
}

pub fn newbob_step(state: &mut NewBobState, valid_metric: f64) -> (f64, bool) {
    state.step(valid_metric)
}
