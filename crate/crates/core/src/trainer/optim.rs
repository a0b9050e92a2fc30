use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::LossNormalization;

use super::model::{Gradients, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub loss_normalization: LossNormalization,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            warmup_steps: 10,
            epochs: 300,
            batch_size: 256,
            weight_decay: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            loss_normalization: LossNormalization::PaperMean,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.learning_rate) {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight_decay", "must be non-negative"));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::invalid(name, "must lie in (0, 1)"));
            }
        }
        if !pos(self.adam_eps) {
            return Err(Error::invalid("adam_eps", "must be positive"));
        }
        Ok(())
    }

    /// `lr · min(1, step / warmup_steps)`.
    pub fn effective_lr(&self, step: usize) -> f64 {
        if self.warmup_steps == 0 {
            self.learning_rate
        } else {
            self.learning_rate * (step as f64 / self.warmup_steps as f64).min(1.0)
        }
    }
}

/// First and second moment estimates, laid out as `W` then `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let n = params.weights().len() + params.bias().len();
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One AdamW update with decoupled weight decay and bias-corrected moments.
/// `step` starts at 1.
pub fn adamw_step(params: &mut ModelParams, grads: &Gradients, step: usize, config: &TrainConfig, state: &mut AdamState) {
    debug_assert!(step >= 1);
    let lr = config.effective_lr(step);
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let c1 = 1.0 - b1.powi(step as i32);
    let c2 = 1.0 - b2.powi(step as i32);
    let decay = lr * config.weight_decay;
    let (w, b) = params.params_mut();
    let thetas = w.iter_mut().chain(b.iter_mut());
    let gs = grads.w.iter().chain(&grads.b);
    for (((theta, &g), m), v) in thetas.zip(gs).zip(state.m.iter_mut()).zip(state.v.iter_mut()) {
        *theta -= decay * *theta;
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *theta -= lr * m_hat / (v_hat.sqrt() + config.adam_eps);
    }
}
