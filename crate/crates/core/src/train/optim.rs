use serde::{Deserialize, Serialize};

use crate::autograd::{ParamStore, Tensor};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn for_store(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.entries().iter().map(|e| vec![0.0; e.value.len()]).collect();
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// Bias-corrected Adam update of one flat parameter block at step `t` (≥ 1).
pub fn adam_update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], t: u64, lr: f64) {
    let c1 = 1.0 - BETA1.powi(t as i32);
    let c2 = 1.0 - BETA2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
    }
}

/// One Adam step over every parameter; `grads` is indexed like the store.
pub fn adam_step(store: &mut ParamStore, grads: &[Tensor], state: &mut AdamState, lr: f64) {
    state.step += 1;
    for (k, g) in grads.iter().enumerate() {
        let p = store.get_mut(crate::autograd::ParamId(k));
        adam_update(p.data_mut(), g.data(), &mut state.m[k], &mut state.v[k], state.step, lr);
    }
}

/// Halves the learning rate after `patience` consecutive epochs without an
/// improvement of more than `min_delta` over the best metric so far.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub min_delta: f64,
    pub patience: usize,
    pub factor: f64,
    best: Option<f64>,
    bad_epochs: usize,
}

impl PlateauSchedule {
    pub fn new(lr: f64, min_delta: f64, patience: usize) -> Self {
        PlateauSchedule {
            lr,
            min_delta,
            patience,
            factor: 0.5,
            best: None,
            bad_epochs: 0,
        }
    }

    /// Records one epoch's metric; returns true when the rate was reduced.
    pub fn observe(&mut self, metric: f64) -> bool {
        match self.best {
            Some(b) if metric <= b + self.min_delta => self.bad_epochs += 1,
            _ => {
                self.best = Some(metric);
                self.bad_epochs = 0;
            }
        }
        if self.bad_epochs >= self.patience {
            self.lr *= self.factor;
            self.bad_epochs = 0;
            true
        } else {
            false
        }
    }
}

/// Stops once `patience` epochs have passed since the best metric.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<f64>,
    pub best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            best_epoch: 0,
        }
    }

    /// Records the metric for `epoch` (1-based). Returns (is new best, stop).
    pub fn observe(&mut self, epoch: usize, metric: f64) -> (bool, bool) {
        let improved = self.best.is_none_or(|b| metric > b);
        if improved {
            self.best = Some(metric);
            self.best_epoch = epoch;
        }
        (improved, epoch - self.best_epoch >= self.patience)
    }
}
