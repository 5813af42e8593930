//! AdamW, global-norm clipping, cosine annealing and early stopping.

use serde::{Deserialize, Serialize};

use crate::model::ModelParams;

/// Learning rate for 0-based `step` of `total` under cosine annealing from
/// `base` down to `floor`.
pub fn cosine_lr(base: f64, floor: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    let progress = (step.min(total) as f64) / total as f64;
    floor + 0.5 * (base - floor) * (1.0 + (std::f64::consts::PI * progress).cos())
}

pub fn global_norm(grads: &ModelParams) -> f64 {
    grads.slots().iter().flat_map(|s| s.data.iter()).map(|v| v * v).sum::<f64>().sqrt()
}

/// Scale `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut ModelParams, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for slot in grads.slots_mut() {
            slot.data.iter_mut().for_each(|v| *v *= scale);
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-3 }
    }
}

/// AdamW with decoupled weight decay on the tensors flagged for decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub cfg: AdamWConfig,
    m: ModelParams,
    v: ModelParams,
    t: i32,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig) -> Self {
        Self { cfg, m: ModelParams::zeros(), v: ModelParams::zeros(), t: 0 }
    }

    /// One update. Tensors named in `frozen` are left untouched.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64, frozen: &[&str]) {
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        let gs = grads.slots();
        let ms = self.m.slots_mut();
        let vs = self.v.slots_mut();
        for (((p, g), m), v) in params.slots_mut().into_iter().zip(gs).zip(ms).zip(vs) {
            if frozen.contains(&p.name) {
                continue;
            }
            for k in 0..p.data.len() {
                if p.decay {
                    p.data[k] *= 1.0 - lr * c.weight_decay;
                }
                let gk = g.data[k];
                m.data[k] = c.beta1 * m.data[k] + (1.0 - c.beta1) * gk;
                v.data[k] = c.beta2 * v.data[k] + (1.0 - c.beta2) * gk * gk;
                let mhat = m.data[k] / bc1;
                let vhat = v.data[k] / bc2;
                p.data[k] -= lr * mhat / (vhat.sqrt() + c.eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience-based early stopping on a monitored loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, best_epoch: 0, bad_epochs: 0 }
    }

    pub fn update(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.bad_epochs = 0;
            return StopDecision::Improved;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}
