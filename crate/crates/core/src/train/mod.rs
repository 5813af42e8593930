//! Composite loss, reverse-mode gradients and the optimization loop.

mod loss;
mod optim;

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureWindow;
use crate::model::{forward, DropoutMasks, ForwardTrace, ModelConfig, ModelError, ModelParams, N_CONCEPTS};

pub use loss::{
    alpha_entropy, backward, backward_window, bce_with_logit, compute_loss, diversity, LossBreakdown, LossWeights,
    LAMBDA_DIV, LAMBDA_SPARSE,
};
pub use optim::{clip_global_norm, cosine_lr, global_norm, AdamW, AdamWConfig, EarlyStopping, StopDecision};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{traces} traces for {labels} labels")]
    MissingTrace { traces: usize, labels: usize },
    #[error("training windows contain a single class")]
    SingleClassTraining,
    #[error("no training windows")]
    EmptyTraining,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub lr_floor: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub grad_clip: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Fraction of training data held out for early stopping.
    pub val_fraction: f64,
    /// Split validation by subject when at least this many subjects train.
    pub min_subjects_for_subject_split: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            lr_floor: 0.0,
            weight_decay: 1e-3,
            batch_size: 32,
            max_epochs: 150,
            patience: 20,
            grad_clip: 1.0,
            lambda1: LAMBDA_DIV,
            lambda2: LAMBDA_SPARSE,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            val_fraction: 0.2,
            min_subjects_for_subject_split: 4,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [self.lr, self.weight_decay, self.grad_clip, self.adam_eps];
        if positive.iter().any(|v| !(*v > 0.0))
            || self.batch_size < 2
            || self.max_epochs == 0
            || self.patience == 0
            || self.patience >= self.max_epochs
            || !(0.0..1.0).contains(&self.val_fraction)
            || self.lambda1 < 0.0
            || self.lambda2 < 0.0
        {
            return Err(TrainError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights { lambda1: self.lambda1, lambda2: self.lambda2 }
    }

    fn adam(&self) -> AdamWConfig {
        AdamWConfig { beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps, weight_decay: self.weight_decay }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_ce: f64,
    pub train_diversity: f64,
    pub train_sparsity: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Largest |dL/d tau_hat| seen in any step of the epoch.
    pub tau_grad_max: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Deterministic generator for a (seed, stream) pair.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn participants(windows: &[FeatureWindow]) -> Vec<String> {
    windows.iter().map(|w| w.participant_id.clone()).collect::<BTreeSet<_>>().into_iter().collect()
}

/// Hold out validation data for early stopping: whole subjects when enough
/// subjects are available, otherwise a label-stratified share of windows.
pub fn split_validation(
    windows: &[FeatureWindow],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> (Vec<FeatureWindow>, Vec<FeatureWindow>) {
    if cfg.val_fraction <= 0.0 {
        return (windows.to_vec(), Vec::new());
    }
    let mut subjects = participants(windows);
    if subjects.len() >= cfg.min_subjects_for_subject_split {
        subjects.shuffle(rng);
        let k = ((subjects.len() as f64 * cfg.val_fraction).round() as usize).max(1);
        let held: BTreeSet<&String> = subjects[..k].iter().collect();
        let (val, train): (Vec<FeatureWindow>, Vec<FeatureWindow>) =
            windows.iter().cloned().partition(|w| held.contains(&w.participant_id));
        return (train, val);
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for label in [0u8, 1] {
        let mut idx: Vec<usize> = (0..windows.len()).filter(|&i| windows[i].label == label).collect();
        idx.shuffle(rng);
        let k = (idx.len() as f64 * cfg.val_fraction).round() as usize;
        let held: BTreeSet<usize> = idx[..k].iter().copied().collect();
        for &i in &idx {
            if held.contains(&i) {
                val.push(windows[i].clone());
            } else {
                train.push(windows[i].clone());
            }
        }
    }
    let order = |v: &mut Vec<FeatureWindow>| {
        v.sort_by(|a, b| (&a.participant_id, a.window_index).cmp(&(&b.participant_id, b.window_index)))
    };
    order(&mut train);
    order(&mut val);
    (train, val)
}

fn accuracy(traces: &[ForwardTrace], labels: &[u8]) -> f64 {
    if traces.is_empty() {
        return 0.0;
    }
    traces.iter().zip(labels).filter(|(t, y)| t.predicted() == **y).count() as f64 / traces.len() as f64
}

/// Loss and accuracy of inference-mode predictions.
pub fn evaluate(
    params: &ModelParams,
    cfg: &ModelConfig,
    windows: &[FeatureWindow],
    weights: &LossWeights,
) -> Result<(LossBreakdown, f64), TrainError> {
    let traces: Vec<ForwardTrace> =
        windows.iter().map(|w| forward(params, cfg, &w.features, None, [false; N_CONCEPTS])).collect::<Result<_, _>>()?;
    let labels: Vec<u8> = windows.iter().map(|w| w.label).collect();
    Ok((compute_loss(&traces, &labels, weights)?, accuracy(&traces, &labels)))
}

/// Train from fresh parameters drawn from `rng`.
///
/// Runs up to `max_epochs` epochs of shuffled mini-batches (a trailing
/// batch with fewer than two windows is skipped), monitors the composite
/// validation loss, and returns the parameters of the best validation epoch.
/// With no validation windows the training loss is monitored instead.
pub fn train_model(
    train: &[FeatureWindow],
    val: &[FeatureWindow],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyTraining);
    }
    let labels: BTreeSet<u8> = train.iter().map(|w| w.label).collect();
    if labels.len() < 2 {
        return Err(TrainError::SingleClassTraining);
    }
    let weights = cfg.loss_weights();
    let frozen: &[&str] = if model_cfg.freeze_tau { &["logic.tau_hat"] } else { &[] };

    let mut params = ModelParams::init(model_cfg, rng);
    let mut opt = AdamW::new(cfg.adam());
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = params.clone();
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let lr = cosine_lr(cfg.lr, cfg.lr_floor, epoch - 1, cfg.max_epochs);
        order.shuffle(rng);
        let mut sums = [0.0; 4];
        let mut batches = 0usize;
        let mut tau_grad_max: f64 = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let mut traces = Vec::with_capacity(chunk.len());
            let mut ys = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let masks = DropoutMasks::sample(model_cfg.dropout, rng);
                traces.push(forward(&params, model_cfg, &train[i].features, Some(&masks), [false; N_CONCEPTS])?);
                ys.push(train[i].label);
            }
            let (loss, mut grads) = backward(&params, model_cfg, &traces, &ys, &weights)?;
            tau_grad_max = grads.tau_hat.iter().fold(tau_grad_max, |m, g| m.max(g.abs()));
            clip_global_norm(&mut grads, cfg.grad_clip);
            opt.step(&mut params, &grads, lr, frozen);
            if !params.is_finite() {
                return Err(ModelError::NonFiniteActivation("parameters after update").into());
            }
            sums[0] += loss.total;
            sums[1] += loss.ce;
            sums[2] += loss.diversity;
            sums[3] += loss.sparsity;
            batches += 1;
        }
        let nb = batches.max(1) as f64;
        let (monitor, val_acc) = if val.is_empty() {
            let (l, a) = evaluate(&params, model_cfg, train, &weights)?;
            (l.total, a)
        } else {
            let (l, a) = evaluate(&params, model_cfg, val, &weights)?;
            (l.total, a)
        };
        log.push(EpochLog {
            epoch,
            lr,
            train_loss: sums[0] / nb,
            train_ce: sums[1] / nb,
            train_diversity: sums[2] / nb,
            train_sparsity: sums[3] / nb,
            val_loss: monitor,
            val_acc,
            tau_grad_max,
        });
        match stopper.update(epoch, monitor) {
            StopDecision::Improved => best = params.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    let epochs_run = log.len();
    Ok(TrainOutcome { params: best, log, best_epoch: stopper.best_epoch, epochs_run })
}

/// Split off validation data and train, all driven by one generator.
pub fn fit(
    windows: &[FeatureWindow],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome, TrainError> {
    let (train, val) = split_validation(windows, cfg, rng);
    train_model(&train, &val, model_cfg, cfg, rng)
}

pub fn write_training_log(path: &Path, log: &[EpochLog]) -> Result<(), TrainError> {
    let io = |source| TrainError::Io { path: path.to_path_buf(), source };
    let mut out = String::from("epoch,lr,train_loss,train_ce,train_diversity,train_sparsity,val_loss,val_acc,tau_grad_max\n");
    for r in log {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.epoch, r.lr, r.train_loss, r.train_ce, r.train_diversity, r.train_sparsity, r.val_loss, r.val_acc, r.tau_grad_max
        ));
    }
    std::fs::write(path, out).map_err(io)
}
