//! Leave-one-subject-out evaluation, fidelity audit, statistics and ablations.

mod ablation;
mod fidelity;
mod report;
pub mod stats;

use std::collections::BTreeSet;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::Phase;
use crate::features::FeatureWindow;
use crate::model::{forward, ForwardTrace, ModelConfig, ModelError, ModelParams, N_CONCEPTS, N_RULES};
use crate::normalize::{make_strategy, NormalizeError, NormalizeOptions, Normalizer, Strategy};
use crate::train::{fit, rng_for, EpochLog, TrainConfig, TrainError};

pub use ablation::{knockout_accuracy, run_ablations, AblationReport, AblationRow, AblationSelection, Suite};
pub use fidelity::{
    cohens_d, concept_fidelity, fidelity_accuracy_correlation, fidelity_report, rule_fidelity, ConceptFidelity,
    FidelityReport, RuleFidelity, SubjectFidelity,
};
pub use report::{
    read_traces, write_ablation_csv, write_audit_csv, write_fidelity_csv, write_folds_csv, write_traces, TraceSet,
    AUDIT_HEADER,
};
pub use stats::{paired_comparison, pearson, pearson_test, point_biserial, summarize, wilcoxon_signed_rank, Summary};

pub const DEFAULT_SEEDS: [u64; 3] = [42, 123, 456];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least {needed} subjects, found {found}")]
    NotEnoughSubjects { found: usize, needed: usize },
    #[error("need at least 3 subjects for a correlation, found {0}")]
    TooFewSubjects(usize),
    #[error("subject {0} has a single class")]
    SingleClassSubject(String),
    #[error("subject {0} has no concept traces")]
    MissingTraces(String),
    #[error("unknown subject {0}")]
    UnknownSubject(String),
    #[error("all paired differences are zero")]
    AllZeroDifferences,
    #[error("need at least 5 non-zero paired differences, found {0}")]
    TooFewDifferences(usize),
    #[error("paired samples differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("no seeds given")]
    NoSeeds,
    #[error("leakage in fold {subject}: {detail}")]
    Leakage { subject: String, detail: String },
    #[error("fold {subject}: {source}")]
    Fold { subject: String, source: Box<EvalError> },
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {detail}")]
    Io { path: std::path::PathBuf, detail: String },
}

impl EvalError {
    /// The innermost error, looking through fold wrappers.
    pub fn root(&self) -> &EvalError {
        match self {
            EvalError::Fold { source, .. } => source.root(),
            e => e,
        }
    }
}

/// Concept-level trace of one evaluated window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConceptTrace {
    pub c: [f64; N_CONCEPTS],
    pub c_tilde: [f64; N_CONCEPTS],
    pub f: [f64; N_RULES],
}

impl From<&ForwardTrace> for ConceptTrace {
    fn from(t: &ForwardTrace) -> Self {
        Self { c: t.c, c_tilde: t.c_tilde, f: t.f }
    }
}

/// Prediction for one held-out window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub window_index: usize,
    pub label: u8,
    /// Part of the subject's pre-task alert segment.
    pub calibration: bool,
    pub y_hat: f64,
    pub trace: Option<ConceptTrace>,
}

impl WindowRecord {
    /// Class with ties at 0.5 going to fatigued.
    pub fn predicted(&self) -> u8 {
        u8::from(self.y_hat >= 0.5)
    }
}

/// Output of fitting one classifier on one fold with one seed.
#[derive(Debug, Clone, Default)]
pub struct FittedRun {
    pub records: Vec<WindowRecord>,
    pub params: Option<ModelParams>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// A classifier the LOSO harness can train and evaluate per fold.
pub trait FoldClassifier: Sync {
    /// Short identifier used in reports.
    fn name(&self) -> String;
    /// Train on normalized `train` windows and predict every `test` window.
    fn fit_predict(
        &self,
        train: &[FeatureWindow],
        test: &[FeatureWindow],
        rng: &mut ChaCha8Rng,
    ) -> Result<FittedRun, EvalError>;
}

/// The concept-bottleneck model with its rule layer (or linear head).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NesyClassifier {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl NesyClassifier {
    pub fn predict(
        params: &ModelParams,
        cfg: &ModelConfig,
        test: &[FeatureWindow],
        knockout: [bool; N_CONCEPTS],
    ) -> Result<Vec<WindowRecord>, EvalError> {
        test.iter()
            .map(|w| {
                let t = forward(params, cfg, &w.features, None, knockout)?;
                Ok(WindowRecord {
                    window_index: w.window_index,
                    label: w.label,
                    calibration: w.phase == Phase::AlertBaseline,
                    y_hat: t.y_hat,
                    trace: Some(ConceptTrace::from(&t)),
                })
            })
            .collect()
    }
}

impl FoldClassifier for NesyClassifier {
    fn name(&self) -> String {
        if self.model.no_logic {
            "nesy-no-logic".into()
        } else {
            format!("nesy-{}", self.model.family.as_str())
        }
    }

    fn fit_predict(
        &self,
        train: &[FeatureWindow],
        test: &[FeatureWindow],
        rng: &mut ChaCha8Rng,
    ) -> Result<FittedRun, EvalError> {
        let out = fit(train, &self.model, &self.train, rng)?;
        let records = Self::predict(&out.params, &self.model, test, [false; N_CONCEPTS])?;
        Ok(FittedRun { records, best_epoch: out.best_epoch, params: Some(out.params), log: out.log })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LosoConfig {
    pub strategy: Strategy,
    pub normalize: NormalizeOptions,
    pub seeds: Vec<u64>,
    /// Score accuracy on post-task windows only.
    pub exclude_calibration: bool,
    pub ablation_tag: String,
    pub ci_level: f64,
}

impl Default for LosoConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::ParticipantAware,
            normalize: NormalizeOptions::default(),
            seeds: DEFAULT_SEEDS.to_vec(),
            exclude_calibration: false,
            ablation_tag: "base".into(),
            ci_level: 0.95,
        }
    }
}

/// One seed's result on one fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub accuracy: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    #[serde(skip)]
    pub records: Vec<WindowRecord>,
    #[serde(skip)]
    pub params: Option<ModelParams>,
    #[serde(skip)]
    pub log: Vec<EpochLog>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldReport {
    pub held_out_subject: String,
    pub strategy: Strategy,
    pub classifier: String,
    pub ablation_tag: String,
    pub n_train_windows: usize,
    pub n_test_windows: usize,
    pub n_scored_windows: usize,
    pub runs: Vec<SeedRun>,
    /// Mean of the per-seed accuracies.
    pub accuracy: f64,
}

impl FoldReport {
    pub fn seed_accuracies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.accuracy).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LosoReport {
    pub classifier: String,
    pub config: LosoConfig,
    pub folds: Vec<FoldReport>,
    /// Across-fold summary of seed-averaged accuracies.
    pub summary: Summary,
}

impl LosoReport {
    pub fn fold_accuracies(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.accuracy).collect()
    }

    pub fn fold(&self, subject: &str) -> Option<&FoldReport> {
        self.folds.iter().find(|f| f.held_out_subject == subject)
    }
}

/// Normalized data of one fold.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub subject: String,
    pub train: Vec<FeatureWindow>,
    pub test: Vec<FeatureWindow>,
    pub normalizer: Normalizer,
}

pub fn subjects(windows: &[FeatureWindow]) -> Vec<String> {
    windows.iter().map(|w| w.participant_id.clone()).collect::<BTreeSet<_>>().into_iter().collect()
}

/// Split, normalize and leakage-check the fold holding out `subject`.
pub fn prepare_fold(
    windows: &[FeatureWindow],
    subject: &str,
    strategy: Strategy,
    opts: &NormalizeOptions,
) -> Result<FoldData, EvalError> {
    let (held, train): (Vec<FeatureWindow>, Vec<FeatureWindow>) =
        windows.iter().cloned().partition(|w| w.participant_id == subject);
    if held.is_empty() {
        return Err(EvalError::UnknownSubject(subject.to_string()));
    }
    let normalizer = make_strategy(strategy, &train, Some(subject), Some(&held), opts)?;
    let leak = |detail: String| EvalError::Leakage { subject: subject.to_string(), detail };
    if let Some(w) = train.iter().find(|w| w.participant_id == subject) {
        return Err(leak(format!("training window {}#{}", w.participant_id, w.window_index)));
    }
    normalizer.check_leakage(subject).map_err(|e| leak(e.to_string()))?;
    let train = normalizer.apply_all(&train)?;
    let test = normalizer.apply_all(&held)?;
    Ok(FoldData { subject: subject.to_string(), train, test, normalizer })
}

fn score(records: &[WindowRecord], exclude_calibration: bool) -> (f64, usize) {
    let scored: Vec<&WindowRecord> = records.iter().filter(|r| !(exclude_calibration && r.calibration)).collect();
    if scored.is_empty() {
        return (0.0, 0);
    }
    let correct = scored.iter().filter(|r| r.predicted() == r.label).count();
    (correct as f64 / scored.len() as f64, scored.len())
}

/// Leave-one-subject-out evaluation over every subject in `windows`.
///
/// Each (fold, seed) job draws from its own generator keyed by the seed
/// with the fold's position as stream, so results do not depend on
/// scheduling. Fold accuracy is the mean over seeds; the summary is taken
/// across folds.
pub fn run_loso(
    windows: &[FeatureWindow],
    classifier: &dyn FoldClassifier,
    cfg: &LosoConfig,
) -> Result<LosoReport, EvalError> {
    if cfg.seeds.is_empty() {
        return Err(EvalError::NoSeeds);
    }
    let ids = subjects(windows);
    if ids.len() < 2 {
        return Err(EvalError::NotEnoughSubjects { found: ids.len(), needed: 2 });
    }
    let wrap = |subject: &str| {
        let subject = subject.to_string();
        move |e: EvalError| EvalError::Fold { subject, source: Box::new(e) }
    };
    let data: Vec<FoldData> = ids
        .par_iter()
        .map(|s| prepare_fold(windows, s, cfg.strategy, &cfg.normalize).map_err(wrap(s)))
        .collect::<Result<_, _>>()?;

    let jobs: Vec<(usize, u64)> = (0..data.len()).flat_map(|f| cfg.seeds.iter().map(move |&s| (f, s))).collect();
    let runs: Vec<SeedRun> = jobs
        .par_iter()
        .map(|&(f, seed)| {
            let d = &data[f];
            log::debug!("fold {} seed {seed}", d.subject);
            let mut rng = rng_for(seed, f as u64);
            let run = classifier.fit_predict(&d.train, &d.test, &mut rng).map_err(wrap(&d.subject))?;
            let (accuracy, _) = score(&run.records, cfg.exclude_calibration);
            Ok(SeedRun {
                seed,
                accuracy,
                best_epoch: run.best_epoch,
                epochs_run: run.log.len(),
                records: run.records,
                params: run.params,
                log: run.log,
            })
        })
        .collect::<Result<_, EvalError>>()?;

    let mut runs = runs.into_iter();
    let name = classifier.name();
    let folds: Vec<FoldReport> = data
        .iter()
        .map(|d| {
            let fold_runs: Vec<SeedRun> = runs.by_ref().take(cfg.seeds.len()).collect();
            let accuracy = stats::mean(&fold_runs.iter().map(|r| r.accuracy).collect::<Vec<_>>());
            let n_scored = score(&fold_runs[0].records, cfg.exclude_calibration).1;
            FoldReport {
                held_out_subject: d.subject.clone(),
                strategy: cfg.strategy,
                classifier: name.clone(),
                ablation_tag: cfg.ablation_tag.clone(),
                n_train_windows: d.train.len(),
                n_test_windows: d.test.len(),
                n_scored_windows: n_scored,
                runs: fold_runs,
                accuracy,
            }
        })
        .collect();
    let summary = summarize(&folds.iter().map(|f| f.accuracy).collect::<Vec<_>>(), cfg.ci_level);
    Ok(LosoReport { classifier: name, config: cfg.clone(), folds, summary })
}
