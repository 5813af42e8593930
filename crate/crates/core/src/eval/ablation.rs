//! Ablation suites: normalization strategy, concept knockout, operator
//! family and learned versus fixed thresholds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{mean, paired_comparison, summarize, WilcoxonResult};
use super::{prepare_fold, run_loso, score, EvalError, LosoConfig, LosoReport, NesyClassifier};
use crate::features::FeatureWindow;
use crate::model::{OperatorFamily, N_CONCEPTS};
use crate::normalize::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Normalization,
    Knockout,
    Operators,
    Threshold,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Normalization, Suite::Knockout, Suite::Operators, Suite::Threshold];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Normalization => "normalization",
            Suite::Knockout => "knockout",
            Suite::Operators => "operators",
            Suite::Threshold => "threshold",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL.into_iter().find(|v| v.as_str() == s).ok_or_else(|| format!("unknown suite '{s}'"))
    }
}

/// Which suites and variants to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationSelection {
    pub suites: Vec<Suite>,
    pub strategies: Vec<Strategy>,
    pub operators: Vec<OperatorFamily>,
}

impl Default for AblationSelection {
    fn default() -> Self {
        Self { suites: Suite::ALL.to_vec(), strategies: Strategy::ALL.to_vec(), operators: OperatorFamily::ALL.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub suite: Suite,
    pub variant: String,
    pub is_base: bool,
    pub accuracy: f64,
    pub sd: f64,
    /// Accuracy minus base accuracy, in percentage points.
    pub delta_pp: f64,
    pub fold_accuracy: Vec<f64>,
    /// Paired test against the base folds, when enough folds differ.
    pub wilcoxon: Option<WilcoxonResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub base_accuracy: f64,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn suite(&self, suite: Suite) -> impl Iterator<Item = &AblationRow> {
        self.rows.iter().filter(move |r| r.suite == suite)
    }
}

fn row(suite: Suite, variant: String, is_base: bool, folds: Vec<f64>, base: &[f64]) -> AblationRow {
    let s = summarize(&folds, 0.95);
    let wilcoxon = if is_base { None } else { paired_comparison(&folds, base).ok() };
    AblationRow {
        suite,
        variant,
        is_base,
        accuracy: s.mean,
        sd: s.sd,
        delta_pp: 100.0 * (s.mean - mean(base)),
        fold_accuracy: folds,
        wilcoxon,
    }
}

/// Seed-averaged per-fold accuracy of the base run's trained models with
/// the listed concepts zeroed at inference.
pub fn knockout_accuracy(
    windows: &[FeatureWindow],
    base: &LosoReport,
    classifier: &NesyClassifier,
    knockout: [bool; N_CONCEPTS],
) -> Result<Vec<f64>, EvalError> {
    let cfg = &base.config;
    base.folds
        .par_iter()
        .map(|fold| {
            let data = prepare_fold(windows, &fold.held_out_subject, cfg.strategy, &cfg.normalize)?;
            let accs = fold
                .runs
                .iter()
                .map(|run| {
                    let params = run.params.as_ref().ok_or_else(|| EvalError::MissingTraces(fold.held_out_subject.clone()))?;
                    let records = NesyClassifier::predict(params, &classifier.model, &data.test, knockout)?;
                    Ok(score(&records, cfg.exclude_calibration).0)
                })
                .collect::<Result<Vec<f64>, EvalError>>()?;
            Ok(mean(&accs))
        })
        .collect()
}

/// Run the selected suites around `base`. `base_run` is the main LOSO run
/// of the base configuration; it is computed when absent. Every suite's
/// base row reuses it.
pub fn run_ablations(
    windows: &[FeatureWindow],
    base: &NesyClassifier,
    cfg: &LosoConfig,
    selection: &AblationSelection,
    base_run: Option<LosoReport>,
) -> Result<(LosoReport, AblationReport), EvalError> {
    let base_run = match base_run {
        Some(r) => r,
        None => run_loso(windows, base, cfg)?,
    };
    let base_folds = base_run.fold_accuracies();
    let mut rows = Vec::new();
    let tagged = |tag: String| LosoConfig { ablation_tag: tag, ..cfg.clone() };

    for &suite in &selection.suites {
        match suite {
            Suite::Normalization => {
                for &strategy in &selection.strategies {
                    let folds = if strategy == cfg.strategy {
                        base_folds.clone()
                    } else {
                        let c = LosoConfig { strategy, ..tagged(format!("normalization:{}", strategy.as_str())) };
                        run_loso(windows, base, &c)?.fold_accuracies()
                    };
                    rows.push(row(suite, strategy.as_str().into(), strategy == cfg.strategy, folds, &base_folds));
                }
            }
            Suite::Knockout => {
                rows.push(row(suite, "none".into(), true, base_folds.clone(), &base_folds));
                for i in 0..N_CONCEPTS {
                    let mut mask = [false; N_CONCEPTS];
                    mask[i] = true;
                    let folds = knockout_accuracy(windows, &base_run, base, mask)?;
                    rows.push(row(suite, format!("C{}", i + 1), false, folds, &base_folds));
                }
            }
            Suite::Operators => {
                for &family in &selection.operators {
                    let is_base = family == base.model.family && !base.model.no_logic;
                    let folds = if is_base {
                        base_folds.clone()
                    } else {
                        let c = NesyClassifier {
                            model: crate::model::ModelConfig { family, no_logic: false, ..base.model.clone() },
                            ..base.clone()
                        };
                        run_loso(windows, &c, &tagged(format!("operators:{}", family.as_str())))?.fold_accuracies()
                    };
                    rows.push(row(suite, family.as_str().into(), is_base, folds, &base_folds));
                }
            }
            Suite::Threshold => {
                for freeze in [false, true] {
                    let variant = if freeze { "fixed" } else { "learned" };
                    let is_base = freeze == base.model.freeze_tau;
                    let folds = if is_base {
                        base_folds.clone()
                    } else {
                        let c = NesyClassifier {
                            model: crate::model::ModelConfig { freeze_tau: freeze, ..base.model.clone() },
                            ..base.clone()
                        };
                        run_loso(windows, &c, &tagged(format!("threshold:{variant}")))?.fold_accuracies()
                    };
                    rows.push(row(suite, variant.into(), is_base, folds, &base_folds));
                }
            }
        }
    }
    let report = AblationReport { base_accuracy: mean(&base_folds), rows };
    Ok((base_run, report))
}
