//! Per-subject concept fidelity, rule fidelity and rule discrimination.

use serde::{Deserialize, Serialize};

use super::stats::{mean, pearson_test, point_biserial, sample_sd};
use super::{EvalError, FoldReport, WindowRecord};
use crate::model::{N_CONCEPTS, N_RULES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConceptFidelity {
    /// Mean absolute point-biserial correlation over the concepts.
    pub phi: f64,
    pub r_pb: [f64; N_CONCEPTS],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleFidelity {
    /// Mean absolute point-biserial correlation over the rules.
    pub fidelity: f64,
    pub r_pb: [f64; N_RULES],
    /// Mean firing on fatigued windows minus mean firing on alert windows.
    pub discrimination: [f64; N_RULES],
}

fn check_both_classes(subject: &str, labels: &[u8]) -> Result<(), EvalError> {
    if labels.contains(&0) && labels.contains(&1) {
        Ok(())
    } else {
        Err(EvalError::SingleClassSubject(subject.to_string()))
    }
}

fn traced<'a>(
    subject: &str,
    records: &'a [WindowRecord],
) -> Result<Vec<(&'a super::ConceptTrace, u8)>, EvalError> {
    records
        .iter()
        .map(|r| r.trace.as_ref().map(|t| (t, r.label)).ok_or_else(|| EvalError::MissingTraces(subject.to_string())))
        .collect()
}

/// Concept fidelity of one subject's traced windows.
pub fn concept_fidelity(subject: &str, records: &[WindowRecord]) -> Result<ConceptFidelity, EvalError> {
    let rows = traced(subject, records)?;
    let labels: Vec<u8> = rows.iter().map(|(_, y)| *y).collect();
    check_both_classes(subject, &labels)?;
    let r_pb: [f64; N_CONCEPTS] = std::array::from_fn(|i| {
        let c: Vec<f64> = rows.iter().map(|(t, _)| t.c[i]).collect();
        point_biserial(&c, &labels)
    });
    let phi = r_pb.iter().map(|r| r.abs()).sum::<f64>() / N_CONCEPTS as f64;
    Ok(ConceptFidelity { phi, r_pb })
}

/// Rule fidelity and per-rule discrimination of one subject's traced windows.
pub fn rule_fidelity(subject: &str, records: &[WindowRecord]) -> Result<RuleFidelity, EvalError> {
    let rows = traced(subject, records)?;
    let labels: Vec<u8> = rows.iter().map(|(_, y)| *y).collect();
    check_both_classes(subject, &labels)?;
    let r_pb: [f64; N_RULES] = std::array::from_fn(|j| {
        let f: Vec<f64> = rows.iter().map(|(t, _)| t.f[j]).collect();
        point_biserial(&f, &labels)
    });
    let discrimination = std::array::from_fn(|j| {
        let by = |y: u8| mean(&rows.iter().filter(|(_, l)| *l == y).map(|(t, _)| t.f[j]).collect::<Vec<_>>());
        by(1) - by(0)
    });
    let fidelity = r_pb.iter().map(|r| r.abs()).sum::<f64>() / N_RULES as f64;
    Ok(RuleFidelity { fidelity, r_pb, discrimination })
}

/// Cohen's d of per-subject discriminations: mean over subjects divided by
/// the between-subject SD. `None` when the SD is zero.
pub fn cohens_d(values: &[f64]) -> Option<f64> {
    let sd = sample_sd(values);
    (sd > 0.0).then(|| mean(values) / sd)
}

/// Pearson correlation between per-subject fidelity and accuracy.
pub fn fidelity_accuracy_correlation(phi: &[f64], accuracy: &[f64]) -> Result<(f64, f64), EvalError> {
    if phi.len() != accuracy.len() {
        return Err(EvalError::LengthMismatch { a: phi.len(), b: accuracy.len() });
    }
    if phi.len() < 3 {
        return Err(EvalError::TooFewSubjects(phi.len()));
    }
    Ok(pearson_test(phi, accuracy))
}

/// One row of the per-subject fidelity table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectFidelity {
    pub subject: String,
    pub accuracy: f64,
    /// Seed-averaged concept fidelity.
    pub phi: f64,
    pub concept_r_pb: [f64; N_CONCEPTS],
    pub rule_fidelity: f64,
    pub rule_r_pb: [f64; N_RULES],
    pub discrimination: [f64; N_RULES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub subjects: Vec<SubjectFidelity>,
    pub mean_phi: f64,
    pub mean_rule_fidelity: f64,
    pub mean_discrimination: [f64; N_RULES],
    pub cohens_d: [Option<f64>; N_RULES],
    pub fidelity_accuracy_r: f64,
    pub fidelity_accuracy_p: f64,
}

fn average<const K: usize>(xs: &[[f64; K]]) -> [f64; K] {
    std::array::from_fn(|k| mean(&xs.iter().map(|x| x[k]).collect::<Vec<_>>()))
}

/// Fidelity audit over LOSO folds. Each seed's traces are scored
/// separately and the scores are averaged per subject, mirroring how fold
/// accuracy is seed-averaged.
pub fn fidelity_report(folds: &[FoldReport]) -> Result<FidelityReport, EvalError> {
    let mut subjects = Vec::with_capacity(folds.len());
    for fold in folds {
        let s = &fold.held_out_subject;
        let mut concept = Vec::new();
        let mut rule = Vec::new();
        for run in &fold.runs {
            concept.push(concept_fidelity(s, &run.records)?);
            rule.push(rule_fidelity(s, &run.records)?);
        }
        if concept.is_empty() {
            return Err(EvalError::MissingTraces(s.clone()));
        }
        subjects.push(SubjectFidelity {
            subject: s.clone(),
            accuracy: fold.accuracy,
            phi: mean(&concept.iter().map(|c| c.phi).collect::<Vec<_>>()),
            concept_r_pb: average(&concept.iter().map(|c| c.r_pb).collect::<Vec<_>>()),
            rule_fidelity: mean(&rule.iter().map(|r| r.fidelity).collect::<Vec<_>>()),
            rule_r_pb: average(&rule.iter().map(|r| r.r_pb).collect::<Vec<_>>()),
            discrimination: average(&rule.iter().map(|r| r.discrimination).collect::<Vec<_>>()),
        });
    }
    let phi: Vec<f64> = subjects.iter().map(|s| s.phi).collect();
    let acc: Vec<f64> = subjects.iter().map(|s| s.accuracy).collect();
    let (r, p) = if subjects.len() >= 3 { fidelity_accuracy_correlation(&phi, &acc)? } else { (0.0, 1.0) };
    let disc: Vec<[f64; N_RULES]> = subjects.iter().map(|s| s.discrimination).collect();
    Ok(FidelityReport {
        mean_phi: mean(&phi),
        mean_rule_fidelity: mean(&subjects.iter().map(|s| s.rule_fidelity).collect::<Vec<_>>()),
        mean_discrimination: average(&disc),
        cohens_d: std::array::from_fn(|j| cohens_d(&disc.iter().map(|d| d[j]).collect::<Vec<_>>())),
        fidelity_accuracy_r: r,
        fidelity_accuracy_p: p,
        subjects,
    })
}
