//! Feature normalization strategies and their leakage bookkeeping.
//!
//! Every statistics object records which windows it was computed from, so a
//! fold can prove that no held-out fatigued window touched a normalizer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureWindow, N_FEATURES};

pub const EPSILON: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum NormalizeError {
    #[error("participant {participant}: {n} alert windows, need at least 2")]
    InsufficientAlertSamples { participant: String, n: usize },
    #[error("expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("participant {0}: no calibration windows supplied")]
    MissingCalibrationData(String),
    #[error("no statistics for participant {0}")]
    UnknownParticipant(String),
    #[error("cannot fit cohort statistics on an empty window set")]
    EmptyCohort,
    #[error("leakage: {0}")]
    Leakage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Global,
    ParticipantAware,
    NoCalibration,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Global, Strategy::ParticipantAware, Strategy::NoCalibration];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Global => "global",
            Strategy::ParticipantAware => "participant_aware",
            Strategy::NoCalibration => "no_calibration",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "global" => Ok(Strategy::Global),
            "participant" | "participant_aware" => Ok(Strategy::ParticipantAware),
            "no_calibration" | "train_only" => Ok(Strategy::NoCalibration),
            other => Err(format!("unknown normalization strategy `{other}`")),
        }
    }
}

/// Identity of a window that fed a statistic.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowRef {
    pub participant_id: String,
    pub window_index: usize,
    pub label: u8,
}

impl From<&FeatureWindow> for WindowRef {
    fn from(w: &FeatureWindow) -> Self {
        Self { participant_id: w.participant_id.clone(), window_index: w.window_index, label: w.label }
    }
}

/// Per-participant statistics over alert windows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub participant_id: String,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub n_alert: usize,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<WindowRef>,
}

/// Statistics pooled over a set of training windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortStats {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub n: usize,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<WindowRef>,
}

fn check_dim(v: &[f64]) -> Result<(), NormalizeError> {
    if v.len() != N_FEATURES {
        return Err(NormalizeError::DimensionMismatch { expected: N_FEATURES, found: v.len() });
    }
    Ok(())
}

/// Column means and population SDs.
fn moments(rows: &[&FeatureWindow]) -> Result<(Vec<f64>, Vec<f64>), NormalizeError> {
    let n = rows.len() as f64;
    let mut mu = vec![0.0; N_FEATURES];
    for w in rows {
        check_dim(&w.features)?;
        for (m, x) in mu.iter_mut().zip(&w.features) {
            *m += x;
        }
    }
    mu.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; N_FEATURES];
    for w in rows {
        for ((v, x), m) in var.iter_mut().zip(&w.features).zip(&mu) {
            *v += (x - m) * (x - m);
        }
    }
    Ok((mu, var.into_iter().map(|v| (v / n).sqrt()).collect()))
}

fn z_score(x: &[f64], mu: &[f64], sigma: &[f64], eps: f64) -> Vec<f64> {
    x.iter().zip(mu).zip(sigma).map(|((x, m), s)| (x - m) / (s + eps)).collect()
}

/// Fit on the alert windows of one participant. Windows of other labels (and
/// other participants) are ignored.
pub fn fit_participant_baseline(
    participant_id: &str,
    windows: &[FeatureWindow],
    epsilon: f64,
) -> Result<BaselineStats, NormalizeError> {
    let alert: Vec<&FeatureWindow> =
        windows.iter().filter(|w| w.participant_id == participant_id && w.label == 0).collect();
    if alert.len() < 2 {
        return Err(NormalizeError::InsufficientAlertSamples { participant: participant_id.to_string(), n: alert.len() });
    }
    let (mu, sigma) = moments(&alert)?;
    Ok(BaselineStats {
        participant_id: participant_id.to_string(),
        mu,
        sigma,
        n_alert: alert.len(),
        epsilon,
        sources: alert.iter().map(|w| WindowRef::from(*w)).collect(),
    })
}

pub fn fit_cohort(windows: &[FeatureWindow], epsilon: f64) -> Result<CohortStats, NormalizeError> {
    if windows.is_empty() {
        return Err(NormalizeError::EmptyCohort);
    }
    let rows: Vec<&FeatureWindow> = windows.iter().collect();
    let (mu, sigma) = moments(&rows)?;
    Ok(CohortStats { mu, sigma, n: rows.len(), epsilon, sources: rows.iter().map(|w| WindowRef::from(*w)).collect() })
}

impl BaselineStats {
    pub fn apply(&self, w: &FeatureWindow) -> Result<FeatureWindow, NormalizeError> {
        check_dim(&w.features)?;
        Ok(FeatureWindow { features: z_score(&w.features, &self.mu, &self.sigma, self.epsilon), ..w.clone() })
    }
}

impl CohortStats {
    pub fn apply(&self, w: &FeatureWindow) -> Result<FeatureWindow, NormalizeError> {
        check_dim(&w.features)?;
        Ok(FeatureWindow { features: z_score(&w.features, &self.mu, &self.sigma, self.epsilon), ..w.clone() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizeOptions {
    pub epsilon: f64,
    /// NoCalibration variant: normalize training participants with the pooled
    /// cohort statistics too, instead of their own baselines.
    pub no_calibration_pooled_train: bool,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        Self { epsilon: EPSILON, no_calibration_pooled_train: false }
    }
}

/// Which statistics a given participant is normalized with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsSource {
    Own,
    Cohort,
}

/// Per-fold normalizer produced by [`make_strategy`].
#[derive(Debug, Clone, Serialize)]
pub struct Normalizer {
    pub strategy: Strategy,
    pub cohort: Option<CohortStats>,
    pub baselines: BTreeMap<String, BaselineStats>,
    pub test_participant: Option<String>,
    pooled_train: bool,
}

impl Normalizer {
    pub fn source_for(&self, participant: &str) -> StatsSource {
        let is_test = self.test_participant.as_deref() == Some(participant);
        match self.strategy {
            Strategy::Global => StatsSource::Cohort,
            Strategy::ParticipantAware => StatsSource::Own,
            Strategy::NoCalibration if is_test || self.pooled_train => StatsSource::Cohort,
            Strategy::NoCalibration => StatsSource::Own,
        }
    }

    pub fn apply(&self, w: &FeatureWindow) -> Result<FeatureWindow, NormalizeError> {
        match self.source_for(&w.participant_id) {
            StatsSource::Cohort => self.cohort.as_ref().expect("cohort stats fitted for this strategy").apply(w),
            StatsSource::Own => self
                .baselines
                .get(&w.participant_id)
                .ok_or_else(|| NormalizeError::UnknownParticipant(w.participant_id.clone()))?
                .apply(w),
        }
    }

    pub fn apply_all(&self, windows: &[FeatureWindow]) -> Result<Vec<FeatureWindow>, NormalizeError> {
        windows.iter().map(|w| self.apply(w)).collect()
    }

    /// Every window that fed any statistic held by this normalizer.
    pub fn provenance(&self) -> impl Iterator<Item = &WindowRef> {
        self.cohort.iter().flat_map(|c| c.sources.iter()).chain(self.baselines.values().flat_map(|b| b.sources.iter()))
    }

    /// Reject any statistic built from a fatigued window of the held-out
    /// participant, and any pooled statistic that saw the held-out participant.
    pub fn check_leakage(&self, test_participant: &str) -> Result<(), NormalizeError> {
        if let Some(c) = &self.cohort {
            if let Some(w) = c.sources.iter().find(|w| w.participant_id == test_participant) {
                return Err(NormalizeError::Leakage(format!(
                    "cohort statistics include held-out window {}#{}",
                    w.participant_id, w.window_index
                )));
            }
        }
        if let Some(w) = self.provenance().find(|w| w.participant_id == test_participant && w.label != 0) {
            return Err(NormalizeError::Leakage(format!(
                "statistics include held-out fatigued window {}#{}",
                w.participant_id, w.window_index
            )));
        }
        Ok(())
    }
}

fn participants(windows: &[FeatureWindow]) -> Vec<String> {
    let mut ids: Vec<String> = windows.iter().map(|w| w.participant_id.clone()).collect();
    ids.sort();
    ids.dedup();
    ids
}

/// Build the normalizer for one fold.
///
/// `train` holds every training window. `calibration` holds held-out windows
/// that may be used for statistics; only its alert windows are read.
pub fn make_strategy(
    kind: Strategy,
    train: &[FeatureWindow],
    test_participant: Option<&str>,
    calibration: Option<&[FeatureWindow]>,
    opts: &NormalizeOptions,
) -> Result<Normalizer, NormalizeError> {
    let eps = opts.epsilon;
    let mut baselines = BTreeMap::new();
    let mut cohort = None;
    let fit_train_baselines = |baselines: &mut BTreeMap<String, BaselineStats>| -> Result<(), NormalizeError> {
        for pid in participants(train) {
            baselines.insert(pid.clone(), fit_participant_baseline(&pid, train, eps)?);
        }
        Ok(())
    };
    match kind {
        Strategy::Global => cohort = Some(fit_cohort(train, eps)?),
        Strategy::ParticipantAware => {
            fit_train_baselines(&mut baselines)?;
            if let Some(pid) = test_participant {
                let cal = calibration.ok_or_else(|| NormalizeError::MissingCalibrationData(pid.to_string()))?;
                baselines.insert(pid.to_string(), fit_participant_baseline(pid, cal, eps)?);
            }
        }
        Strategy::NoCalibration => {
            cohort = Some(fit_cohort(train, eps)?);
            if !opts.no_calibration_pooled_train {
                fit_train_baselines(&mut baselines)?;
            }
        }
    }
    Ok(Normalizer {
        strategy: kind,
        cohort,
        baselines,
        test_participant: test_participant.map(str::to_string),
        pooled_train: opts.no_calibration_pooled_train,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Phase;

    fn window(pid: &str, idx: usize, label: u8, f: impl Fn(usize) -> f64) -> FeatureWindow {
        FeatureWindow {
            participant_id: pid.into(),
            window_index: idx,
            label,
            phase: Phase::from_label(label),
            features: (0..N_FEATURES).map(f).collect(),
        }
    }

    #[test]
    fn identical_alert_windows_use_epsilon() {
        let ws: Vec<_> = (0..5).map(|i| window("P", i, 0, |_| 0.25)).collect();
        let s = fit_participant_baseline("P", &ws, EPSILON).unwrap();
        assert!(s.sigma.iter().all(|v| *v == 0.0));
        let shifted = window("P", 9, 1, |_| 0.25 + 1e-6);
        let z = s.apply(&shifted).unwrap();
        assert!(z.features.iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn symmetric_alert_windows_center_at_zero() {
        let ws = vec![window("P", 0, 0, |k| k as f64), window("P", 1, 0, |k| -(k as f64))];
        let s = fit_participant_baseline("P", &ws, EPSILON).unwrap();
        assert!(s.mu.iter().all(|m| *m == 0.0));
    }

    #[test]
    fn fatigued_windows_do_not_touch_baseline() {
        let alert: Vec<_> = (0..4).map(|i| window("P", i, 0, |k| (k * i) as f64)).collect();
        let mut mixed = alert.clone();
        mixed.extend((4..8).map(|i| window("P", i, 1, |_| 1e6)));
        let a = fit_participant_baseline("P", &alert, EPSILON).unwrap();
        let b = fit_participant_baseline("P", &mixed, EPSILON).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_alert_windows() {
        let ws = vec![window("P", 0, 0, |_| 1.0), window("P", 1, 1, |_| 1.0)];
        assert!(matches!(
            fit_participant_baseline("P", &ws, EPSILON),
            Err(NormalizeError::InsufficientAlertSamples { n: 1, .. })
        ));
    }

    #[test]
    fn dimension_mismatch() {
        let ws: Vec<_> = (0..3).map(|i| window("P", i, 0, |k| (k + i) as f64)).collect();
        let s = fit_participant_baseline("P", &ws, EPSILON).unwrap();
        let mut bad = ws[0].clone();
        bad.features.pop();
        assert_eq!(s.apply(&bad).unwrap_err(), NormalizeError::DimensionMismatch { expected: 90, found: 89 });
    }

    #[test]
    fn participant_aware_requires_calibration() {
        let train: Vec<_> = (0..4).map(|i| window("A", i, (i % 2) as u8, |k| (k * i) as f64)).collect();
        let r = make_strategy(Strategy::ParticipantAware, &train, Some("B"), None, &NormalizeOptions::default());
        assert_eq!(r.unwrap_err(), NormalizeError::MissingCalibrationData("B".into()));
    }

    #[test]
    fn leakage_check_flags_fatigued_test_windows() {
        let train: Vec<_> = (0..4).map(|i| window("A", i, (i % 2) as u8, |k| (k * i) as f64)).collect();
        let cal: Vec<_> = (0..4).map(|i| window("B", i, (i % 2) as u8, |k| (k + i) as f64)).collect();
        let mut n = make_strategy(Strategy::ParticipantAware, &train, Some("B"), Some(&cal), &NormalizeOptions::default())
            .unwrap();
        n.check_leakage("B").unwrap();
        n.baselines.get_mut("B").unwrap().sources.push(WindowRef::from(&cal[1]));
        assert!(matches!(n.check_leakage("B"), Err(NormalizeError::Leakage(_))));
    }

    #[test]
    fn stats_json_round_trip() {
        let ws: Vec<_> = (0..3).map(|i| window("P", i, 0, |k| (k + i * i) as f64)).collect();
        let s = fit_participant_baseline("P", &ws, EPSILON).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: BaselineStats = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["participant_id", "mu", "sigma", "n_alert"] {
            assert!(v.get(key).is_some());
        }
    }
}
