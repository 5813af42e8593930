//! Session-level preprocessing followed by per-window feature extraction.
//!
//! Filters run once over the whole session (a 0.01 Hz high-pass needs far
//! more support than one 10 s window), then each window reads its slice.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eyelid::{blinks_in_window, extract_eyelid_features};
use super::fnirs::{extract_fnirs_features, preprocess_fnirs, Montage};
use super::oculomotor::extract_oculomotor_features;
use super::pupil::{extract_pupil_features, preprocess_pupil};
use super::schema::{N_EYE, N_FEATURES, N_OCULOMOTOR, N_PUPIL};
use super::FeatureError;
use crate::dataio::{segment_windows, Phase, RecordingSession, WindowConfig};

/// One window reduced to its 90 features in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWindow {
    pub participant_id: String,
    pub window_index: usize,
    pub label: u8,
    pub phase: Phase,
    pub features: Vec<f64>,
}

impl FeatureWindow {
    pub fn eye(&self) -> &[f64] {
        &self.features[..N_EYE]
    }

    pub fn fnirs(&self) -> &[f64] {
        &self.features[N_EYE..]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub window: WindowConfig,
    pub montage: Montage,
}

#[derive(Debug, Clone)]
pub struct SessionFeatures {
    pub windows: Vec<FeatureWindow>,
    /// 0-based indices of fNIRS channels removed as flat.
    pub pruned_channels: Vec<usize>,
    pub blink_count: usize,
}

/// Replace NaN and infinities left by degenerate windows with 0.
pub fn sanitize(features: &mut [f64]) -> usize {
    let mut replaced = 0;
    for v in features.iter_mut() {
        if !v.is_finite() {
            *v = 0.0;
            replaced += 1;
        }
    }
    replaced
}

pub fn extract_session_features(
    session: &RecordingSession,
    cfg: &FeatureConfig,
) -> Result<SessionFeatures, FeatureError> {
    cfg.montage.validate()?;
    let segmented = segment_windows(session, &cfg.window)?;
    let eye = &session.eye;
    let pupil = preprocess_pupil(&eye.t, &eye.pupil)?;
    let fnirs = preprocess_fnirs(&segmented.fnirs.channels, segmented.fnirs.rate_hz)?;
    let pruned = fnirs.pruned();
    if !pruned.is_empty() {
        log::info!("{}: pruned flat fNIRS channels {:?}", session.participant_id, pruned);
    }

    let windows = segmented
        .windows
        .par_iter()
        .map(|w| {
            let wrap = |source: FeatureError| FeatureError::Window {
                participant: w.participant_id.clone(),
                window_index: w.window_index,
                source: Box::new(source),
            };
            let r = w.eye.clone();
            let window_s = w.end - w.start;
            let mut features = Vec::with_capacity(N_FEATURES);
            features.extend(
                extract_pupil_features(&pupil.repaired[r.clone()], &pupil.filtered[r.clone()], pupil.fs).map_err(wrap)?,
            );
            features.extend(
                extract_oculomotor_features(&eye.t[r.clone()], &eye.gaze_x[r.clone()], &eye.gaze_y[r.clone()], &eye.valid[r], window_s)
                    .map_err(wrap)?,
            );
            features.extend(extract_eyelid_features(&blinks_in_window(&pupil.blinks, w.start, w.end), window_s));
            let views: Vec<&[f64]> = fnirs.channels.iter().map(|c| &c[w.fnirs.clone()]).collect();
            features.extend(extract_fnirs_features(&views, &fnirs.active, fnirs.fs, &cfg.montage).map_err(wrap)?);
            debug_assert_eq!(features.len(), N_FEATURES);
            let replaced = sanitize(&mut features);
            if replaced > 0 {
                log::debug!("{} window {}: {} non-finite features set to 0", w.participant_id, w.window_index, replaced);
            }
            Ok(FeatureWindow {
                participant_id: w.participant_id.clone(),
                window_index: w.window_index,
                label: w.label,
                phase: w.phase,
                features,
            })
        })
        .collect::<Result<Vec<_>, FeatureError>>()?;

    Ok(SessionFeatures { windows, pruned_channels: pruned, blink_count: pupil.blinks.len() })
}

/// Features for every session, concatenated in session order.
pub fn extract_cohort_features(
    sessions: &[RecordingSession],
    cfg: &FeatureConfig,
) -> Result<Vec<FeatureWindow>, FeatureError> {
    let per: Vec<SessionFeatures> =
        sessions.par_iter().map(|s| extract_session_features(s, cfg)).collect::<Result<_, _>>()?;
    Ok(per.into_iter().flat_map(|s| s.windows).collect())
}

// Offsets of each block inside the 90-vector.
pub const PUPIL_RANGE: std::ops::Range<usize> = 0..N_PUPIL;
pub const OCULOMOTOR_RANGE: std::ops::Range<usize> = N_PUPIL..N_PUPIL + N_OCULOMOTOR;
pub const EYELID_RANGE: std::ops::Range<usize> = N_PUPIL + N_OCULOMOTOR..N_EYE;
pub const FNIRS_RANGE: std::ops::Range<usize> = N_EYE..N_FEATURES;
