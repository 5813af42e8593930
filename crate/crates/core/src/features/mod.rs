//! Signal preprocessing and the 90-dimensional window feature vector.

mod csv;
pub mod entropy;
pub mod eyelid;
pub mod fnirs;
pub mod oculomotor;
mod pipeline;
pub mod pupil;
mod schema;
pub mod signal;

use std::path::PathBuf;

use thiserror::Error;

use crate::dataio::DataError;

pub use self::csv::{feature_csv_header, read_feature_csv, write_feature_csv};
pub use eyelid::extract_eyelid_features;
pub use fnirs::{extract_fnirs_features, preprocess_fnirs, CleanFnirs, Montage};
pub use oculomotor::extract_oculomotor_features;
pub use pipeline::{
    extract_cohort_features, extract_session_features, sanitize, FeatureConfig, FeatureWindow, SessionFeatures,
    EYELID_RANGE, FNIRS_RANGE, OCULOMOTOR_RANGE, PUPIL_RANGE,
};
pub use pupil::{extract_pupil_features, preprocess_pupil, BlinkEvent, CleanPupil};
pub use schema::{
    FeatureEntry, FeatureGroup, FeatureSchema, N_EYE, N_EYELID, N_FEATURES, N_FNIRS, N_OCULOMOTOR, N_PUPIL,
};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("{what} too short: {len} samples, need {needed}")]
    TooShort { what: &'static str, len: usize, needed: String },
    #[error("{:.1}% of pupil samples flagged as blink", fraction * 100.0)]
    AllBlink { fraction: f64 },
    #[error("all fNIRS channels are flat")]
    AllChannelsFlat,
    #[error("expected 8 fNIRS channels, found {found}")]
    ChannelCount { found: usize },
    #[error("no fNIRS channel survived pruning")]
    NoChannels,
    #[error("only {:.1}% of gaze samples valid", fraction * 100.0)]
    TooFewValidSamples { fraction: f64 },
    #[error("invalid montage {0}")]
    Montage(String),
    #[error("participant {participant}, window {window_index}: {source}")]
    Window { participant: String, window_index: usize, source: Box<FeatureError> },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: ::csv::Error },
    #[error("{path}: {detail}")]
    Schema { path: PathBuf, detail: String },
}
