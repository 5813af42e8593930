//! Session ingestion, synthetic cohorts and windowing.

mod io;
mod session;
mod synth;
mod window;

use std::path::PathBuf;

use thiserror::Error;

pub use io::{
    eye_path, fnirs_path, load_dataset, load_session, manifest_path, repair_timestamps, write_session_csv,
    write_session_json, Manifest, SessionFormat, TimestampRepair,
};
pub use session::{median_period, EyeStream, FnirsStream, Phase, PhaseMark, RecordingSession, FNIRS_CHANNELS};
pub use synth::{generate_synthetic_cohort, SyntheticCohortSpec, LATENT_DRIVERS};
pub use window::{
    align_fnirs, resample_linear, segment_windows, window_count, AlignedFnirs, SegmentedSession, WindowConfig,
    WindowSlice,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: {detail}")]
    Schema { path: PathBuf, detail: String },
    #[error("missing file {path}")]
    MissingFile { path: PathBuf },
    #[error("{path}: {stream} stream has {:.2}% samples out of order", fraction * 100.0)]
    NonMonotonicTimeUnfixable { path: PathBuf, stream: String, fraction: f64 },
    #[error("participant {participant}: phase {phase:?} [{start}, {end}) holds no samples")]
    EmptyPhase { participant: String, phase: Phase, start: f64, end: f64 },
    #[error("participant {participant}: phase {phase:?} lasts {duration:.2} s, shorter than one {window_s} s window")]
    PhaseTooShort { participant: String, phase: Phase, duration: f64, window_s: f64 },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}
