//! On-disk session layout.
//!
//! A session is three files sharing a participant id:
//!
//! ```text
//! eye_<pid>.csv       t,gx,gy,pupil,valid
//! fnirs_<pid>.csv     t,ch1,...,ch8
//! manifest_<pid>.json {"participant_id": ..., "phases": [{"start", "end", "phase"}]}
//! ```
//!
//! Alternatively a whole session may be stored as one JSON document
//! (`SessionFormat::Json`), which is the serde form of [`RecordingSession`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::session::{
    median_period, EyeStream, FnirsStream, PhaseMark, RecordingSession, FNIRS_CHANNELS,
};
use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub participant_id: String,
    pub phases: Vec<PhaseMark>,
}

/// Fraction of out-of-order samples above which a stream is rejected.
const MAX_OUT_OF_ORDER: f64 = 0.01;
/// Jitter tolerance relative to the nominal period before timestamps are re-derived.
const JITTER_TOLERANCE: f64 = 0.10;

pub fn eye_path(dir: &Path, pid: &str) -> PathBuf {
    dir.join(format!("eye_{pid}.csv"))
}

pub fn fnirs_path(dir: &Path, pid: &str) -> PathBuf {
    dir.join(format!("fnirs_{pid}.csv"))
}

pub fn manifest_path(dir: &Path, pid: &str) -> PathBuf {
    dir.join(format!("manifest_{pid}.json"))
}

/// Load one session.
///
/// For [`SessionFormat::Csv`], `path` is either the manifest file or a
/// directory containing exactly one manifest. For [`SessionFormat::Json`] it
/// is the session document itself.
pub fn load_session(path: &Path, format: SessionFormat) -> Result<RecordingSession, DataError> {
    let mut session = match format {
        SessionFormat::Json => {
            let text = read_to_string(path)?;
            serde_json::from_str::<RecordingSession>(&text)
                .map_err(|e| DataError::Json { path: path.to_path_buf(), source: e })?
        }
        SessionFormat::Csv => {
            let manifest_file = if path.is_dir() {
                let found = find_manifests(path)?;
                match found.as_slice() {
                    [one] => one.clone(),
                    [] => return Err(DataError::MissingFile { path: path.join("manifest_<pid>.json") }),
                    _ => {
                        return Err(DataError::Schema {
                            path: path.to_path_buf(),
                            detail: "directory holds several manifests; use load_dataset".into(),
                        })
                    }
                }
            } else {
                path.to_path_buf()
            };
            load_csv_session(&manifest_file)?
        }
    };
    finalize_session(&mut session, path)?;
    Ok(session)
}

/// Load every session in a directory, ordered by participant id.
pub fn load_dataset(dir: &Path) -> Result<Vec<RecordingSession>, DataError> {
    let manifests = find_manifests(dir)?;
    if manifests.is_empty() {
        return Err(DataError::MissingFile { path: dir.join("manifest_<pid>.json") });
    }
    let mut sessions = manifests
        .iter()
        .map(|m| load_session(m, SessionFormat::Csv))
        .collect::<Result<Vec<_>, _>>()?;
    sessions.sort_by(|a, b| a.participant_id.cmp(&b.participant_id));
    Ok(sessions)
}

fn find_manifests(dir: &Path) -> Result<Vec<PathBuf>, DataError> {
    let entries = fs::read_dir(dir).map_err(|e| DataError::Io { path: dir.to_path_buf(), source: e })?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| DataError::Io { path: dir.to_path_buf(), source: e })?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.starts_with("manifest_") && name.ends_with(".json") {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

fn read_to_string(path: &Path) -> Result<String, DataError> {
    if !path.exists() {
        return Err(DataError::MissingFile { path: path.to_path_buf() });
    }
    fs::read_to_string(path).map_err(|e| DataError::Io { path: path.to_path_buf(), source: e })
}

fn load_csv_session(manifest_file: &Path) -> Result<RecordingSession, DataError> {
    let text = read_to_string(manifest_file)?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| DataError::Json { path: manifest_file.to_path_buf(), source: e })?;
    let dir = manifest_file.parent().unwrap_or_else(|| Path::new("."));
    let pid = manifest.participant_id.clone();

    let eye_file = eye_path(dir, &pid);
    let eye_rows = read_numeric_csv(&eye_file, &["t", "gx", "gy", "pupil", "valid"])?;
    let mut eye = EyeStream::default();
    for row in eye_rows {
        eye.push(row[0], row[1], row[2], row[3], row[4] != 0.0);
    }

    let fnirs_file = fnirs_path(dir, &pid);
    let mut header = vec!["t".to_string()];
    header.extend((1..=FNIRS_CHANNELS).map(|c| format!("ch{c}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let fnirs_rows = read_numeric_csv(&fnirs_file, &header_refs)?;
    let mut fnirs = FnirsStream::with_channels(FNIRS_CHANNELS);
    for row in fnirs_rows {
        fnirs.t.push(row[0]);
        for (c, ch) in fnirs.channels.iter_mut().enumerate() {
            ch.push(row[c + 1]);
        }
    }

    Ok(RecordingSession { participant_id: pid, eye, fnirs, phases: manifest.phases })
}

fn read_numeric_csv(path: &Path, expected: &[&str]) -> Result<Vec<Vec<f64>>, DataError> {
    if !path.exists() {
        return Err(DataError::MissingFile { path: path.to_path_buf() });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| DataError::Csv { path: path.to_path_buf(), source: e })?;
    let headers = reader
        .headers()
        .map_err(|e| DataError::Csv { path: path.to_path_buf(), source: e })?
        .clone();
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    for col in expected {
        if !got.contains(col) {
            return Err(DataError::MissingColumn { path: path.to_path_buf(), column: col.to_string() });
        }
    }
    if got.len() != expected.len() {
        return Err(DataError::Schema {
            path: path.to_path_buf(),
            detail: format!("expected {} columns {:?}, found {}", expected.len(), expected, got.len()),
        });
    }
    let order: Vec<usize> =
        expected.iter().map(|c| got.iter().position(|g| g == c).expect("checked above")).collect();

    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::Csv { path: path.to_path_buf(), source: e })?;
        let mut row = Vec::with_capacity(expected.len());
        for &idx in &order {
            let field = record.get(idx).unwrap_or("").trim();
            let v: f64 = field.parse().map_err(|_| DataError::Schema {
                path: path.to_path_buf(),
                detail: format!("row {}: cannot parse {field:?} as a number", line + 2),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Result of timestamp clean-up on one stream.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TimestampRepair {
    pub out_of_order: usize,
    pub duplicates_removed: usize,
    pub reconstructed: bool,
}

/// Sort, de-duplicate and (if jittery) re-derive timestamps.
///
/// Returns the permutation of original row indices to keep, and the cleaned
/// timestamps.
pub fn repair_timestamps(t: &[f64]) -> Result<(Vec<usize>, Vec<f64>, TimestampRepair), f64> {
    let n = t.len();
    let mut report = TimestampRepair::default();
    if n == 0 {
        return Ok((Vec::new(), Vec::new(), report));
    }
    report.out_of_order = t.windows(2).filter(|w| w[1] < w[0]).count();
    let frac = report.out_of_order as f64 / n as f64;
    if frac > MAX_OUT_OF_ORDER {
        return Err(frac);
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| t[a].total_cmp(&t[b]));
    let mut keep = Vec::with_capacity(n);
    let mut times = Vec::with_capacity(n);
    for i in idx {
        if let Some(&last) = times.last() {
            if t[i] == last {
                report.duplicates_removed += 1;
                continue;
            }
        }
        keep.push(i);
        times.push(t[i]);
    }

    let period = median_period(&times);
    let jittery = times
        .windows(2)
        .any(|w| ((w[1] - w[0]) - period).abs() > JITTER_TOLERANCE * period);
    if jittery && times.len() > 1 {
        let t0 = times[0];
        for (i, ti) in times.iter_mut().enumerate() {
            *ti = t0 + i as f64 * period;
        }
        report.reconstructed = true;
    }
    Ok((keep, times, report))
}

fn pick<T: Copy>(v: &[T], keep: &[usize]) -> Vec<T> {
    keep.iter().map(|&i| v[i]).collect()
}

fn finalize_session(s: &mut RecordingSession, origin: &Path) -> Result<(), DataError> {
    if s.fnirs.channels.len() != FNIRS_CHANNELS {
        return Err(DataError::Schema {
            path: origin.to_path_buf(),
            detail: format!("expected {FNIRS_CHANNELS} fNIRS channels, found {}", s.fnirs.channels.len()),
        });
    }
    let unfixable = |stream: &str, fraction: f64| DataError::NonMonotonicTimeUnfixable {
        path: origin.to_path_buf(),
        stream: stream.to_string(),
        fraction,
    };

    let (keep, t, rep) = repair_timestamps(&s.eye.t).map_err(|f| unfixable("eye", f))?;
    if rep.duplicates_removed > 0 {
        info!("{}: collapsed {} duplicate eye timestamps", s.participant_id, rep.duplicates_removed);
    }
    s.eye = EyeStream {
        t,
        gaze_x: pick(&s.eye.gaze_x, &keep),
        gaze_y: pick(&s.eye.gaze_y, &keep),
        pupil: pick(&s.eye.pupil, &keep),
        valid: pick(&s.eye.valid, &keep),
    };

    let (keep, t, rep) = repair_timestamps(&s.fnirs.t).map_err(|f| unfixable("fnirs", f))?;
    if rep.duplicates_removed > 0 {
        info!("{}: collapsed {} duplicate fNIRS timestamps", s.participant_id, rep.duplicates_removed);
    }
    s.fnirs = FnirsStream { t, channels: s.fnirs.channels.iter().map(|c| pick(c, &keep)).collect() };

    for mark in &s.phases {
        let has_eye = s.eye.t.iter().any(|&t| mark.contains(t));
        let has_fnirs = s.fnirs.t.iter().any(|&t| mark.contains(t));
        if mark.end <= mark.start || !has_eye || !has_fnirs {
            return Err(DataError::EmptyPhase {
                participant: s.participant_id.clone(),
                phase: mark.phase,
                start: mark.start,
                end: mark.end,
            });
        }
    }
    Ok(())
}

/// Write a session in the three-file CSV layout.
pub fn write_session_csv(dir: &Path, s: &RecordingSession) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(|e| DataError::Io { path: dir.to_path_buf(), source: e })?;
    let pid = &s.participant_id;

    let mut eye = String::with_capacity(s.eye.len() * 48);
    eye.push_str("t,gx,gy,pupil,valid\n");
    for i in 0..s.eye.len() {
        eye.push_str(&format!(
            "{},{},{},{},{}\n",
            s.eye.t[i],
            s.eye.gaze_x[i],
            s.eye.gaze_y[i],
            s.eye.pupil[i],
            u8::from(s.eye.valid[i])
        ));
    }
    write_file(&eye_path(dir, pid), eye.as_bytes())?;

    let mut fnirs = String::with_capacity(s.fnirs.len() * 96);
    fnirs.push('t');
    for c in 1..=s.fnirs.channels.len() {
        fnirs.push_str(&format!(",ch{c}"));
    }
    fnirs.push('\n');
    for i in 0..s.fnirs.len() {
        fnirs.push_str(&format!("{}", s.fnirs.t[i]));
        for ch in &s.fnirs.channels {
            fnirs.push_str(&format!(",{}", ch[i]));
        }
        fnirs.push('\n');
    }
    write_file(&fnirs_path(dir, pid), fnirs.as_bytes())?;

    let manifest = Manifest { participant_id: pid.clone(), phases: s.phases.clone() };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_file(&manifest_path(dir, pid), text.as_bytes())
}

pub fn write_session_json(path: &Path, s: &RecordingSession) -> Result<(), DataError> {
    let text = serde_json::to_string(s).expect("session serializes");
    write_file(path, text.as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let mut f = fs::File::create(path).map_err(|e| DataError::Io { path: path.to_path_buf(), source: e })?;
    f.write_all(bytes).map_err(|e| DataError::Io { path: path.to_path_buf(), source: e })
}
