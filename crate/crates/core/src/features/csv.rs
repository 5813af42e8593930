//! Feature matrix CSV: 90 schema columns followed by `participant_id,label`.

use std::collections::HashMap;
use std::path::Path;

use super::pipeline::FeatureWindow;
use super::schema::{FeatureSchema, N_FEATURES};
use super::FeatureError;
use crate::dataio::Phase;

pub fn feature_csv_header() -> Vec<String> {
    FeatureSchema::get()
        .names()
        .map(str::to_string)
        .chain(["participant_id".to_string(), "label".to_string()])
        .collect()
}

pub fn write_feature_csv(path: &Path, windows: &[FeatureWindow]) -> Result<(), FeatureError> {
    let csv_err = |source| FeatureError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(csv_err)?;
    w.write_record(feature_csv_header()).map_err(csv_err)?;
    for win in windows {
        let mut row: Vec<String> = win.features.iter().map(|v| v.to_string()).collect();
        row.push(win.participant_id.clone());
        row.push(win.label.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| FeatureError::Csv { path: path.to_path_buf(), source: e.into() })?;
    Ok(())
}

/// Read a feature matrix. Window indices are reassigned as the row ordinal
/// within each participant.
pub fn read_feature_csv(path: &Path) -> Result<Vec<FeatureWindow>, FeatureError> {
    let csv_err = |source| FeatureError::Csv { path: path.to_path_buf(), source };
    let schema_err = |detail: String| FeatureError::Schema { path: path.to_path_buf(), detail };
    let mut r = csv::ReaderBuilder::new().from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let expected = feature_csv_header();
    if header != expected {
        let first_diff = header.iter().zip(&expected).position(|(a, b)| a != b).unwrap_or(header.len().min(expected.len()));
        return Err(schema_err(format!(
            "header mismatch at column {first_diff}: expected {} columns in schema order, found {}",
            expected.len(),
            header.len()
        )));
    }
    let mut counters: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let mut features = Vec::with_capacity(N_FEATURES);
        for (k, field) in rec.iter().take(N_FEATURES).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| schema_err(format!("row {}: column {} is not a number: {field:?}", line + 2, expected[k])))?;
            features.push(v);
        }
        let pid = rec[N_FEATURES].to_string();
        let label: u8 = match rec[N_FEATURES + 1].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(schema_err(format!("row {}: label must be 0 or 1, found {other:?}", line + 2))),
        };
        let idx = counters.entry(pid.clone()).or_insert(0);
        out.push(FeatureWindow { participant_id: pid, window_index: *idx, label, phase: Phase::from_label(label), features });
        *idx += 1;
    }
    Ok(out)
}
