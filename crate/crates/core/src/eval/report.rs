//! CSV and JSON report files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AblationReport, EvalError, FidelityReport, LosoReport, Suite, WindowRecord};

pub const AUDIT_HEADER: [&str; 14] =
    ["window", "y_hat", "y", "C1", "C2", "C3", "C4", "C1_tilde", "C2_tilde", "C3_tilde", "C4_tilde", "f1", "f2", "f3"];

fn io_err(path: &Path) -> impl Fn(String) -> EvalError + '_ {
    move |detail| EvalError::Io { path: path.to_path_buf(), detail }
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), EvalError> {
    let err = io_err(path);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    w.write_record(header).map_err(|e| err(e.to_string()))?;
    for row in rows {
        w.write_record(&row).map_err(|e| err(e.to_string()))?;
    }
    w.flush().map_err(|e| err(e.to_string()))
}

/// One row per fold: subject, seed-averaged accuracy and each seed's accuracy.
pub fn write_folds_csv(path: &Path, report: &LosoReport) -> Result<(), EvalError> {
    let seeds: Vec<String> = report.config.seeds.iter().map(|s| format!("acc_seed_{s}")).collect();
    let mut header = vec!["subject", "strategy", "classifier", "ablation", "n_test", "n_scored", "accuracy"];
    header.extend(seeds.iter().map(String::as_str));
    let rows = report.folds.iter().map(|f| {
        let mut row = vec![
            f.held_out_subject.clone(),
            f.strategy.as_str().to_string(),
            f.classifier.clone(),
            f.ablation_tag.clone(),
            f.n_test_windows.to_string(),
            f.n_scored_windows.to_string(),
            f.accuracy.to_string(),
        ];
        row.extend(f.runs.iter().map(|r| r.accuracy.to_string()));
        row
    });
    write_rows(path, &header, rows)
}

/// Per-subject table: ID, Acc, C-Fid, R-Fid and the three rule discriminations.
pub fn write_fidelity_csv(path: &Path, report: &FidelityReport) -> Result<(), EvalError> {
    let rows = report.subjects.iter().map(|s| {
        let mut row = vec![s.subject.clone(), s.accuracy.to_string(), s.phi.to_string(), s.rule_fidelity.to_string()];
        row.extend(s.discrimination.iter().map(|d| d.to_string()));
        row
    });
    write_rows(path, &["ID", "Acc", "C-Fid", "R-Fid", "R1", "R2", "R3"], rows)
}

/// One CSV for a single suite.
pub fn write_ablation_csv(path: &Path, report: &AblationReport, suite: Suite) -> Result<(), EvalError> {
    let rows = report.suite(suite).map(|r| {
        let (w, p, rb) = match &r.wilcoxon {
            Some(t) => (t.statistic.to_string(), t.p_value.to_string(), t.rank_biserial.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        vec![
            r.variant.clone(),
            r.is_base.to_string(),
            r.accuracy.to_string(),
            r.sd.to_string(),
            r.delta_pp.to_string(),
            w,
            p,
            rb,
        ]
    });
    write_rows(path, &["variant", "base", "accuracy", "sd", "delta_pp", "wilcoxon_w", "wilcoxon_p", "rank_biserial"], rows)
}

/// Per-window records of one (subject, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTraces {
    pub subject: String,
    pub seed: u64,
    pub records: Vec<WindowRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSet {
    pub runs: Vec<SubjectTraces>,
}

impl TraceSet {
    pub fn from_report(report: &LosoReport) -> Self {
        let runs = report
            .folds
            .iter()
            .flat_map(|f| {
                f.runs.iter().map(|r| SubjectTraces {
                    subject: f.held_out_subject.clone(),
                    seed: r.seed,
                    records: r.records.clone(),
                })
            })
            .collect();
        Self { runs }
    }

    /// Records for `subject`, from `seed` or else the first stored seed.
    pub fn find(&self, subject: &str, seed: Option<u64>) -> Result<&SubjectTraces, EvalError> {
        self.runs
            .iter()
            .find(|r| r.subject == subject && seed.is_none_or(|s| s == r.seed))
            .ok_or_else(|| EvalError::UnknownSubject(subject.to_string()))
    }
}

pub fn write_traces(path: &Path, traces: &TraceSet) -> Result<(), EvalError> {
    let err = io_err(path);
    let text = serde_json::to_string(traces).map_err(|e| err(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| err(e.to_string()))
}

pub fn read_traces(path: &Path) -> Result<TraceSet, EvalError> {
    let err = io_err(path);
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

/// Time-ordered per-window export of one subject's run.
pub fn write_audit_csv(path: &Path, traces: &SubjectTraces) -> Result<(), EvalError> {
    let mut records: Vec<&WindowRecord> = traces.records.iter().collect();
    records.sort_by_key(|r| r.window_index);
    let rows = records
        .into_iter()
        .map(|r| {
            let t = r.trace.as_ref().ok_or_else(|| EvalError::MissingTraces(traces.subject.clone()))?;
            let mut row = vec![r.window_index.to_string(), r.y_hat.to_string(), r.label.to_string()];
            row.extend(t.c.iter().chain(&t.c_tilde).chain(&t.f).map(|v| v.to_string()));
            Ok(row)
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    write_rows(path, &AUDIT_HEADER, rows)
}
