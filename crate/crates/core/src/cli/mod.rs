//! Command-line entry point: `synth`, `features`, `loso`, `ablate`, `audit`.

mod config;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;
use thiserror::Error;

pub use config::{ConfigFormat, DataSource, ExperimentConfig};

use crate::dataio::{generate_synthetic_cohort, load_dataset, write_session_csv, DataError};
use crate::eval::{
    fidelity_report, read_traces, run_ablations, run_loso, write_ablation_csv, write_audit_csv, write_fidelity_csv,
    write_folds_csv, write_traces, AblationReport, EvalError, FidelityReport, FoldReport, LosoConfig, LosoReport,
    NesyClassifier, Suite, Summary, TraceSet,
};
use crate::features::{extract_cohort_features, read_feature_csv, write_feature_csv, FeatureError, FeatureWindow};
use crate::model::{Checkpoint, ModelError, OperatorFamily};
use crate::normalize::{NormalizeError, Strategy};
use crate::train::{write_training_log, TrainError};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "NESY_OUT";
pub const DEFAULT_OUT: &str = "runs";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidSpec(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<NormalizeError> for CliError {
    fn from(e: NormalizeError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn is_numeric(e: &EvalError) -> bool {
    matches!(
        e.root(),
        EvalError::NonFinite(_)
            | EvalError::Model(ModelError::NonFiniteActivation(_))
            | EvalError::Train(TrainError::Model(ModelError::NonFiniteActivation(_)))
    )
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let msg = e.to_string();
        if is_numeric(&e) {
            return CliError::Numeric(msg);
        }
        match e.root() {
            EvalError::NoSeeds | EvalError::Train(TrainError::InvalidConfig(_)) => CliError::Config(msg),
            _ => CliError::Data(msg),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fatigue-nesy", version, about = "Neuro-symbolic fatigue classification experiments")]
pub struct Cli {
    /// Experiment config file (.toml or .json). Flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for folds and seeds (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort in the on-disk session layout.
    Synth(SynthArgs),
    /// Extract the 90-feature matrix from a session directory.
    Features(FeaturesArgs),
    /// Leave-one-subject-out evaluation with fidelity audit.
    Loso(RunArgs),
    /// Normalization, knockout, operator and threshold ablations.
    Ablate(AblateArgs),
    /// Export one subject's per-window traces from a finished run.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub windows_per_phase: Option<usize>,
    /// Four comma-separated latent effect sizes.
    #[arg(long, value_delimiter = ',')]
    pub effect_sizes: Option<Vec<f64>>,
    #[arg(long)]
    pub subject_noise: Option<f64>,
    #[arg(long)]
    pub polarity_flips: Option<f64>,
    /// Per-subject extra noise SD, one comma-separated value per subject.
    #[arg(long, value_delimiter = ',')]
    pub noise_grade: Option<Vec<f64>>,
    /// Output directory (default: $NESY_OUT/data).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Session directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output CSV (default: $NESY_OUT/features.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// Session directory.
    #[arg(long, conflicts_with = "features")]
    pub data: Option<PathBuf>,
    /// Feature CSV written by `features`.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// global | participant | no-calibration
    #[arg(long)]
    pub strategy: Option<Strategy>,
    /// product | lukasiewicz | goedel. For `loso` the single family to use;
    /// for `ablate` the families compared in the operator suite.
    #[arg(long, value_delimiter = ',')]
    pub operators: Option<Vec<OperatorFamily>>,
    /// Replace the rule layer with a linear head on the concepts.
    #[arg(long)]
    pub no_logic: bool,
    /// Hold every concept threshold at 0.5.
    #[arg(long)]
    pub freeze_tau: bool,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Score accuracy on post-task windows only.
    #[arg(long)]
    pub exclude_calibration: bool,
    /// Output directory (default: $NESY_OUT/<command>).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Suites to run (default: all four).
    #[arg(long, value_delimiter = ',')]
    pub suites: Option<Vec<Suite>>,
    /// Strategies for the normalization suite.
    #[arg(long = "suite-strategies", value_delimiter = ',')]
    pub suite_strategies: Option<Vec<Strategy>>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Directory of a finished `loso` run.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub subject: String,
    /// Seed whose traces to export (default: the first seed of the run).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV (default: <run>/audit_<subject>.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn base_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    match &cli.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

/// Apply run flags on top of a loaded config.
pub fn apply_run_args(cfg: &mut ExperimentConfig, args: &RunArgs) {
    if let Some(p) = &args.features {
        cfg.data = DataSource { features: Some(p.clone()), ..Default::default() };
    }
    if let Some(p) = &args.data {
        cfg.data = DataSource { dir: Some(p.clone()), ..Default::default() };
    }
    if let Some(s) = args.strategy {
        cfg.strategy = s;
    }
    if args.no_logic {
        cfg.model.no_logic = true;
    }
    if args.freeze_tau {
        cfg.model.freeze_tau = true;
    }
    if let Some(s) = &args.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(e) = args.max_epochs {
        cfg.train.max_epochs = e;
        cfg.train.patience = cfg.train.patience.min(e.saturating_sub(1).max(1));
    }
    if args.exclude_calibration {
        cfg.exclude_calibration = true;
    }
    if let Some(o) = &args.out {
        cfg.output = Some(o.clone());
    }
}

/// Resolve the configured data source into feature windows.
pub fn load_windows(cfg: &ExperimentConfig) -> Result<Vec<FeatureWindow>, CliError> {
    let d = &cfg.data;
    if let Some(p) = &d.features {
        info!("reading features from {}", p.display());
        return Ok(read_feature_csv(p)?);
    }
    let sessions = if let Some(dir) = &d.dir {
        info!("loading sessions from {}", dir.display());
        load_dataset(dir)?
    } else if let Some(spec) = &d.synthetic {
        info!("generating {} synthetic subjects", spec.n_subjects);
        generate_synthetic_cohort(spec)?
    } else {
        return Err(CliError::Config("no data source: pass --data, --features or set [data] in the config".into()));
    };
    Ok(extract_cohort_features(&sessions, &cfg.features)?)
}

pub fn cmd_synth(cfg: &ExperimentConfig, args: &SynthArgs) -> Result<PathBuf, CliError> {
    let mut spec = cfg.data.synthetic.clone().unwrap_or_default();
    if let Some(n) = args.subjects {
        spec.n_subjects = n;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(w) = args.windows_per_phase {
        spec.windows_per_phase = w;
    }
    if let Some(e) = &args.effect_sizes {
        spec.concept_effect_sizes = e
            .as_slice()
            .try_into()
            .map_err(|_| CliError::Config(format!("--effect-sizes needs 4 values, got {}", e.len())))?;
    }
    if let Some(s) = args.subject_noise {
        spec.subject_noise_sd = s;
    }
    if let Some(p) = args.polarity_flips {
        spec.polarity_flips = p;
    }
    if let Some(g) = &args.noise_grade {
        spec.subject_noise_grade = g.clone();
    }
    let out = args.out.clone().unwrap_or_else(|| out_root().join("data"));
    let sessions = generate_synthetic_cohort(&spec)?;
    for s in &sessions {
        write_session_csv(&out, s)?;
    }
    info!("wrote {} sessions to {}", sessions.len(), out.display());
    Ok(out)
}

pub fn cmd_features(cfg: &ExperimentConfig, args: &FeaturesArgs) -> Result<PathBuf, CliError> {
    let mut cfg = cfg.clone();
    if let Some(d) = &args.data {
        cfg.data = DataSource { dir: Some(d.clone()), ..Default::default() };
    }
    let windows = load_windows(&cfg)?;
    let out = args.out.clone().unwrap_or_else(|| out_root().join("features.csv"));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_feature_csv(&out, &windows)?;
    info!("wrote {} windows to {}", windows.len(), out.display());
    Ok(out)
}

#[derive(Debug, Serialize)]
struct Metadata {
    created_unix_s: u64,
    elapsed_s: f64,
    version: &'static str,
}

impl Metadata {
    fn since(start: Instant) -> Self {
        Self {
            created_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            elapsed_s: start.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

#[derive(Debug, Serialize)]
struct LosoSummary<'a> {
    classifier: &'a str,
    config: &'a LosoConfig,
    summary: &'a Summary,
    folds: &'a [FoldReport],
    fidelity: Option<&'a FidelityReport>,
    /// Run timing and provenance; the only non-deterministic field.
    metadata: Metadata,
}

fn output_dir(cfg: &ExperimentConfig, command: &str) -> PathBuf {
    cfg.output.clone().unwrap_or_else(|| out_root().join(command))
}

/// Write the fold, fidelity, trace, checkpoint and log files of a LOSO run.
fn write_loso_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    report: &LosoReport,
    start: Instant,
) -> Result<Option<FidelityReport>, CliError> {
    create_dir(&dir.join("checkpoints"))?;
    create_dir(&dir.join("logs"))?;
    std::fs::write(dir.join("config.toml"), cfg.dump(ConfigFormat::Toml)?).map_err(|e| io_err(dir, e))?;
    write_folds_csv(&dir.join("folds.csv"), report)?;
    let fidelity = match fidelity_report(&report.folds) {
        Ok(f) => {
            write_fidelity_csv(&dir.join("fidelity.csv"), &f)?;
            Some(f)
        }
        Err(e) => {
            log::warn!("fidelity audit skipped: {e}");
            None
        }
    };
    write_traces(&dir.join("traces.json"), &TraceSet::from_report(report))?;
    for fold in &report.folds {
        for run in &fold.runs {
            let stem = format!("{}_seed{}", fold.held_out_subject, run.seed);
            if let Some(p) = &run.params {
                write_json(&dir.join("checkpoints").join(format!("{stem}.json")), &Checkpoint::new(p, &cfg.model))?;
            }
            write_training_log(&dir.join("logs").join(format!("{stem}.csv")), &run.log)
                .map_err(|e| CliError::Data(e.to_string()))?;
        }
    }
    write_json(
        &dir.join("summary.json"),
        &LosoSummary {
            classifier: &report.classifier,
            config: &report.config,
            summary: &report.summary,
            folds: &report.folds,
            fidelity: fidelity.as_ref(),
            metadata: Metadata::since(start),
        },
    )?;
    Ok(fidelity)
}

pub fn cmd_loso(cfg: &ExperimentConfig) -> Result<LosoReport, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let windows = load_windows(cfg)?;
    let classifier = NesyClassifier { model: cfg.model.clone(), train: cfg.train.clone() };
    let report = run_loso(&windows, &classifier, &cfg.loso("base"))?;
    let dir = output_dir(cfg, "loso");
    create_dir(&dir)?;
    write_loso_outputs(&dir, cfg, &report, start)?;
    let s = &report.summary;
    info!(
        "{}: accuracy {:.4} ± {:.4} (95% CI {:.4}..{:.4}) over {} folds -> {}",
        report.classifier,
        s.mean,
        s.sd,
        s.ci_low,
        s.ci_high,
        s.n,
        dir.display()
    );
    Ok(report)
}

#[derive(Debug, Serialize)]
struct AblationSummary<'a> {
    base: &'a Summary,
    report: &'a AblationReport,
    metadata: Metadata,
}

pub fn cmd_ablate(cfg: &ExperimentConfig) -> Result<AblationReport, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let windows = load_windows(cfg)?;
    let classifier = NesyClassifier { model: cfg.model.clone(), train: cfg.train.clone() };
    let (base, report) = run_ablations(&windows, &classifier, &cfg.loso("base"), &cfg.ablation, None)?;
    let dir = output_dir(cfg, "ablate");
    create_dir(&dir)?;
    write_loso_outputs(&dir, cfg, &base, start)?;
    for &suite in &cfg.ablation.suites {
        write_ablation_csv(&dir.join(format!("ablation_{}.csv", suite.as_str())), &report, suite)?;
    }
    write_json(
        &dir.join("ablation.json"),
        &AblationSummary { base: &base.summary, report: &report, metadata: Metadata::since(start) },
    )?;
    for r in &report.rows {
        info!("{:<13} {:<17} acc {:.4} delta {:+.2} pp", r.suite.as_str(), r.variant, r.accuracy, r.delta_pp);
    }
    Ok(report)
}

pub fn cmd_audit(args: &AuditArgs) -> Result<PathBuf, CliError> {
    let traces = read_traces(&args.run.join("traces.json"))?;
    let found = traces.find(&args.subject, args.seed).map_err(|e| CliError::Data(e.to_string()))?;
    let out = args.out.clone().unwrap_or_else(|| args.run.join(format!("audit_{}.csv", args.subject)));
    write_audit_csv(&out, found)?;
    info!("wrote {} windows for {} (seed {}) to {}", found.records.len(), found.subject, found.seed, out.display());
    Ok(out)
}

/// Parse-free entry point used by the binary and by tests.
pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    }
    let mut cfg = base_config(&cli)?;
    match &cli.command {
        Command::Synth(a) => cmd_synth(&cfg, a).map(|_| ()),
        Command::Features(a) => cmd_features(&cfg, a).map(|_| ()),
        Command::Loso(a) => {
            apply_run_args(&mut cfg, a);
            match a.operators.as_deref() {
                None => {}
                Some([f]) => cfg.model.family = *f,
                Some(_) => return Err(CliError::Config("loso takes a single --operators family".into())),
            }
            cmd_loso(&cfg).map(|_| ())
        }
        Command::Ablate(a) => {
            apply_run_args(&mut cfg, &a.run);
            if let Some(s) = &a.suites {
                cfg.ablation.suites = s.clone();
            }
            if let Some(o) = &a.run.operators {
                cfg.ablation.operators = o.clone();
            }
            if let Some(s) = &a.suite_strategies {
                cfg.ablation.strategies = s.clone();
            }
            cmd_ablate(&cfg).map(|_| ())
        }
        Command::Audit(a) => cmd_audit(a).map(|_| ()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 2);
        assert_eq!(CliError::Data(String::new()).exit_code(), 3);
        assert_eq!(CliError::Numeric(String::new()).exit_code(), 4);
        let nonfinite = EvalError::Fold {
            subject: "S01".into(),
            source: Box::new(EvalError::Train(TrainError::Model(ModelError::NonFiniteActivation("x")))),
        };
        assert_eq!(CliError::from(nonfinite).exit_code(), 4);
        assert_eq!(CliError::from(DataError::InvalidSpec("n".into())).exit_code(), 2);
        assert_eq!(CliError::from(EvalError::UnknownSubject("S9".into())).exit_code(), 3);
    }

    #[test]
    fn flags_override_config() {
        let mut cfg = ExperimentConfig { seeds: vec![1, 2], ..Default::default() };
        let args = RunArgs {
            strategy: Some(Strategy::Global),
            seeds: Some(vec![9]),
            no_logic: true,
            max_epochs: Some(5),
            ..Default::default()
        };
        apply_run_args(&mut cfg, &args);
        assert_eq!(cfg.seeds, vec![9]);
        assert_eq!(cfg.strategy, Strategy::Global);
        assert!(cfg.model.no_logic);
        assert_eq!(cfg.train.max_epochs, 5);
        assert!(cfg.train.patience < 5);
        cfg.validate().unwrap();
    }

    #[test]
    fn defaults_follow_protocol() {
        let cli = Cli::try_parse_from(["fatigue-nesy", "loso", "--features", "f.csv"]).unwrap();
        let mut cfg = ExperimentConfig::default();
        let Command::Loso(a) = &cli.command else { panic!() };
        apply_run_args(&mut cfg, a);
        assert_eq!(cfg.seeds, vec![42, 123, 456]);
        assert_eq!(cfg.strategy, Strategy::ParticipantAware);
        assert!(!cfg.model.no_logic);
        let cli = Cli::try_parse_from(["fatigue-nesy", "loso", "--strategy", "no-calibration", "--no-logic"]).unwrap();
        let Command::Loso(a) = &cli.command else { panic!() };
        apply_run_args(&mut cfg, a);
        assert_eq!(cfg.strategy, Strategy::NoCalibration);
        assert!(cfg.model.no_logic);
    }

    #[test]
    fn ablate_suite_filters_parse() {
        let cli = Cli::try_parse_from([
            "fatigue-nesy",
            "ablate",
            "--suites",
            "operators,threshold",
            "--operators",
            "lukasiewicz",
        ])
        .unwrap();
        let Command::Ablate(a) = &cli.command else { panic!() };
        assert_eq!(a.suites.as_deref(), Some(&[Suite::Operators, Suite::Threshold][..]));
        assert_eq!(a.run.operators.as_deref(), Some(&[OperatorFamily::Lukasiewicz][..]));
    }
}
