//! Command-line front end (`eegwb`).
//!
//! Exit codes: 0 success, 1 usage or input error, 2 leakage detected by
//! `audit`. Every command writes its effective settings to
//! `run_config.json` under `--out`; `--out` defaults to `$EEGWB_OUT`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, write_dataset, DatasetManifest, RawRecord};
use crate::error::{Error, Result};
use crate::experiment::{
    best_accuracy_table, combine_audits, emit_heatmap, evaluate, format_table, prepare_records,
    run_sweep, SweepGrid, DEFAULT_HOPS, DEFAULT_TRAIN_FRACTION, DEFAULT_WINDOWS_S,
};
use crate::features::{extract_all, extract_features, write_config, FeatureSet, SpectrogramConfig};
use crate::models::{ClassifierSpec, ModelKind};
use crate::splits::{split_common_subject, split_leave_one_out, split_subject_specific, Paradigm};
use crate::standardize::{audit_leakage, fit_scheme, RunDescriptor, Scheme, Verdict};
use crate::training::TrainConfig;

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 42;
pub const OUT_DIR_ENV: &str = "EEGWB_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_LEAKY: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "eegwb", version, about = "EEG attention-state classification workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (record CSVs + manifest.json).
    Synth(SynthArgs),
    /// Extract one feature table per record.
    Extract(ExtractArgs),
    /// Evaluate one model under one paradigm and scheme.
    Run(RunArgs),
    /// Sweep a (window × hop) grid for one or more models.
    Sweep(SweepArgs),
    /// Audit a standardization run for leakage.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 5)]
    pub subjects: u32,
    #[arg(long, default_value_t = 7)]
    pub records: u32,
    /// Record duration in seconds.
    #[arg(long, default_value_t = 2400)]
    pub duration: u32,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// STFT window length in seconds.
    #[arg(long)]
    pub window: u32,
    /// STFT hop in samples.
    #[arg(long)]
    pub hop: usize,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// loso, common-subject or subject-specific.
    #[arg(long, default_value = "loso")]
    pub paradigm: Paradigm,
    /// global-train or per-record (leaky baseline).
    #[arg(long, default_value = "global-train")]
    pub scheme: Scheme,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Keep the habituation records (1 and 2) instead of dropping them.
    #[arg(long)]
    pub keep_habituation: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub halving_patience: Option<usize>,
    #[arg(long)]
    pub early_stop_patience: Option<usize>,
}

impl TrainArgs {
    fn config(&self) -> Result<TrainConfig> {
        let mut c = TrainConfig::default();
        if let Some(v) = self.lr {
            c.initial_lr = v;
        }
        if let Some(v) = self.max_epochs {
            c.max_epochs = v;
        }
        if let Some(v) = self.halving_patience {
            c.lr_halving_patience = v;
        }
        if let Some(v) = self.early_stop_patience {
            c.early_stop_patience = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// rf, svm, xgb, dnn4, dnn4-small or dnn6.
    #[arg(long)]
    pub model: ModelKind,
    #[arg(long, default_value_t = 4)]
    pub window: u32,
    #[arg(long, default_value_t = 128)]
    pub hop: usize,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, value_delimiter = ',', default_value = "rf,svm,xgb,dnn4,dnn6")]
    pub models: Vec<ModelKind>,
    /// Window lengths in seconds (default 4,8,16,24,32,40).
    #[arg(long, value_delimiter = ',')]
    pub windows: Vec<u32>,
    /// Hops in samples (default 8,32,64,128,192,384).
    #[arg(long, value_delimiter = ',')]
    pub hops: Vec<usize>,
    /// Worker threads for grid cells (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// `run_descriptor.json` written by `run`. Without it, the pipeline
    /// given by the remaining flags is standardized and audited directly.
    #[arg(long, conflicts_with = "manifest")]
    pub descriptor: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "loso")]
    pub paradigm: Paradigm,
    #[arg(long, default_value = "global-train")]
    pub scheme: Scheme,
    #[arg(long, default_value_t = 4)]
    pub window: u32,
    #[arg(long, default_value_t = 128)]
    pub hop: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub keep_habituation: bool,
    /// Carve a validation set from random-split training data.
    #[arg(long)]
    pub with_validation: bool,
    #[command(flatten)]
    pub out: OutArg,
}

/// Effective settings of one invocation, echoed to `run_config.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CliConfig {
    pub command: String,
    pub manifest: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub paradigm: Option<Paradigm>,
    pub scheme: Option<Scheme>,
    pub models: Vec<ModelKind>,
    pub windows_s: Vec<u32>,
    pub hops: Vec<usize>,
    pub drop_habituation: Option<bool>,
    pub train: Option<TrainConfig>,
    pub extra: BTreeMap<String, String>,
}

/// Audit input written by `run`: how to rebuild the features plus one
/// descriptor per fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditBundle {
    pub manifest: PathBuf,
    pub window_s: u32,
    pub hop: usize,
    pub drop_habituation: bool,
    pub descriptors: Vec<RunDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub verdict: Verdict,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// `"LEAKY-BASELINE"` for the per-record scheme, otherwise absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marker: Option<String>,
    pub leaky_baseline: bool,
    pub model: ModelKind,
    pub scheme: Scheme,
    pub scheme_label: String,
    pub paradigm: Paradigm,
    pub seed: u64,
    pub window_s: u32,
    pub hop: usize,
    pub mean_accuracy: f64,
    pub per_subject: BTreeMap<String, f64>,
    pub audit: AuditSummary,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn run(command: Command) -> Result<i32> {
    match command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Extract(a) => cmd_extract(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Audit(a) => cmd_audit(&a),
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_prepared(manifest: &Path, drop_habituation: bool) -> Result<Vec<RawRecord>> {
    let records = DatasetManifest::load(manifest)?.load_records()?;
    prepare_records(records, drop_habituation)
}

pub fn cmd_synth(a: &SynthArgs) -> Result<i32> {
    let (records, _) = generate_synthetic(a.subjects, a.records, a.duration, a.seed)?;
    let out = &a.out.out;
    write_dataset(&records, out)?;
    let mut extra = BTreeMap::new();
    extra.insert("subjects".into(), a.subjects.to_string());
    extra.insert("records".into(), a.records.to_string());
    extra.insert("duration_s".into(), a.duration.to_string());
    write_json(
        &CliConfig {
            command: "synth".into(),
            out: out.clone(),
            seed: Some(a.seed),
            extra,
            ..Default::default()
        },
        &out.join("run_config.json"),
    )?;
    println!("wrote {} records to {}", records.len(), out.display());
    Ok(EXIT_OK)
}

pub fn cmd_extract(a: &ExtractArgs) -> Result<i32> {
    let config = SpectrogramConfig::new(a.window, a.hop)?;
    let records = DatasetManifest::load(&a.manifest)?.load_records()?;
    let out = &a.out.out;
    create_out(out)?;
    for r in &records {
        let fs = extract_features(r, &config)?;
        let name = format!("features_subject{:02}_record{:02}.csv", r.subject_id(), r.record_index());
        fs.write_csv(&out.join(name))?;
    }
    write_config(&config, &out.join("feature_config.json"))?;
    write_json(
        &CliConfig {
            command: "extract".into(),
            manifest: Some(a.manifest.clone()),
            out: out.clone(),
            windows_s: vec![a.window],
            hops: vec![a.hop],
            ..Default::default()
        },
        &out.join("run_config.json"),
    )?;
    println!("wrote {} feature tables to {}", records.len(), out.display());
    Ok(EXIT_OK)
}

pub fn cmd_run(a: &RunArgs) -> Result<i32> {
    let p = &a.pipeline;
    let train = a.train.config()?;
    let config = SpectrogramConfig::new(a.window, a.hop)?;
    let out = &a.out.out;
    create_out(out)?;
    write_json(
        &CliConfig {
            command: "run".into(),
            manifest: Some(p.manifest.clone()),
            out: out.clone(),
            seed: Some(p.seed),
            paradigm: Some(p.paradigm),
            scheme: Some(p.scheme),
            models: vec![a.model],
            windows_s: vec![a.window],
            hops: vec![a.hop],
            drop_habituation: Some(!p.keep_habituation),
            train: Some(train),
            extra: BTreeMap::new(),
        },
        &out.join("run_config.json"),
    )?;

    let records = load_prepared(&p.manifest, !p.keep_habituation)?;
    let features = extract_all(&records, &config)?;
    let spec = ClassifierSpec::new(a.model, p.seed);
    let eval = evaluate(&features, &spec, p.scheme, p.paradigm, &train, p.seed)?;
    let (verdict, reasons) = combine_audits(&eval.audit(&features)?);

    let report = RunReport {
        marker: p.scheme.is_leaky_baseline().then(|| "LEAKY-BASELINE".to_string()),
        leaky_baseline: p.scheme.is_leaky_baseline(),
        model: a.model,
        scheme: p.scheme,
        scheme_label: p.scheme.report_label().into(),
        paradigm: p.paradigm,
        seed: p.seed,
        window_s: a.window,
        hop: a.hop,
        mean_accuracy: eval.mean_accuracy,
        per_subject: eval.per_subject(),
        audit: AuditSummary { verdict, reasons },
    };
    write_json(&report, &out.join("report.json"))?;
    write_json(
        &AuditBundle {
            manifest: fs::canonicalize(&p.manifest).map_err(|e| Error::io(&p.manifest, e))?,
            window_s: a.window,
            hop: a.hop,
            drop_habituation: !p.keep_habituation,
            descriptors: eval.folds.into_iter().map(|f| f.descriptor).collect(),
        },
        &out.join("run_descriptor.json"),
    )?;
    if report.leaky_baseline {
        println!("*** LEAKY-BASELINE: per-record standardization leaks held-out statistics ***");
    }
    println!(
        "{} {} {}: mean accuracy {:.4} (audit {:?})",
        a.model,
        p.paradigm_label(),
        p.scheme.report_label(),
        report.mean_accuracy,
        report.audit.verdict
    );
    Ok(EXIT_OK)
}

impl PipelineArgs {
    fn paradigm_label(&self) -> &'static str {
        match self.paradigm {
            Paradigm::LeaveOneOut => "loso",
            Paradigm::CommonSubject => "common-subject",
            Paradigm::SubjectSpecific => "subject-specific",
        }
    }
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<i32> {
    let p = &a.pipeline;
    let train = a.train.config()?;
    let windows = if a.windows.is_empty() { DEFAULT_WINDOWS_S.to_vec() } else { a.windows.clone() };
    let hops = if a.hops.is_empty() { DEFAULT_HOPS.to_vec() } else { a.hops.clone() };
    let specs = a.models.iter().map(|&k| ClassifierSpec::new(k, p.seed)).collect();
    let mut grid = SweepGrid::new(windows, hops, specs, p.scheme, p.paradigm)?;
    grid.drop_habituation = !p.keep_habituation;
    let out = &a.out.out;
    create_out(out)?;
    let mut extra = BTreeMap::new();
    extra.insert("jobs".into(), a.jobs.to_string());
    write_json(
        &CliConfig {
            command: "sweep".into(),
            manifest: Some(p.manifest.clone()),
            out: out.clone(),
            seed: Some(p.seed),
            paradigm: Some(p.paradigm),
            scheme: Some(p.scheme),
            models: a.models.clone(),
            windows_s: grid.windows_s.clone(),
            hops: grid.hops.clone(),
            drop_habituation: Some(grid.drop_habituation),
            train: Some(train),
            extra,
        },
        &out.join("run_config.json"),
    )?;

    let records = DatasetManifest::load(&p.manifest)?.load_records()?;
    let results = run_sweep(&records, &grid, &train, p.seed, a.jobs)?;
    for r in &results {
        let name = r.model.short_name();
        emit_heatmap(r, &out.join(format!("heatmap_{name}.csv")))?;
        write_json(&r.report(), &out.join(format!("summary_{name}.json")))?;
    }
    let table = format_table(&best_accuracy_table(&results)?);
    let path = out.join("best_accuracy_table.csv");
    fs::write(&path, &table).map_err(|e| Error::io(&path, e))?;
    print!("{table}");
    Ok(EXIT_OK)
}

pub fn cmd_audit(a: &AuditArgs) -> Result<i32> {
    let (bundle, features) = match (&a.descriptor, &a.manifest) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let bundle: AuditBundle = serde_json::from_str(&text)
                .map_err(|e| Error::IncompleteMetadata(format!("{}: {e}", path.display())))?;
            let config = SpectrogramConfig::new(bundle.window_s, bundle.hop)?;
            let features = extract_all(&load_prepared(&bundle.manifest, bundle.drop_habituation)?, &config)?;
            (bundle, features)
        }
        (None, Some(manifest)) => direct_bundle(a, manifest)?,
        (None, None) => {
            return Err(Error::IncompleteMetadata(
                "audit needs --descriptor or --manifest".into(),
            ))
        }
    };
    if bundle.descriptors.is_empty() {
        return Err(Error::IncompleteMetadata("descriptor lists no runs".into()));
    }
    let reports = bundle
        .descriptors
        .iter()
        .map(|d| audit_leakage(d, &features))
        .collect::<Result<Vec<_>>>()?;
    let (verdict, reasons) = combine_audits(&reports);
    let out = &a.out.out;
    create_out(out)?;
    write_json(
        &CliConfig {
            command: "audit".into(),
            manifest: Some(bundle.manifest.clone()),
            out: out.clone(),
            seed: a.descriptor.is_none().then_some(a.seed),
            paradigm: a.descriptor.is_none().then_some(a.paradigm),
            scheme: a.descriptor.is_none().then_some(a.scheme),
            windows_s: vec![bundle.window_s],
            hops: vec![bundle.hop],
            drop_habituation: Some(bundle.drop_habituation),
            ..Default::default()
        },
        &out.join("run_config.json"),
    )?;
    write_json(
        &AuditSummary {
            verdict,
            reasons: reasons.clone(),
        },
        &out.join("audit_report.json"),
    )?;
    match verdict {
        Verdict::Clean => {
            println!("CLEAN");
            Ok(EXIT_OK)
        }
        Verdict::Leaky => {
            println!("LEAKY: {}", reasons.join("; "));
            Ok(EXIT_LEAKY)
        }
    }
}

/// Builds the splits and standardization of a pipeline without training.
fn direct_bundle(a: &AuditArgs, manifest: &Path) -> Result<(AuditBundle, FeatureSet)> {
    let config = SpectrogramConfig::new(a.window, a.hop)?;
    let features = extract_all(&load_prepared(manifest, !a.keep_habituation)?, &config)?;
    let splits = match a.paradigm {
        Paradigm::LeaveOneOut => features
            .subjects()
            .into_iter()
            .map(|s| split_leave_one_out(&features, s))
            .collect::<Result<Vec<_>>>()?,
        Paradigm::SubjectSpecific => features
            .subjects()
            .into_iter()
            .map(|s| split_subject_specific(&features, s, DEFAULT_TRAIN_FRACTION, a.seed, a.with_validation))
            .collect::<Result<Vec<_>>>()?,
        Paradigm::CommonSubject => vec![split_common_subject(
            &features,
            DEFAULT_TRAIN_FRACTION,
            a.seed,
            a.with_validation,
        )?],
    };
    let descriptors = splits
        .into_iter()
        .map(|split| {
            Ok(RunDescriptor {
                scheme: Some(a.scheme),
                params: fit_scheme(&features, &split, a.scheme)?,
                split: Some(split),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let bundle = AuditBundle {
        manifest: manifest.to_path_buf(),
        window_s: a.window,
        hop: a.hop,
        drop_habituation: !a.keep_habituation,
        descriptors,
    };
    Ok((bundle, features))
}
