//! End-to-end evaluation: paradigm runs, (window × hop) sweeps, heatmaps,
//! and the best-accuracy table.
//!
//! Every sweep cell gets its own seed,
//! `mix_seed([master_seed, window_s, hop, table_rank(model)])` (see
//! [`crate::seed`]), used for the classifier and for random splits. Cells
//! are independent, so they may run on a worker pool without changing any
//! result.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::RawRecord;
use crate::error::{Error, Result};
use crate::features::{extract_all, FeatureSet, SpectrogramConfig};
use crate::models::{accuracy, fit, predict, ClassifierSpec, ModelKind};
use crate::seed::mix_seed;
use crate::splits::{
    cap_40min, drop_habituation_records, split_common_subject, split_leave_one_out,
    split_subject_specific, DatasetSplit, Paradigm,
};
use crate::standardize::{audit_leakage, standardize_split, LeakageReport, RunDescriptor, Scheme, Verdict};
use crate::training::TrainConfig;

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
pub const DEFAULT_WINDOWS_S: [u32; 6] = [4, 8, 16, 24, 32, 40];
pub const DEFAULT_HOPS: [usize; 6] = [8, 32, 64, 128, 192, 384];

/// Result of one train/test fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    /// Held-out (or, for subject-specific runs, the only) subject; `None`
    /// for a common-subject split.
    pub subject: Option<u32>,
    pub accuracy: f64,
    pub n_test: usize,
    pub descriptor: RunDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub paradigm: Paradigm,
    pub scheme: Scheme,
    pub model: ModelKind,
    /// Unweighted mean of the fold accuracies.
    pub mean_accuracy: f64,
    pub folds: Vec<Fold>,
}

impl Evaluation {
    /// Fold accuracies keyed by subject id, or `"all"` for a
    /// common-subject split.
    pub fn per_subject(&self) -> BTreeMap<String, f64> {
        self.folds
            .iter()
            .map(|f| {
                let key = f.subject.map_or_else(|| "all".to_string(), |s| s.to_string());
                (key, f.accuracy)
            })
            .collect()
    }

    /// Audits every fold's standardization.
    pub fn audit(&self, features: &FeatureSet) -> Result<Vec<LeakageReport>> {
        self.folds
            .iter()
            .map(|f| audit_leakage(&f.descriptor, features))
            .collect()
    }
}

/// Overall verdict over several fold reports, with the union of reasons.
pub fn combine_audits(reports: &[LeakageReport]) -> (Verdict, Vec<String>) {
    let mut reasons: Vec<String> = reports.iter().flat_map(|r| r.reasons.clone()).collect();
    reasons.sort();
    reasons.dedup();
    let verdict = if reports.iter().any(|r| r.verdict == Verdict::Leaky) {
        Verdict::Leaky
    } else {
        Verdict::Clean
    };
    (verdict, reasons)
}

/// Drops habituation records (optionally) and caps every record at 40
/// minutes.
pub fn prepare_records(records: Vec<RawRecord>, drop_habituation: bool) -> Result<Vec<RawRecord>> {
    let records = if drop_habituation {
        drop_habituation_records(records)?
    } else {
        records
    };
    Ok(records.iter().map(cap_40min).collect())
}

fn run_fold(
    features: &FeatureSet,
    split: DatasetSplit,
    spec: &ClassifierSpec,
    scheme: Scheme,
    config: &TrainConfig,
) -> Result<Fold> {
    if split.test.is_empty() {
        return Err(Error::Empty("test set".into()));
    }
    let data = standardize_split(features, &split, scheme)?;
    let y_train = features.labels(&split.train);
    let y_val = features.labels(&split.validation);
    let y_test = features.labels(&split.test);
    let model = fit(
        spec,
        (data.train.view(), &y_train),
        (data.validation.view(), &y_val),
        config,
    )?;
    let pred = predict(&model, data.test.view())?;
    Ok(Fold {
        subject: split.test_subject,
        accuracy: accuracy(&pred.labels, &y_test)?,
        n_test: y_test.len(),
        descriptor: RunDescriptor {
            scheme: Some(scheme),
            split: Some(split),
            params: data.params,
        },
    })
}

/// Evaluates `spec` under `paradigm`.
///
/// Leave-one-out iterates the held-out subject; subject-specific iterates
/// the single subject; common-subject makes one 80/20 split. Random splits
/// use `split_seed` and carve a validation set only for MLP kinds.
pub fn evaluate(
    features: &FeatureSet,
    spec: &ClassifierSpec,
    scheme: Scheme,
    paradigm: Paradigm,
    config: &TrainConfig,
    split_seed: u64,
) -> Result<Evaluation> {
    let subjects: Vec<u32> = features.subjects().into_iter().collect();
    let with_validation = spec.kind.is_mlp();
    let fold_spec = |subject: u32| ClassifierSpec {
        seed: mix_seed(&[spec.seed, subject as u64]),
        ..spec.clone()
    };
    let folds: Vec<Fold> = match paradigm {
        Paradigm::LeaveOneOut => {
            if subjects.len() < 2 {
                return Err(Error::TooFewSubjects {
                    needed: 2,
                    found: subjects.len(),
                });
            }
            subjects
                .par_iter()
                .map(|&s| run_fold(features, split_leave_one_out(features, s)?, &fold_spec(s), scheme, config))
                .collect::<Result<_>>()?
        }
        Paradigm::SubjectSpecific => subjects
            .par_iter()
            .map(|&s| {
                let split = split_subject_specific(features, s, DEFAULT_TRAIN_FRACTION, split_seed, with_validation)?;
                run_fold(features, split, &fold_spec(s), scheme, config)
            })
            .collect::<Result<_>>()?,
        Paradigm::CommonSubject => {
            let split = split_common_subject(features, DEFAULT_TRAIN_FRACTION, split_seed, with_validation)?;
            vec![run_fold(features, split, spec, scheme, config)?]
        }
    };
    let mean_accuracy = folds.iter().map(|f| f.accuracy).sum::<f64>() / folds.len() as f64;
    Ok(Evaluation {
        paradigm,
        scheme,
        model: spec.kind,
        mean_accuracy,
        folds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosoOutcome {
    pub mean_accuracy: f64,
    pub per_subject: BTreeMap<u32, f64>,
}

/// Leave-one-subject-out accuracy: one fold per subject, averaged
/// unweighted.
pub fn run_loso(
    features: &FeatureSet,
    spec: &ClassifierSpec,
    scheme: Scheme,
    config: &TrainConfig,
) -> Result<LosoOutcome> {
    let e = evaluate(features, spec, scheme, Paradigm::LeaveOneOut, config, spec.seed)?;
    Ok(LosoOutcome {
        mean_accuracy: e.mean_accuracy,
        per_subject: e
            .folds
            .iter()
            .map(|f| (f.subject.expect("loso folds name a subject"), f.accuracy))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub windows_s: Vec<u32>,
    pub hops: Vec<usize>,
    pub models: Vec<ClassifierSpec>,
    pub scheme: Scheme,
    pub paradigm: Paradigm,
    pub drop_habituation: bool,
}

impl SweepGrid {
    /// Sorts both axes ascending; rejects empty axes and duplicates.
    pub fn new(
        mut windows_s: Vec<u32>,
        mut hops: Vec<usize>,
        models: Vec<ClassifierSpec>,
        scheme: Scheme,
        paradigm: Paradigm,
    ) -> Result<Self> {
        if windows_s.is_empty() || hops.is_empty() || models.is_empty() {
            return Err(Error::Empty("sweep grid axes and model list must be non-empty".into()));
        }
        windows_s.sort_unstable();
        hops.sort_unstable();
        if windows_s.windows(2).any(|w| w[0] == w[1]) || hops.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::BadArgs("duplicate grid point".into()));
        }
        let mut kinds: Vec<ModelKind> = models.iter().map(|m| m.kind).collect();
        kinds.sort();
        if kinds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::BadArgs("model listed twice".into()));
        }
        Ok(Self {
            windows_s,
            hops,
            models,
            scheme,
            paradigm,
            drop_habituation: true,
        })
    }

    pub fn default_axes(models: Vec<ClassifierSpec>, scheme: Scheme, paradigm: Paradigm) -> Result<Self> {
        Self::new(DEFAULT_WINDOWS_S.to_vec(), DEFAULT_HOPS.to_vec(), models, scheme, paradigm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Ok {
        mean_accuracy: f64,
        per_subject: BTreeMap<String, f64>,
    },
    Error {
        message: String,
    },
}

impl Cell {
    pub fn accuracy(&self) -> Option<f64> {
        match self {
            Cell::Ok { mean_accuracy, .. } => Some(*mean_accuracy),
            Cell::Error { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCell {
    pub accuracy: f64,
    pub window_s: u32,
    pub hop: usize,
    /// Every hop at `window_s` that reaches the same accuracy, ascending.
    pub tied_hops: Vec<usize>,
}

/// Accuracy matrix of one model over the grid, rows = windows,
/// columns = hops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub model: ModelKind,
    pub scheme: Scheme,
    pub paradigm: Paradigm,
    pub master_seed: u64,
    pub windows_s: Vec<u32>,
    pub hops: Vec<usize>,
    pub cells: Vec<Vec<Cell>>,
}

impl SweepResult {
    /// Argmax over successful cells; ties go to the smaller window, then
    /// the smaller hop.
    pub fn best(&self) -> Option<BestCell> {
        let mut best: Option<(f64, usize, usize)> = None;
        for (wi, row) in self.cells.iter().enumerate() {
            for (hi, cell) in row.iter().enumerate() {
                if let Some(a) = cell.accuracy() {
                    if best.is_none_or(|(b, _, _)| a > b) {
                        best = Some((a, wi, hi));
                    }
                }
            }
        }
        let (acc, wi, hi) = best?;
        let tied_hops = self.cells[wi]
            .iter()
            .enumerate()
            .filter(|(_, c)| c.accuracy() == Some(acc))
            .map(|(h, _)| self.hops[h])
            .collect();
        Some(BestCell {
            accuracy: acc,
            window_s: self.windows_s[wi],
            hop: self.hops[hi],
            tied_hops,
        })
    }

    pub fn report(&self) -> SweepReport {
        let best = self.best();
        let per_subject = best
            .as_ref()
            .and_then(|b| {
                let wi = self.windows_s.iter().position(|&w| w == b.window_s)?;
                let hi = self.hops.iter().position(|&h| h == b.hop)?;
                match &self.cells[wi][hi] {
                    Cell::Ok { per_subject, .. } => Some(per_subject.clone()),
                    Cell::Error { .. } => None,
                }
            })
            .unwrap_or_default();
        SweepReport {
            model: self.model,
            scheme: self.scheme,
            scheme_label: self.scheme.report_label().to_string(),
            leaky_baseline: self.scheme.is_leaky_baseline(),
            paradigm: self.paradigm,
            seed: self.master_seed,
            best: best.map(|b| BestSummary {
                acc: b.accuracy,
                window: b.window_s,
                hop: b.hop,
            }),
            per_subject,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSummary {
    pub acc: f64,
    pub window: u32,
    pub hop: usize,
}

/// Per-sweep summary written next to each heatmap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub model: ModelKind,
    pub scheme: Scheme,
    pub scheme_label: String,
    pub leaky_baseline: bool,
    pub paradigm: Paradigm,
    pub seed: u64,
    pub best: Option<BestSummary>,
    pub per_subject: BTreeMap<String, f64>,
}

pub fn cell_seed(master: u64, window_s: u32, hop: usize, model: ModelKind) -> u64 {
    mix_seed(&[master, window_s as u64, hop as u64, model.table_rank() as u64])
}

/// Runs every (window, hop) cell for every model in the grid.
///
/// Records are prepared once (habituation drop, 40-minute cap); features
/// are extracted once per cell and shared by the models. A failing cell
/// is stored as [`Cell::Error`] and never affects other cells. `jobs`
/// bounds the worker pool (0 = rayon default).
pub fn run_sweep(
    records: &[RawRecord],
    grid: &SweepGrid,
    config: &TrainConfig,
    master_seed: u64,
    jobs: usize,
) -> Result<Vec<SweepResult>> {
    let records = prepare_records(records.to_vec(), grid.drop_habituation)?;
    let coords: Vec<(usize, usize)> = (0..grid.windows_s.len())
        .flat_map(|w| (0..grid.hops.len()).map(move |h| (w, h)))
        .collect();
    let run_cell = |&(wi, hi): &(usize, usize)| -> Vec<Cell> {
        let (window, hop) = (grid.windows_s[wi], grid.hops[hi]);
        let features = SpectrogramConfig::new(window, hop).and_then(|c| extract_all(&records, &c));
        grid.models
            .iter()
            .map(|spec| {
                let outcome = features.as_ref().map_err(|e| e.to_string()).and_then(|fs| {
                    let seed = cell_seed(master_seed, window, hop, spec.kind);
                    let spec = ClassifierSpec {
                        seed,
                        ..spec.clone()
                    };
                    evaluate(fs, &spec, grid.scheme, grid.paradigm, config, seed).map_err(|e| e.to_string())
                });
                match outcome {
                    Ok(e) => Cell::Ok {
                        mean_accuracy: e.mean_accuracy,
                        per_subject: e.per_subject(),
                    },
                    Err(message) => Cell::Error { message },
                }
            })
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::BadArgs(format!("worker pool: {e}")))?;
    let per_cell: Vec<Vec<Cell>> = pool.install(|| coords.par_iter().map(run_cell).collect());

    Ok(grid
        .models
        .iter()
        .enumerate()
        .map(|(m, spec)| {
            let mut cells = vec![Vec::with_capacity(grid.hops.len()); grid.windows_s.len()];
            for (&(wi, _), row) in coords.iter().zip(&per_cell) {
                cells[wi].push(row[m].clone());
            }
            SweepResult {
                model: spec.kind,
                scheme: grid.scheme,
                paradigm: grid.paradigm,
                master_seed,
                windows_s: grid.windows_s.clone(),
                hops: grid.hops.clone(),
                cells,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: ModelKind,
    pub best: Option<BestCell>,
}

/// One row per model with its best cell, in table order (forest, SVM,
/// boosting, DNN4, DNN6, then DNN4-small).
pub fn best_accuracy_table(results: &[SweepResult]) -> Result<Vec<TableRow>> {
    if results.is_empty() {
        return Err(Error::Empty("no sweep results".into()));
    }
    let mut rows: Vec<TableRow> = results
        .iter()
        .map(|r| TableRow {
            model: r.model,
            best: r.best(),
        })
        .collect();
    rows.sort_by_key(|r| r.model.table_rank());
    Ok(rows)
}

/// Renders the table as CSV; tied hops are joined with " and ".
pub fn format_table(rows: &[TableRow]) -> String {
    let mut s = String::from("model,best_accuracy,window_s,hop\n");
    for r in rows {
        match &r.best {
            Some(b) => {
                let hops: Vec<String> = b.tied_hops.iter().map(usize::to_string).collect();
                let _ = writeln!(
                    s,
                    "{},{:.6},{},{}",
                    r.model,
                    b.accuracy,
                    b.window_s,
                    hops.join(" and ")
                );
            }
            None => {
                let _ = writeln!(s, "{},ERR,,", r.model);
            }
        }
    }
    s
}

pub const HEATMAP_CORNER: &str = "window_s\\hop";

/// Heatmap CSV: header row of hops, one row per window, accuracies with
/// six decimals or `ERR`.
pub fn heatmap_csv(sweep: &SweepResult) -> Result<String> {
    if sweep.windows_s.is_empty() || sweep.hops.is_empty() {
        return Err(Error::Empty("sweep has no cells".into()));
    }
    let mut s = String::from(HEATMAP_CORNER);
    for h in &sweep.hops {
        let _ = write!(s, ",{h}");
    }
    s.push('\n');
    for (w, row) in sweep.windows_s.iter().zip(&sweep.cells) {
        let _ = write!(s, "{w}");
        for c in row {
            match c.accuracy() {
                Some(a) => {
                    let _ = write!(s, ",{a:.6}");
                }
                None => s.push_str(",ERR"),
            }
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn emit_heatmap(sweep: &SweepResult, path: &Path) -> Result<()> {
    let csv = heatmap_csv(sweep)?;
    fs::write(path, csv).map_err(|e| Error::io(path, e))
}

/// Parsed heatmap: window axis, hop axis, and cells (`None` for `ERR`).
pub type Heatmap = (Vec<u32>, Vec<usize>, Vec<Vec<Option<f64>>>);

pub fn parse_heatmap(text: &str) -> Result<Heatmap> {
    let bad = |m: &str| Error::BadShape(format!("heatmap: {m}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty"))?;
    let mut cols = header.split(',');
    if cols.next() != Some(HEATMAP_CORNER) {
        return Err(bad("missing corner label"));
    }
    let hops = cols
        .map(|h| h.parse().map_err(|_| bad("hop axis")))
        .collect::<Result<Vec<usize>>>()?;
    let mut windows = Vec::new();
    let mut cells = Vec::new();
    for line in lines {
        let mut parts = line.split(',');
        windows.push(
            parts
                .next()
                .and_then(|w| w.parse().ok())
                .ok_or_else(|| bad("window axis"))?,
        );
        let row = parts
            .map(|v| {
                if v == "ERR" {
                    Ok(None)
                } else {
                    v.parse().map(Some).map_err(|_| bad("cell"))
                }
            })
            .collect::<Result<Vec<Option<f64>>>>()?;
        if row.len() != hops.len() {
            return Err(bad("ragged row"));
        }
        cells.push(row);
    }
    Ok((windows, hops, cells))
}
