//! Run configuration, the outer cross-validation driver and report output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{minmax_scale_fit_apply, stratified_folds, DataError, Dataset, FoldKind, LabelColumn};
use crate::evaluation::{balanced_error, knn_predict, Evaluator, ObjectiveVector};
use crate::multitask::{
    self, ArchiveTrace, FitnessMode, Formulation, PoolSampling, TaskError, TransferEvent, TransferMode, TransferTrigger,
};
use crate::relevance::{remove_irrelevant, su_scores, LogBase, RelevanceMask};
use crate::rng;
use crate::search::NormDirection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub label_col: LabelColumn,
    pub seed: u64,
    pub max_iter: usize,
    /// Number of tasks including the original one.
    pub n_tasks: usize,
    pub theta: f64,
    pub rtp: f64,
    /// Generations without archive change before knowledge transfer.
    pub stagnation: usize,
    pub knn_k: usize,
    pub inner_folds: usize,
    pub outer_folds: usize,
    pub lambda: f64,
    pub removal: bool,
    pub formulations: Vec<Formulation>,
    pub transfer: TransferMode,
    pub fitness: FitnessMode,
    pub norm_dir: NormDirection,
    pub trigger: TransferTrigger,
    pub pool_sampling: PoolSampling,
    /// Mutate the transferred solution (`true`) or a copy of the receiving one.
    pub mutate_transferred: bool,
    pub phi: f64,
    pub eta: f64,
    pub n_bins: usize,
    /// Discretization of the second clustering task.
    pub coarse_bins: usize,
    pub relieff_neighbors: usize,
    pub log_base: LogBase,
    /// Overrides the size derived from the raw feature count.
    pub pop_size: Option<usize>,
    pub workers: usize,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            label_col: LabelColumn::Last,
            seed: 0,
            max_iter: 100,
            n_tasks: 5,
            theta: 0.6,
            rtp: 0.6,
            stagnation: 5,
            knn_k: 5,
            inner_folds: 5,
            outer_folds: 10,
            lambda: 0.2,
            removal: true,
            formulations: vec![Formulation::Filtering, Formulation::Clustering],
            transfer: TransferMode::Specific,
            fitness: FitnessMode::TaskSpecific,
            norm_dir: NormDirection::Inverted,
            trigger: TransferTrigger::Global,
            pool_sampling: PoolSampling::Concatenated,
            mutate_transferred: true,
            phi: 0.1,
            eta: 20.0,
            n_bins: 10,
            coarse_bins: 5,
            relieff_neighbors: 10,
            log_base: LogBase::Natural,
            pop_size: None,
            workers: 1,
            out: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("outer fold {fold}: {source}")]
    FoldData {
        fold: usize,
        #[source]
        source: DataError,
    },
    #[error("outer fold {fold}: {source}")]
    Task {
        fold: usize,
        #[source]
        source: TaskError,
    },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let fail = |msg: String| Err(ExperimentError::Config(msg));
        for (name, p) in [("theta", self.theta), ("rtp", self.rtp)] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} = {p} is outside [0, 1]"));
            }
        }
        for (name, k) in [("inner_folds", self.inner_folds), ("outer_folds", self.outer_folds)] {
            if k < 2 {
                return fail(format!("{name} = {k} must be at least 2"));
            }
        }
        for (name, v) in [
            ("n_tasks", self.n_tasks),
            ("knn_k", self.knn_k),
            ("workers", self.workers),
            ("relieff_neighbors", self.relieff_neighbors),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.n_bins < 2 || self.coarse_bins < 2 {
            return fail("bin counts must be at least 2".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda = {} must be a finite non-negative number", self.lambda));
        }
        if !(self.phi.is_finite() && self.eta.is_finite() && self.eta >= 0.0) {
            return fail("phi and eta must be finite, eta non-negative".into());
        }
        if self.pop_size == Some(0) {
            return fail("pop_size must be positive".into());
        }
        Ok(())
    }
}

/// One front member evaluated on its outer fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    /// Indices into the raw feature columns.
    pub selected: Vec<usize>,
    pub train: ObjectiveVector,
    /// Balanced accuracy on the held-out fold.
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub kept_features: Vec<usize>,
    pub solutions: Vec<SolutionRecord>,
    pub mean_acc: f64,
    pub best_acc: f64,
    pub mean_features: f64,
    pub transfer_events: Vec<TransferEvent>,
    /// Per generation, per task archive statistics.
    pub archive_trace: Vec<Vec<ArchiveTrace>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean_acc: f64,
    pub best_acc: f64,
    pub mean_features: f64,
    pub mean_kept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub seed: u64,
    pub folds: Vec<FoldRecord>,
    pub summary: Summary,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    /// Recomputes the summary from the fold records.
    pub fn summarize(folds: &[FoldRecord]) -> Summary {
        let n = folds.len().max(1) as f64;
        Summary {
            mean_acc: folds.iter().map(|f| f.mean_acc).sum::<f64>() / n,
            best_acc: folds.iter().map(|f| f.best_acc).sum::<f64>() / n,
            mean_features: folds.iter().map(|f| f.mean_features).sum::<f64>() / n,
            mean_kept: folds.iter().map(|f| f.kept_features.len() as f64).sum::<f64>() / n,
        }
    }

    /// Pretty JSON with the wall-clock field zeroed, for comparing runs.
    pub fn canonical_json(&self) -> String {
        let mut copy = self.clone();
        copy.wall_clock_seconds = 0.0;
        serde_json::to_string_pretty(&copy).expect("report serializes")
    }
}

const OUTER: u64 = 0x0C7E;
const SEARCH: u64 = 0x5EA2;

fn run_fold(
    data: &Dataset,
    train_idx: &[usize],
    test_idx: &[usize],
    fold: usize,
    config: &RunConfig,
) -> Result<FoldRecord, ExperimentError> {
    let fold_seed = rng::derive(config.seed, &[OUTER, fold as u64]);
    let train_raw = data.subset_rows(train_idx);
    let test_raw = data.subset_rows(test_idx);
    let (train, others, _) = minmax_scale_fit_apply(&train_raw, &[&test_raw]);
    let test = others.into_iter().next().expect("one held-out split");

    let (mask, su) = if config.removal {
        remove_irrelevant(&train, config.lambda, config.n_bins, config.log_base)
    } else {
        (RelevanceMask::keep_all(train.n_features()), su_scores(&train, config.n_bins))
    };
    let kept = mask.kept_indices;
    let train_k = train.select_features(&kept);
    let test_k = test.select_features(&kept);
    let su_k = su.subset(&kept);

    let plan = stratified_folds(&train_k, config.inner_folds, fold_seed, FoldKind::InnerFitness)
        .map_err(|source| ExperimentError::FoldData { fold, source })?;
    let evaluator = Evaluator::new(train_k, &plan, config.knn_k, config.theta);
    let search_seed = rng::derive(fold_seed, &[SEARCH]);
    let outcome = multitask::run(evaluator.data(), &su_k, data.n_features(), config, &evaluator, search_seed)
        .map_err(|source| ExperimentError::Task { fold, source })?;

    let mut front = outcome.front;
    front.sort_by(|a, b| {
        let (x, y) = (a.obj(), b.obj());
        x.feature_rate.total_cmp(&y.feature_rate).then(x.error_rate.total_cmp(&y.error_rate))
    });
    let solutions: Vec<SolutionRecord> = front
        .iter()
        .map(|ind| {
            let cols = ind.selection(config.theta).indices();
            let predicted = knn_predict(evaluator.data(), &test_k, &cols, config.knn_k);
            let accuracy = 1.0 - balanced_error(test_k.labels(), &predicted, test_k.n_classes());
            SolutionRecord {
                selected: cols.iter().map(|&c| kept[c]).collect(),
                train: *ind.obj(),
                test_accuracy: accuracy,
            }
        })
        .collect();

    let n = solutions.len().max(1) as f64;
    Ok(FoldRecord {
        fold,
        n_train: train_idx.len(),
        n_test: test_idx.len(),
        mean_acc: solutions.iter().map(|s| s.test_accuracy).sum::<f64>() / n,
        best_acc: solutions.iter().map(|s| s.test_accuracy).fold(0.0, f64::max),
        mean_features: solutions.iter().map(|s| s.selected.len() as f64).sum::<f64>() / n,
        kept_features: kept,
        solutions,
        transfer_events: outcome.state.transfer_events,
        archive_trace: outcome.trace,
    })
}

/// Outer stratified cross-validation of the full pipeline on `data`.
///
/// Each outer fold scales and filters on its training split only, searches
/// with inner cross-validated fitness, and scores every front member on the
/// held-out split with KNN trained on the whole training split.
pub fn run_experiment(data: &Dataset, config: &RunConfig) -> Result<RunReport, ExperimentError> {
    config.validate()?;
    let start = Instant::now();
    let outer = stratified_folds(data, config.outer_folds, config.seed, FoldKind::OuterTest)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    let folds: Vec<FoldRecord> = pool.install(|| {
        (0..outer.n_folds)
            .into_par_iter()
            .map(|f| {
                let (train, test) = outer.split(f);
                run_fold(data, &train, &test, f, config)
            })
            .collect::<Result<_, _>>()
    })?;
    Ok(RunReport {
        config: config.clone(),
        seed: config.seed,
        summary: RunReport::summarize(&folds),
        folds,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Loads `config.data` and runs the experiment on it.
pub fn run_from_config(config: &RunConfig) -> Result<RunReport, ExperimentError> {
    let path = config.data.as_ref().ok_or_else(|| ExperimentError::Config("no dataset path given".into()))?;
    let data = crate::dataset::load_csv(path, &config.label_col)?;
    run_experiment(&data, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    #[default]
    Json,
    CsvSummary,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv-summary" | "csv" => Ok(ReportFormat::CsvSummary),
            other => Err(format!("unknown format {other:?}; expected json or csv-summary")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot serialize report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot write {}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

#[derive(Serialize)]
struct CsvRow {
    fold: usize,
    mean_acc: f64,
    best_acc: f64,
    mean_features: f64,
    n_solutions: usize,
}

/// Writes the report as pretty JSON or as a one-row-per-fold CSV summary.
pub fn write_report<W: Write>(report: &RunReport, writer: W, format: ReportFormat) -> Result<(), ReportError> {
    match format {
        ReportFormat::Json => {
            let mut w = writer;
            serde_json::to_writer_pretty(&mut w, report)?;
            w.write_all(b"\n").map_err(|source| ReportError::Io { path: PathBuf::new(), source })?;
        }
        ReportFormat::CsvSummary => {
            let mut w = csv::Writer::from_writer(writer);
            for f in &report.folds {
                w.serialize(CsvRow {
                    fold: f.fold,
                    mean_acc: f.mean_acc,
                    best_acc: f.best_acc,
                    mean_features: f.mean_features,
                    n_solutions: f.solutions.len(),
                })
                .map_err(|source| ReportError::Csv { path: PathBuf::new(), source })?;
            }
            w.flush().map_err(|source| ReportError::Io { path: PathBuf::new(), source })?;
        }
    }
    Ok(())
}

/// [`write_report`] into a new file at `path`.
pub fn emit_report(report: &RunReport, path: &Path, format: ReportFormat) -> Result<(), ReportError> {
    let file = File::create(path).map_err(|source| ReportError::Io { path: path.to_path_buf(), source })?;
    let mut w = BufWriter::new(file);
    let named = |e: ReportError| match e {
        ReportError::Io { source, .. } => ReportError::Io { path: path.to_path_buf(), source },
        ReportError::Csv { source, .. } => ReportError::Csv { path: path.to_path_buf(), source },
        other => other,
    };
    write_report(report, &mut w, format).map_err(named)?;
    w.flush().map_err(|source| ReportError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!((c.theta, c.rtp, c.n_tasks, c.knn_k, c.max_iter), (0.6, 0.6, 5, 5, 100));
        assert_eq!((c.lambda, c.inner_folds, c.outer_folds, c.stagnation), (0.2, 5, 10, 5));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn invalid_configs() {
        assert!(RunConfig { rtp: 1.5, ..RunConfig::default() }.validate().is_err());
        assert!(RunConfig { outer_folds: 1, ..RunConfig::default() }.validate().is_err());
        assert!(RunConfig { theta: -0.1, ..RunConfig::default() }.validate().is_err());
    }

    #[test]
    fn format_names() {
        assert_eq!("csv-summary".parse::<ReportFormat>().unwrap(), ReportFormat::CsvSummary);
        assert!("xml".parse::<ReportFormat>().is_err());
    }
}
