//! Labeled tabular data: ingestion, stratified folds, scaling and
//! synthetic planted-feature benchmarks.

use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("empty input: no data rows")]
    Empty,
    #[error("row {row}: expected {expected} columns, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {col}: cannot parse {value:?} as a number")]
    BadNumber { row: usize, col: usize, value: String },
    #[error("row {row}, column {col}: non-finite value")]
    NonFinite { row: usize, col: usize },
    #[error("label column {0} not found")]
    UnknownLabelColumn(String),
    #[error("dataset has a single class; at least two are required")]
    SingleClass,
    #[error("{n_samples} samples cannot cover {n_classes} classes (need at least 2 per class)")]
    TooFewSamples { n_samples: usize, n_classes: usize },
    #[error("label {label} outside 0..{n_classes}")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("class {0} has no samples")]
    MissingClass(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cannot build {k} folds from {n_samples} samples")]
    TooManyFolds { k: usize, n_samples: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Which CSV column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LabelColumn {
    #[default]
    Last,
    Named(String),
    Index(usize),
}

impl FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(if s.eq_ignore_ascii_case("last") {
            LabelColumn::Last
        } else if let Ok(i) = s.parse::<usize>() {
            LabelColumn::Index(i)
        } else {
            LabelColumn::Named(s.to_string())
        })
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Last => f.write_str("last"),
            LabelColumn::Named(n) => f.write_str(n),
            LabelColumn::Index(i) => write!(f, "{i}"),
        }
    }
}

/// Sample-major real matrix with dense integer class labels.
///
/// Constructed datasets always contain every class. Row subsets produced by
/// [`Dataset::subset_rows`] keep the parent's class count and may lack a
/// class (small test folds).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    n_samples: usize,
    n_features: usize,
    n_classes: usize,
    feature_names: Option<Vec<String>>,
    class_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from rows, validating every invariant.
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Result<Self, DataError> {
        let n_samples = rows.len();
        if n_samples == 0 {
            return Err(DataError::Empty);
        }
        if labels.len() != n_samples {
            return Err(DataError::Shape(format!("{} rows but {} labels", n_samples, labels.len())));
        }
        let n_features = rows[0].len();
        let mut features = Vec::with_capacity(n_samples * n_features);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n_features {
                return Err(DataError::RaggedRow { row: r, expected: n_features, found: row.len() });
            }
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(DataError::NonFinite { row: r, col: c });
                }
            }
            features.extend_from_slice(row);
        }
        let class_names = (0..n_classes).map(|c| c.to_string()).collect();
        Self::from_parts(features, labels, n_features, n_classes, None, class_names)
    }

    fn from_parts(
        features: Vec<f64>,
        labels: Vec<usize>,
        n_features: usize,
        n_classes: usize,
        feature_names: Option<Vec<String>>,
        class_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let n_samples = labels.len();
        if n_classes < 2 {
            return Err(DataError::SingleClass);
        }
        let mut counts = vec![0usize; n_classes];
        for &l in &labels {
            if l >= n_classes {
                return Err(DataError::LabelOutOfRange { label: l, n_classes });
            }
            counts[l] += 1;
        }
        if let Some(c) = counts.iter().position(|&c| c == 0) {
            return Err(DataError::MissingClass(c));
        }
        if n_samples < 2 * n_classes {
            return Err(DataError::TooFewSamples { n_samples, n_classes });
        }
        Ok(Self { features, labels, n_samples, n_features, n_classes, feature_names, class_names })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Original class identifiers, indexed by dense class id.
    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.n_features + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_samples).map(|i| self.value(i, j)).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order. The result may lack classes.
    pub fn subset_rows(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_samples: indices.len(),
            n_features: self.n_features,
            n_classes: self.n_classes,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// Columns at `indices`, in that order.
    pub fn select_features(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(self.n_samples * indices.len());
        for i in 0..self.n_samples {
            let row = self.row(i);
            features.extend(indices.iter().map(|&j| row[j]));
        }
        Dataset {
            features,
            labels: self.labels.clone(),
            n_samples: self.n_samples,
            n_features: indices.len(),
            n_classes: self.n_classes,
            feature_names: self.feature_names.as_ref().map(|names| indices.iter().map(|&j| names[j].clone()).collect()),
            class_names: self.class_names.clone(),
        }
    }

    fn map_values(&self, mut f: impl FnMut(usize, f64) -> f64) -> Dataset {
        let d = self.n_features;
        let features = self.features.iter().enumerate().map(|(k, &v)| f(k % d, v)).collect();
        Dataset { features, ..self.clone() }
    }
}

fn is_numeric(cell: &str) -> bool {
    cell.trim().parse::<f64>().is_ok()
}

/// Loads a comma-separated file. See [`parse_csv`].
pub fn load_csv(path: impl AsRef<Path>, label: &LabelColumn) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    parse_csv(file, label)
}

/// Parses comma-separated data.
///
/// A header row is present iff the first row has a non-numeric cell outside
/// the label column. Labels are mapped to dense ids in first-appearance
/// order. Error rows are reported as 0-based record indices, counting the
/// header when present.
pub fn parse_csv(reader: impl Read, label: &LabelColumn) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let records = rdr.records().collect::<Result<Vec<_>, _>>()?;
    let records: Vec<_> = records.into_iter().enumerate().filter(|(_, r)| !(r.len() == 1 && r[0].is_empty())).collect();
    let Some((_, first)) = records.first() else {
        return Err(DataError::Empty);
    };
    let n_cols = first.len();
    if n_cols < 2 {
        return Err(DataError::Shape("need at least one feature column and one label column".into()));
    }

    let label_col = match label {
        LabelColumn::Last => n_cols - 1,
        LabelColumn::Index(i) if *i < n_cols => *i,
        LabelColumn::Index(i) => return Err(DataError::UnknownLabelColumn(i.to_string())),
        LabelColumn::Named(name) => {
            first.iter().position(|c| c == name).ok_or_else(|| DataError::UnknownLabelColumn(name.clone()))?
        }
    };
    let has_header = matches!(label, LabelColumn::Named(_))
        || first.iter().enumerate().any(|(c, cell)| c != label_col && !is_numeric(cell));

    let feature_names = has_header.then(|| {
        first.iter().enumerate().filter(|&(c, _)| c != label_col).map(|(_, s)| s.to_string()).collect::<Vec<_>>()
    });
    let body = if has_header { &records[1..] } else { &records[..] };
    if body.is_empty() {
        return Err(DataError::Empty);
    }

    let n_features = n_cols - 1;
    let mut features = Vec::with_capacity(body.len() * n_features);
    let mut labels = Vec::with_capacity(body.len());
    let mut class_names: Vec<String> = Vec::new();
    for (row, record) in body {
        if record.len() != n_cols {
            return Err(DataError::RaggedRow { row: *row, expected: n_cols, found: record.len() });
        }
        for (col, cell) in record.iter().enumerate() {
            if col == label_col {
                let id = match class_names.iter().position(|c| c == cell) {
                    Some(id) => id,
                    None => {
                        class_names.push(cell.to_string());
                        class_names.len() - 1
                    }
                };
                labels.push(id);
            } else {
                let v: f64 =
                    cell.parse().map_err(|_| DataError::BadNumber { row: *row, col, value: cell.to_string() })?;
                if !v.is_finite() {
                    return Err(DataError::NonFinite { row: *row, col });
                }
                features.push(v);
            }
        }
    }
    if class_names.len() < 2 {
        return Err(DataError::SingleClass);
    }
    let n_classes = class_names.len();
    Dataset::from_parts(features, labels, n_features, n_classes, feature_names, class_names)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FoldKind {
    OuterTest,
    InnerFitness,
}

/// Stratified assignment of samples to folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub fold_of: Vec<usize>,
    pub n_folds: usize,
    pub kind: FoldKind,
}

impl FoldPlan {
    /// (training indices, held-out indices) for `fold`.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &f) in self.fold_of.iter().enumerate() {
            if f == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

/// Stratified k-fold assignment.
///
/// Each class's samples are shuffled and dealt round-robin; the dealing
/// position carries over from one class to the next so that classes smaller
/// than `k` spill into different folds instead of all landing in fold 0.
pub fn stratified_folds(d: &Dataset, k: usize, seed: u64, kind: FoldKind) -> Result<FoldPlan, DataError> {
    if k < 2 {
        return Err(DataError::InvalidParameter(format!("fold count {k} < 2")));
    }
    if k > d.n_samples() {
        return Err(DataError::TooManyFolds { k, n_samples: d.n_samples() });
    }
    let mut rng = rng::stream(seed, &[0xF01D, kind as u64, k as u64]);
    let mut fold_of = vec![0; d.n_samples()];
    let mut next = 0;
    for class in 0..d.n_classes() {
        let mut members: Vec<usize> = (0..d.n_samples()).filter(|&i| d.labels()[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            fold_of[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldPlan { fold_of, n_folds: k, kind })
}

/// Per-feature affine map onto [0, 1] fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub const EXTRAPOLATION_CLAMP: (f64, f64) = (-0.5, 1.5);

impl MinMaxScaler {
    pub fn fit(train: &Dataset) -> Self {
        let d = train.n_features();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for i in 0..train.n_samples() {
            for (j, &v) in train.row(i).iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Self { min, max }
    }

    fn map(&self, j: usize, v: f64) -> f64 {
        let range = self.max[j] - self.min[j];
        if range > 0.0 {
            (v - self.min[j]) / range
        } else {
            0.0
        }
    }

    /// Applies the fitted map to the data it was fitted on.
    pub fn transform_train(&self, train: &Dataset) -> Dataset {
        train.map_values(|j, v| self.map(j, v).clamp(0.0, 1.0))
    }

    /// Applies the fitted map to unseen data, bounding extrapolation.
    pub fn transform(&self, other: &Dataset) -> Dataset {
        let (lo, hi) = EXTRAPOLATION_CLAMP;
        other.map_values(|j, v| self.map(j, v).clamp(lo, hi))
    }
}

/// Fits min-max scaling on `train` and applies it to `train` and `others`.
pub fn minmax_scale_fit_apply(train: &Dataset, others: &[&Dataset]) -> (Dataset, Vec<Dataset>, MinMaxScaler) {
    let scaler = MinMaxScaler::fit(train);
    let scaled_train = scaler.transform_train(train);
    let scaled_others = others.iter().map(|o| scaler.transform(o)).collect();
    (scaled_train, scaled_others, scaler)
}

/// Planted-feature benchmark.
///
/// Labels cycle through the classes so every class is equally represented.
/// Informative features are Gaussian with unit variance and class means
/// spaced `class_shift` apart (centred on zero); all other features are
/// standard normal noise. Returns the sorted informative indices.
pub fn generate_synthetic(
    n_samples: usize,
    n_features: usize,
    n_informative: usize,
    n_classes: usize,
    class_shift: f64,
    seed: u64,
) -> Result<(Dataset, Vec<usize>), DataError> {
    if n_informative > n_features {
        return Err(DataError::InvalidParameter(format!(
            "n_informative {n_informative} exceeds n_features {n_features}"
        )));
    }
    if !(class_shift >= 0.0 && class_shift.is_finite()) {
        return Err(DataError::InvalidParameter(format!("class_shift {class_shift} must be >= 0")));
    }
    if n_features == 0 {
        return Err(DataError::InvalidParameter("n_features must be positive".into()));
    }
    let mut rng = rng::stream(seed, &[0x5EED]);
    let mut informative: Vec<usize> = rand::seq::index::sample(&mut rng, n_features, n_informative).into_vec();
    informative.sort_unstable();
    let mut is_informative = vec![false; n_features];
    for &j in &informative {
        is_informative[j] = true;
    }

    let labels: Vec<usize> = (0..n_samples).map(|i| i % n_classes.max(1)).collect();
    let centre = (n_classes as f64 - 1.0) / 2.0;
    let mut features = Vec::with_capacity(n_samples * n_features);
    for &label in &labels {
        let mean = (label as f64 - centre) * class_shift;
        for &inf in &is_informative {
            let z: f64 = StandardNormal.sample(&mut rng);
            features.push(if inf { mean + z } else { z });
        }
    }
    let class_names = (0..n_classes).map(|c| c.to_string()).collect();
    let data = Dataset::from_parts(features, labels, n_features, n_classes, None, class_names)?;
    Ok((data, informative))
}
