//! Python bindings.

use fsemt::clustering::{correlation_cluster, wo_expand, wo_reduce, ClusterMap};
use fsemt::dataset::{self, stratified_folds, FoldKind};
use fsemt::evaluation::Evaluator;
use fsemt::experiment::{self, RunConfig};
use fsemt::filtering::{self, FeatureScores, FilterMethod};
use fsemt::relevance::{self, LogBase};
use fsemt::search;
use fsemt::LabelColumn;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn data_err(e: fsemt::DataError) -> PyErr {
    match e {
        fsemt::DataError::Io { .. } => PyIOError::new_err(e.to_string()),
        other => value_err(other),
    }
}

/// Labelled sample-major feature matrix.
#[pyclass(name = "Dataset", module = "fsemt_py", frozen)]
struct PyDataset {
    inner: fsemt::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Dataset(rows, labels, n_classes=None); labels are 0-based class ids.
    #[new]
    #[pyo3(signature = (rows, labels, n_classes=None))]
    fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: Option<usize>) -> PyResult<Self> {
        let n_classes = n_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        let inner = fsemt::Dataset::new(rows, labels, n_classes).map_err(data_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.inner.class_names().to_vec()
    }

    #[getter]
    fn feature_names(&self) -> Option<Vec<String>> {
        self.inner.feature_names().map(<[String]>::to_vec)
    }

    fn row(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.n_samples() {
            return Err(value_err(format!("row {i} out of range")));
        }
        Ok(self.inner.row(i).to_vec())
    }

    fn column(&self, j: usize) -> PyResult<Vec<f64>> {
        if j >= self.inner.n_features() {
            return Err(value_err(format!("column {j} out of range")));
        }
        Ok(self.inner.column(j))
    }

    fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.inner.n_samples()).map(|i| self.inner.row(i).to_vec()).collect()
    }

    fn select_features(&self, indices: Vec<usize>) -> PyResult<Self> {
        if let Some(&bad) = indices.iter().find(|&&j| j >= self.inner.n_features()) {
            return Err(value_err(format!("feature {bad} out of range")));
        }
        Ok(Self { inner: self.inner.select_features(&indices) })
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n_samples={}, n_features={}, n_classes={})",
            self.inner.n_samples(),
            self.inner.n_features(),
            self.inner.n_classes()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (path, label_col="last"))]
fn load_csv(path: &str, label_col: &str) -> PyResult<PyDataset> {
    let label: LabelColumn = label_col.parse().expect("label selector parsing is infallible");
    Ok(PyDataset { inner: dataset::load_csv(path, &label).map_err(data_err)? })
}

/// Returns (dataset, informative feature indices).
#[pyfunction]
#[pyo3(signature = (n_samples, n_features, n_informative, n_classes, class_shift, seed=0))]
fn generate_synthetic(
    n_samples: usize,
    n_features: usize,
    n_informative: usize,
    n_classes: usize,
    class_shift: f64,
    seed: u64,
) -> PyResult<(PyDataset, Vec<usize>)> {
    let (inner, informative) =
        dataset::generate_synthetic(n_samples, n_features, n_informative, n_classes, class_shift, seed)
            .map_err(data_err)?;
    Ok((PyDataset { inner }, informative))
}

/// Min-max scales a dataset onto [0, 1] per feature.
#[pyfunction]
fn minmax_scale(d: &PyDataset) -> PyDataset {
    let (inner, _, _) = dataset::minmax_scale_fit_apply(&d.inner, &[]);
    PyDataset { inner }
}

#[pyfunction]
#[pyo3(signature = (values, n_bins=10))]
fn discretize(values: Vec<f64>, n_bins: usize) -> Vec<usize> {
    relevance::discretize_column(&values, n_bins)
}

#[pyfunction]
fn symmetric_uncertainty(x: Vec<usize>, y: Vec<usize>) -> PyResult<f64> {
    relevance::symmetric_uncertainty(&x, &y).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (d, n_bins=10))]
fn su_scores(py: Python<'_>, d: &PyDataset, n_bins: usize) -> Vec<f64> {
    py.detach(|| relevance::su_scores(&d.inner, n_bins).su_with_class)
}

/// Returns (kept indices, threshold, class SU of every feature).
#[pyfunction]
#[pyo3(signature = (d, lam=0.2, n_bins=10))]
fn remove_irrelevant(py: Python<'_>, d: &PyDataset, lam: f64, n_bins: usize) -> (Vec<usize>, f64, Vec<f64>) {
    let (mask, su) = py.detach(|| relevance::remove_irrelevant(&d.inner, lam, n_bins, LogBase::Natural));
    (mask.kept_indices, mask.threshold_used, su.su_with_class)
}

#[pyfunction]
#[pyo3(signature = (d, n_neighbors=10))]
fn relieff_scores(py: Python<'_>, d: &PyDataset, n_neighbors: usize) -> Vec<f64> {
    py.detach(|| filtering::relieff_scores(&d.inner, n_neighbors).scores)
}

#[pyfunction]
#[pyo3(signature = (d, n_bins=10))]
fn chi_square_scores(py: Python<'_>, d: &PyDataset, n_bins: usize) -> Vec<f64> {
    py.detach(|| filtering::chi_square_scores(&d.inner, n_bins).scores)
}

#[pyfunction]
fn knee_point_mask(scores: Vec<f64>) -> Vec<bool> {
    filtering::knee_point_mask(&FeatureScores::new(FilterMethod::Relieff, scores)).selected
}

/// Front index (0 = non-dominated) of each (error, feature rate) point.
#[pyfunction]
fn nd_sort(points: Vec<(f64, f64)>) -> Vec<usize> {
    search::nd_sort(&points)
}

fn cluster_map(cluster_of: Vec<usize>) -> ClusterMap {
    let n_clusters = cluster_of.iter().max().map_or(0, |m| m + 1);
    let centers = (0..n_clusters).map(|c| cluster_of.iter().position(|&x| x == c).unwrap_or(0)).collect();
    ClusterMap { cluster_of, n_clusters, centers }
}

/// Cluster id of every feature.
#[pyfunction]
#[pyo3(signature = (d, n_bins=10))]
fn cluster_features(py: Python<'_>, d: &PyDataset, n_bins: usize) -> Vec<usize> {
    py.detach(|| {
        let su = relevance::su_scores(&d.inner, n_bins);
        correlation_cluster(&d.inner, &su, n_bins).cluster_of
    })
}

#[pyfunction]
#[pyo3(name = "wo_reduce")]
fn py_wo_reduce(v: Vec<f64>, prime: Vec<f64>, cluster_of: Vec<usize>) -> PyResult<Vec<f64>> {
    wo_reduce(&v, &prime, &cluster_map(cluster_of)).map_err(value_err)
}

#[pyfunction]
#[pyo3(name = "wo_expand")]
fn py_wo_expand(u: Vec<f64>, prime: Vec<f64>, cluster_of: Vec<usize>) -> PyResult<Vec<f64>> {
    wo_expand(&u, &prime, &cluster_map(cluster_of)).map_err(value_err)
}

/// Cross-validated (balanced error, feature rate, assistant error) of a
/// solution vector; feature `i` is selected iff `solution[i] > theta`.
#[pyfunction]
#[pyo3(signature = (d, solution, k=5, folds=5, theta=0.6, seed=0))]
fn evaluate(
    py: Python<'_>,
    d: &PyDataset,
    solution: Vec<f64>,
    k: usize,
    folds: usize,
    theta: f64,
    seed: u64,
) -> PyResult<(f64, f64, f64)> {
    if solution.len() != d.inner.n_features() {
        return Err(value_err(format!(
            "solution has {} entries for {} features",
            solution.len(),
            d.inner.n_features()
        )));
    }
    let plan = stratified_folds(&d.inner, folds, seed, FoldKind::InnerFitness).map_err(data_err)?;
    let o = py.detach(|| Evaluator::new(d.inner.clone(), &plan, k, theta).evaluate(&solution));
    Ok((o.error_rate, o.feature_rate, o.assistant_error))
}

/// Default run configuration as JSON.
#[pyfunction]
fn default_config() -> String {
    serde_json::to_string_pretty(&RunConfig::default()).expect("config serializes")
}

/// Runs the outer cross-validated experiment; `config` is a JSON object whose
/// fields override the defaults. Returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (d, config=None))]
fn run_experiment(py: Python<'_>, d: &PyDataset, config: Option<&str>) -> PyResult<String> {
    let config: RunConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(value_err)?,
        None => RunConfig::default(),
    };
    let report = py.detach(|| experiment::run_experiment(&d.inner, &config)).map_err(value_err)?;
    serde_json::to_string(&report).map_err(value_err)
}

#[pymodule]
fn fsemt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(load_csv, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(minmax_scale, m)?)?;
    m.add_function(wrap_pyfunction!(discretize, m)?)?;
    m.add_function(wrap_pyfunction!(symmetric_uncertainty, m)?)?;
    m.add_function(wrap_pyfunction!(su_scores, m)?)?;
    m.add_function(wrap_pyfunction!(remove_irrelevant, m)?)?;
    m.add_function(wrap_pyfunction!(relieff_scores, m)?)?;
    m.add_function(wrap_pyfunction!(chi_square_scores, m)?)?;
    m.add_function(wrap_pyfunction!(knee_point_mask, m)?)?;
    m.add_function(wrap_pyfunction!(nd_sort, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_features, m)?)?;
    m.add_function(wrap_pyfunction!(py_wo_reduce, m)?)?;
    m.add_function(wrap_pyfunction!(py_wo_expand, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
