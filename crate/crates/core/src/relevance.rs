//! Symmetric uncertainty and irrelevant-feature removal.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;

/// Default number of equal-frequency bins.
pub const DEFAULT_BINS: usize = 10;

/// Equal-frequency discretization.
///
/// Boundary `j` is the lower empirical `j/n_bins` quantile of the column and a
/// value falls into the first bin whose upper boundary it does not exceed, so
/// ties at a boundary go to the lower bin. A constant column maps to bin 0;
/// a non-constant column always spans at least two bins.
pub fn discretize_equal_frequency(values: &[f64], n_bins: usize) -> Vec<usize> {
    let edges = bin_edges(values, n_bins);
    values.iter().map(|&v| edges.partition_point(|&e| e < v)).collect()
}

/// Upper boundaries of the first `n_bins - 1` bins.
pub fn bin_edges(values: &[f64], n_bins: usize) -> Vec<f64> {
    let n = values.len();
    if n == 0 || n_bins < 2 {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[n - 1]);
    let edges: Vec<f64> = (1..n_bins)
        .map(|j| {
            let rank = (j * n).div_ceil(n_bins);
            sorted[rank.max(1) - 1]
        })
        .collect();
    if min < max && edges[0] >= max {
        // heavy tie at the maximum: split off everything below it
        let below = sorted[sorted.partition_point(|&v| v < max) - 1];
        return vec![below];
    }
    edges
}

fn distinct_count(values: &[f64]) -> usize {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    sorted.len()
}

/// Discretizes with `min(max_bins, distinct values)` bins.
pub fn discretize_column(values: &[f64], max_bins: usize) -> Vec<usize> {
    let bins = max_bins.min(distinct_count(values));
    if bins < 2 {
        vec![0; values.len()]
    } else {
        discretize_equal_frequency(values, bins)
    }
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

fn compact(x: &[usize]) -> (Vec<usize>, usize) {
    let max = x.iter().copied().max().unwrap_or(0);
    let mut map = vec![usize::MAX; max + 1];
    let mut next = 0;
    let ids = x
        .iter()
        .map(|&v| {
            if map[v] == usize::MAX {
                map[v] = next;
                next += 1;
            }
            map[v]
        })
        .collect();
    (ids, next)
}

/// Symmetric uncertainty `2 I(X;Y) / (H(X) + H(Y))` with base-2 entropies.
///
/// Returns 0 when both variables are constant.
pub fn symmetric_uncertainty(x: &[usize], y: &[usize]) -> Result<f64, LengthMismatch> {
    if x.len() != y.len() {
        return Err(LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n == 0 {
        return Ok(0.0);
    }
    let (xs, nx) = compact(x);
    let (ys, ny) = compact(y);
    let mut joint = vec![0usize; nx * ny];
    let mut cx = vec![0usize; nx];
    let mut cy = vec![0usize; ny];
    for (&a, &b) in xs.iter().zip(&ys) {
        joint[a * ny + b] += 1;
        cx[a] += 1;
        cy[b] += 1;
    }
    let nf = n as f64;
    let hx = entropy(cx.into_iter(), nf);
    let hy = entropy(cy.into_iter(), nf);
    let hxy = entropy(joint.into_iter(), nf);
    let denom = hx + hy;
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((2.0 * (hx + hy - hxy) / denom).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("length mismatch: {0} vs {1}")]
pub struct LengthMismatch(pub usize, pub usize);

/// Logarithm used for the rank cutoff `floor(D / log D)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
    Ten,
}

impl LogBase {
    fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Two => x.log2(),
            LogBase::Ten => x.log10(),
        }
    }
}

/// Feature-to-class symmetric uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuScores {
    pub su_with_class: Vec<f64>,
    /// Bin boundaries used per feature.
    pub discretization: Vec<Vec<f64>>,
}

impl SuScores {
    /// Feature indices by descending SU, ties by lower index.
    pub fn ranking(&self) -> Vec<usize> {
        rank_descending(&self.su_with_class)
    }

    /// Scores of the features at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> SuScores {
        SuScores {
            su_with_class: indices.iter().map(|&j| self.su_with_class[j]).collect(),
            discretization: indices.iter().map(|&j| self.discretization[j].clone()).collect(),
        }
    }
}

pub(crate) fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

pub fn su_scores(d: &Dataset, n_bins: usize) -> SuScores {
    use rayon::prelude::*;
    let (su_with_class, discretization) = (0..d.n_features())
        .into_par_iter()
        .map(|j| {
            let column = d.column(j);
            let bins = n_bins.min(distinct_count(&column));
            let binned = discretize_column(&column, n_bins);
            let su = symmetric_uncertainty(&binned, d.labels()).expect("column length equals label length");
            (su, bin_edges(&column, bins))
        })
        .unzip();
    SuScores { su_with_class, discretization }
}

/// Features surviving irrelevance removal, as sorted original indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceMask {
    pub kept_indices: Vec<usize>,
    pub threshold_used: f64,
    pub original_dim: usize,
}

impl RelevanceMask {
    pub fn keep_all(d: usize) -> Self {
        Self { kept_indices: (0..d).collect(), threshold_used: f64::NEG_INFINITY, original_dim: d }
    }
}

/// Threshold `min(lambda * SU_max, SU at rank floor(D / log D))`.
pub fn removal_threshold(su: &[f64], lambda: f64, base: LogBase) -> f64 {
    let d = su.len();
    let order = rank_descending(su);
    let max = su[order[0]];
    let cutoff = (d as f64 / base.log(d as f64)).floor() as usize;
    let rank = cutoff.clamp(1, d);
    (lambda * max).min(su[order[rank - 1]])
}

/// Removes features whose class SU does not exceed the removal threshold.
///
/// At least the two most relevant features always survive.
pub fn remove_irrelevant(d: &Dataset, lambda: f64, n_bins: usize, base: LogBase) -> (RelevanceMask, SuScores) {
    let scores = su_scores(d, n_bins);
    let mask = mask_from_scores(&scores.su_with_class, lambda, base);
    (mask, scores)
}

pub fn mask_from_scores(su: &[f64], lambda: f64, base: LogBase) -> RelevanceMask {
    let d = su.len();
    if d <= 2 {
        return RelevanceMask { kept_indices: (0..d).collect(), threshold_used: f64::NEG_INFINITY, original_dim: d };
    }
    let threshold = removal_threshold(su, lambda, base);
    let mut kept: Vec<usize> = (0..d).filter(|&j| su[j] > threshold).collect();
    if kept.len() < 2 {
        kept = rank_descending(su)[..2].to_vec();
        kept.sort_unstable();
    }
    RelevanceMask { kept_indices: kept, threshold_used: threshold, original_dim: d }
}
