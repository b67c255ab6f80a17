//! Filter rankings (ReliefF, chi-square) and knee-point feature masks.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::relevance::{discretize_column, rank_descending};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMethod {
    Relieff,
    ChiSquare,
}

/// Importance per feature of the dataset it was computed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScores {
    pub method: FilterMethod,
    pub scores: Vec<f64>,
    /// Feature indices by descending score, ties by lower index.
    pub ranking: Vec<usize>,
}

impl FeatureScores {
    pub fn new(method: FilterMethod, scores: Vec<f64>) -> Self {
        let ranking = rank_descending(&scores);
        Self { method, scores, ranking }
    }
}

/// Binary mask over a task's parent feature space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskMask {
    pub selected: Vec<bool>,
    pub dim: usize,
    pub source_method: FilterMethod,
}

impl TaskMask {
    pub fn from_selected(selected: Vec<bool>, source_method: FilterMethod) -> Self {
        let dim = selected.iter().filter(|&&s| s).count();
        Self { selected, dim, source_method }
    }

    /// Positions of the selected features.
    pub fn indices(&self) -> Vec<usize> {
        self.selected.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| i).collect()
    }
}

pub const DEFAULT_RELIEFF_NEIGHBORS: usize = 10;

fn manhattan(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// ReliefF weights, using every sample as a probe.
///
/// Expects features scaled to [0, 1]. The neighbour count is clipped to the
/// smallest class size minus one (but at least one); a probe whose class has
/// fewer members than that uses all of them. Neighbours are found by
/// Manhattan distance with ties resolved towards the lower sample index.
pub fn relieff_scores(d: &Dataset, n_neighbors: usize) -> FeatureScores {
    use rayon::prelude::*;

    let n = d.n_samples();
    let n_feat = d.n_features();
    let counts = d.class_counts();
    let smallest = counts.iter().copied().filter(|&c| c > 0).min().unwrap_or(1);
    let k = n_neighbors.min(smallest.saturating_sub(1)).max(1);
    let prior: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();

    // per-probe contributions are reduced in probe order for reproducibility
    let contributions: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let probe = d.row(i);
            let own = d.labels()[i];
            let mut by_class: Vec<Vec<(f64, usize)>> = vec![Vec::new(); d.n_classes()];
            for j in 0..n {
                if j != i {
                    by_class[d.labels()[j]].push((manhattan(probe, d.row(j)), j));
                }
            }
            let mut delta = vec![0.0; n_feat];
            for (class, mut cands) in by_class.into_iter().enumerate() {
                if cands.is_empty() {
                    continue;
                }
                cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                cands.truncate(k);
                let weight = if class == own { -1.0 } else { prior[class] / (1.0 - prior[own]) };
                for (_, j) in cands {
                    let other = d.row(j);
                    for f in 0..n_feat {
                        delta[f] += weight * (probe[f] - other[f]).abs();
                    }
                }
            }
            delta
        })
        .collect();

    let norm = (n * k) as f64;
    let mut scores = vec![0.0; n_feat];
    for delta in contributions {
        for (s, v) in scores.iter_mut().zip(delta) {
            *s += v;
        }
    }
    for s in &mut scores {
        *s /= norm;
    }
    FeatureScores::new(FilterMethod::Relieff, scores)
}

/// Pearson chi-square statistic of a contingency table, skipping cells with
/// zero expected count.
pub fn chi_square_statistic(table: &[Vec<usize>]) -> f64 {
    let total: usize = table.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let n_cols = table.first().map_or(0, Vec::len);
    let row_sums: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<usize> = (0..n_cols).map(|c| table.iter().map(|r| r[c]).sum()).collect();
    let mut stat = 0.0;
    for (r, row) in table.iter().enumerate() {
        for (c, &obs) in row.iter().enumerate() {
            let expected = row_sums[r] as f64 * col_sums[c] as f64 / total as f64;
            if expected > 0.0 {
                stat += (obs as f64 - expected).powi(2) / expected;
            }
        }
    }
    stat
}

/// Chi-square independence statistic of each discretized feature against
/// the labels.
pub fn chi_square_scores(d: &Dataset, n_bins: usize) -> FeatureScores {
    use rayon::prelude::*;
    let scores = (0..d.n_features())
        .into_par_iter()
        .map(|j| {
            let bins = discretize_column(&d.column(j), n_bins);
            let n_rows = bins.iter().copied().max().unwrap_or(0) + 1;
            let mut table = vec![vec![0usize; d.n_classes()]; n_rows];
            for (&b, &l) in bins.iter().zip(d.labels()) {
                table[b][l] += 1;
            }
            chi_square_statistic(&table)
        })
        .collect();
    FeatureScores::new(FilterMethod::ChiSquare, scores)
}

/// 1-based rank of the knee on a descending score curve.
///
/// The knee is the point farthest from the line joining the first and last
/// points of the curve `(rank, score)`; near-ties (within 1e-9 of the
/// largest attainable distance) go to the lower rank. Returns `None` when
/// every score is equal.
pub fn knee_rank(sorted_desc: &[f64]) -> Option<usize> {
    let n = sorted_desc.len();
    let (first, last) = (sorted_desc[0], sorted_desc[n - 1]);
    if sorted_desc.iter().all(|&s| s == first) {
        return None;
    }
    let dx = (n - 1) as f64;
    let dy = last - first;
    let len = dx.hypot(dy);
    let distances: Vec<f64> =
        sorted_desc.iter().enumerate().map(|(i, &s)| (dx * (s - first) - dy * i as f64).abs() / len).collect();
    let max = distances.iter().copied().fold(0.0, f64::max);
    let tol = 1e-9 * dx * dy.abs() / len;
    Some(distances.iter().position(|&d| d >= max - tol).unwrap_or(0) + 1)
}

/// Mask keeping every feature ranked at or above the knee. All-equal scores
/// keep the top half (rounded up) of the ranking.
pub fn knee_point_mask(scores: &FeatureScores) -> TaskMask {
    let n = scores.scores.len();
    let sorted: Vec<f64> = scores.ranking.iter().map(|&j| scores.scores[j]).collect();
    let keep = if n < 2 { n } else { knee_rank(&sorted).unwrap_or(n.div_ceil(2)) };
    let mut selected = vec![false; n];
    for &j in &scores.ranking[..keep] {
        selected[j] = true;
    }
    TaskMask::from_selected(selected, scores.method)
}
