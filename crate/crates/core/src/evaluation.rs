//! Wrapper fitness: threshold decoding, KNN under internal cross-validation
//! and the three objective values.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FoldPlan};

/// (balanced error, selected-feature ratio, precision-based error).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub error_rate: f64,
    pub feature_rate: f64,
    pub assistant_error: f64,
}

impl ObjectiveVector {
    /// Objectives of the empty feature subset.
    pub const EMPTY: ObjectiveVector = ObjectiveVector { error_rate: 1.0, feature_rate: 0.0, assistant_error: 1.0 };
}

/// Feature subset as a packed bit pattern over the kept features.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Selection {
    words: Vec<u64>,
    len: usize,
}

impl Selection {
    pub fn from_values(v: &[f64], theta: f64) -> Self {
        let mut words = vec![0u64; v.len().div_ceil(64)];
        for (i, &x) in v.iter().enumerate() {
            if x > theta {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Self { words, len: v.len() }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.len).filter(|&i| self.contains(i)).collect()
    }
}

/// Feature `i` is selected iff `v[i] > theta`.
pub fn decode_selection(v: &[f64], theta: f64) -> Vec<bool> {
    v.iter().map(|&x| x > theta).collect()
}

/// Candidate solution of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    /// Position in the owning task's search space.
    pub task_repr: Vec<f64>,
    /// Reconstructed solution over all kept features, in [0, 1].
    pub full_repr: Vec<f64>,
    pub velocity: Vec<f64>,
    pub objectives: Option<ObjectiveVector>,
    pub task_id: usize,
}

impl Individual {
    pub fn new(task_repr: Vec<f64>, full_repr: Vec<f64>, task_id: usize) -> Self {
        let velocity = vec![0.0; task_repr.len()];
        Self { task_repr, full_repr, velocity, objectives: None, task_id }
    }

    pub fn selection(&self, theta: f64) -> Selection {
        Selection::from_values(&self.full_repr, theta)
    }

    /// Objectives of an evaluated individual.
    ///
    /// # Panics
    /// If the individual has not been evaluated.
    pub fn obj(&self) -> &ObjectiveVector {
        self.objectives.as_ref().expect("individual has not been evaluated")
    }
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64], cols: &[usize]) -> f64 {
    cols.iter().map(|&c| (a[c] - b[c]).powi(2)).sum()
}

fn vote(neighbours: &[(f64, usize)], labels: &[usize], n_classes: usize, votes: &mut [usize]) -> usize {
    votes.iter_mut().for_each(|v| *v = 0);
    for &(_, j) in neighbours {
        votes[labels[j]] += 1;
    }
    let mut best = 0;
    for c in 1..n_classes {
        if votes[c] > votes[best] {
            best = c;
        }
    }
    best
}

/// k nearest neighbours of `query_rows` among `train_rows` of `data`,
/// restricted to the columns `cols`.
fn knn_rows(
    data: &Dataset,
    train_rows: &[usize],
    query: &Dataset,
    query_rows: &[usize],
    cols: &[usize],
    k: usize,
) -> Vec<usize> {
    let k = k.min(train_rows.len()).max(1);
    let train_labels: Vec<usize> = train_rows.iter().map(|&j| data.labels()[j]).collect();
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(train_rows.len());
    let mut votes = vec![0usize; data.n_classes()];
    query_rows
        .iter()
        .map(|&q| {
            let qrow = query.row(q);
            dist.clear();
            dist.extend(
                train_rows.iter().enumerate().map(|(pos, &j)| (squared_distance(qrow, data.row(j), cols), pos)),
            );
            let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < dist.len() {
                dist.select_nth_unstable_by(k - 1, by_distance);
            }
            vote(&dist[..k], &train_labels, data.n_classes(), &mut votes)
        })
        .collect()
}

/// Predicts labels of every `query` row with a k-nearest-neighbour vote over
/// the columns `cols` (Euclidean). Distance ties go to the lower training
/// index and vote ties to the smaller class id.
pub fn knn_predict(train: &Dataset, query: &Dataset, cols: &[usize], k: usize) -> Vec<usize> {
    let train_rows: Vec<usize> = (0..train.n_samples()).collect();
    let query_rows: Vec<usize> = (0..query.n_samples()).collect();
    knn_rows(train, &train_rows, query, &query_rows, cols, k)
}

fn present_classes(truth: &[usize], n_classes: usize) -> Vec<bool> {
    let mut present = vec![false; n_classes];
    for &t in truth {
        present[t] = true;
    }
    present
}

/// One minus the mean per-class recall over classes present in `truth`.
pub fn balanced_error(truth: &[usize], predicted: &[usize], n_classes: usize) -> f64 {
    let mut hits = vec![0usize; n_classes];
    let mut total = vec![0usize; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        total[t] += 1;
        if t == p {
            hits[t] += 1;
        }
    }
    let recalls: Vec<f64> =
        (0..n_classes).filter(|&c| total[c] > 0).map(|c| hits[c] as f64 / total[c] as f64).collect();
    if recalls.is_empty() {
        return 1.0;
    }
    1.0 - recalls.iter().sum::<f64>() / recalls.len() as f64
}

/// One minus the mean per-class precision over classes present in `truth`;
/// a class that is never predicted has precision 0.
pub fn assistant_error(truth: &[usize], predicted: &[usize], n_classes: usize) -> f64 {
    let present = present_classes(truth, n_classes);
    let mut hits = vec![0usize; n_classes];
    let mut predicted_count = vec![0usize; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        predicted_count[p] += 1;
        if t == p {
            hits[p] += 1;
        }
    }
    let precisions: Vec<f64> = (0..n_classes)
        .filter(|&c| present[c])
        .map(|c| if predicted_count[c] == 0 { 0.0 } else { hits[c] as f64 / predicted_count[c] as f64 })
        .collect();
    if precisions.is_empty() {
        return 1.0;
    }
    1.0 - precisions.iter().sum::<f64>() / precisions.len() as f64
}

/// Memoized wrapper fitness over a fixed training set and inner fold plan.
///
/// Fitness depends only on the decoded subset, so results are cached by bit
/// pattern; the cache is shared by concurrent callers.
pub struct Evaluator {
    data: Dataset,
    folds: Vec<(Vec<usize>, Vec<usize>)>,
    k: usize,
    theta: f64,
    memo: Mutex<HashMap<Selection, ObjectiveVector>>,
}

impl Evaluator {
    pub fn new(data: Dataset, plan: &FoldPlan, k: usize, theta: f64) -> Self {
        let folds =
            (0..plan.n_folds).map(|f| plan.split(f)).filter(|(tr, te)| !tr.is_empty() && !te.is_empty()).collect();
        Self { data, folds, k, theta, memo: Mutex::new(HashMap::new()) }
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Number of kept features, the denominator of the feature rate.
    pub fn dim(&self) -> usize {
        self.data.n_features()
    }

    pub fn cache_len(&self) -> usize {
        self.memo.lock().unwrap().len()
    }

    /// Objectives of a full-dimensional solution.
    pub fn evaluate(&self, full: &[f64]) -> ObjectiveVector {
        let selection = Selection::from_values(full, self.theta);
        self.evaluate_selection(&selection)
    }

    pub fn evaluate_selection(&self, selection: &Selection) -> ObjectiveVector {
        if let Some(hit) = self.memo.lock().unwrap().get(selection) {
            return *hit;
        }
        let obj = self.compute(selection);
        self.memo.lock().unwrap().insert(selection.clone(), obj);
        obj
    }

    fn compute(&self, selection: &Selection) -> ObjectiveVector {
        let cols = selection.indices();
        if cols.is_empty() {
            return ObjectiveVector::EMPTY;
        }
        let c = self.data.n_classes();
        let (mut err, mut asst) = (0.0, 0.0);
        for (train, test) in &self.folds {
            let predicted = knn_rows(&self.data, train, &self.data, test, &cols, self.k);
            let truth: Vec<usize> = test.iter().map(|&i| self.data.labels()[i]).collect();
            err += balanced_error(&truth, &predicted, c);
            asst += assistant_error(&truth, &predicted, c);
        }
        let folds = self.folds.len() as f64;
        ObjectiveVector {
            error_rate: err / folds,
            feature_rate: cols.len() as f64 / self.dim() as f64,
            assistant_error: asst / folds,
        }
    }

    pub fn evaluate_individual(&self, ind: &mut Individual) {
        if ind.objectives.is_none() {
            ind.objectives = Some(self.evaluate(&ind.full_repr));
        }
    }
}
