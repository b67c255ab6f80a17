//! Correlation-guided feature clustering and the weighted-optimization
//! mapping between cluster weights and full-dimensional solutions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::evaluation::Individual;
use crate::relevance::{discretize_column, symmetric_uncertainty, SuScores};

/// Floor for reference-solution entries.
pub const PRIME_EPS: f64 = 1e-6;

/// Upper bound of a cluster weight.
pub const WEIGHT_MAX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterMap {
    pub cluster_of: Vec<usize>,
    pub n_clusters: usize,
    /// Feature index of each cluster's centre.
    pub centers: Vec<usize>,
}

impl ClusterMap {
    pub fn n_features(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.cluster_of.iter().enumerate().filter(move |(_, &c)| c == cluster).map(|(i, _)| i)
    }
}

/// Groups features around centres taken in descending class-relevance order.
///
/// A feature joins the first existing centre it is at least as correlated
/// with (by SU) as it is with the class; otherwise it founds a new cluster.
/// Both comparisons use `n_bins`-level discretization, while the visiting
/// order comes from `su`.
pub fn correlation_cluster(d: &Dataset, su: &SuScores, n_bins: usize) -> ClusterMap {
    let n = d.n_features();
    let binned: Vec<Vec<usize>> = (0..n).map(|j| discretize_column(&d.column(j), n_bins)).collect();
    let class_su: Vec<f64> =
        binned.iter().map(|b| symmetric_uncertainty(b, d.labels()).expect("equal lengths")).collect();

    let mut cluster_of = vec![usize::MAX; n];
    let mut centers: Vec<usize> = Vec::new();
    for g in su.ranking() {
        let joined = centers
            .iter()
            .position(|&h| symmetric_uncertainty(&binned[g], &binned[h]).expect("equal lengths") >= class_su[g]);
        match joined {
            Some(c) => cluster_of[g] = c,
            None => {
                cluster_of[g] = centers.len();
                centers.push(g);
            }
        }
    }
    ClusterMap { cluster_of, n_clusters: centers.len(), centers }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("dimension mismatch: expected {expected}, got {found}")]
pub struct DimensionMismatch {
    pub expected: usize,
    pub found: usize,
}

fn check(expected: usize, found: usize) -> Result<(), DimensionMismatch> {
    if expected == found {
        Ok(())
    } else {
        Err(DimensionMismatch { expected, found })
    }
}

/// Full solution to cluster weights: the mean ratio `v / prime` over each
/// cluster, clamped to [0, 2].
pub fn wo_reduce(v: &[f64], prime: &[f64], cm: &ClusterMap) -> Result<Vec<f64>, DimensionMismatch> {
    check(cm.n_features(), v.len())?;
    check(cm.n_features(), prime.len())?;
    let mut sum = vec![0.0; cm.n_clusters];
    let mut count = vec![0usize; cm.n_clusters];
    for ((&x, &p), &c) in v.iter().zip(prime).zip(&cm.cluster_of) {
        sum[c] += x / p.max(PRIME_EPS);
        count[c] += 1;
    }
    Ok(sum
        .iter()
        .zip(&count)
        .map(|(&s, &n)| if n == 0 { 1.0 } else { (s / n as f64).clamp(0.0, WEIGHT_MAX) })
        .collect())
}

/// Cluster weights to a full solution: `clamp(u[cluster(i)] * prime[i], 0, 1)`.
pub fn wo_expand(u: &[f64], prime: &[f64], cm: &ClusterMap) -> Result<Vec<f64>, DimensionMismatch> {
    check(cm.n_clusters, u.len())?;
    check(cm.n_features(), prime.len())?;
    Ok(prime.iter().zip(&cm.cluster_of).map(|(&p, &c)| (u[c] * p).clamp(0.0, 1.0)).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no evaluated elite to select a reference solution from")]
pub struct NoElites;

/// Reference solution: the full representation of the lowest-error elite
/// (ties: fewer features, then earlier position), with exact zeros raised to
/// [`PRIME_EPS`].
pub fn select_prime<'a>(elites: impl IntoIterator<Item = &'a Individual>) -> Result<Vec<f64>, NoElites> {
    let mut best: Option<&Individual> = None;
    for ind in elites {
        let Some(obj) = ind.objectives.as_ref() else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let bo = b.obj();
                obj.error_rate < bo.error_rate
                    || (obj.error_rate == bo.error_rate && obj.feature_rate < bo.feature_rate)
            }
        };
        if better {
            best = Some(ind);
        }
    }
    let best = best.ok_or(NoElites)?;
    Ok(best.full_repr.iter().map(|&x| if x == 0.0 { PRIME_EPS } else { x }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::ObjectiveVector;
    use crate::relevance::su_scores;
    use proptest::prelude::*;

    fn map(cluster_of: Vec<usize>) -> ClusterMap {
        let n_clusters = cluster_of.iter().max().map_or(0, |m| m + 1);
        let centers = (0..n_clusters).map(|c| cluster_of.iter().position(|&x| x == c).unwrap()).collect();
        ClusterMap { cluster_of, n_clusters, centers }
    }

    #[test]
    fn wo_examples() {
        let cm = map(vec![0, 0, 1]);
        let prime = [0.8, 0.4, 0.6];
        let u = wo_reduce(&[0.8, 0.4, 0.3], &prime, &cm).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-12 && (u[1] - 0.5).abs() < 1e-12);
        let v = wo_expand(&[1.0, 0.5], &prime, &cm).unwrap();
        assert!(v.iter().zip([0.8, 0.4, 0.3]).all(|(a, b)| (a - b).abs() < 1e-12));
        assert_eq!(wo_reduce(&prime, &prime, &cm).unwrap(), vec![1.0, 1.0]);
        assert_eq!(wo_reduce(&[0.0; 3], &prime, &cm).unwrap(), vec![0.0, 0.0]);
        assert_eq!(wo_expand(&[1.0, 1.0], &prime, &cm).unwrap(), prime.to_vec());
        assert_eq!(wo_expand(&[2.0], &[0.7], &map(vec![0])).unwrap(), vec![1.0]);
        assert!(wo_expand(&[1.0], &prime, &cm).is_err());
    }

    fn elite(err: f64, fr: f64, full: Vec<f64>) -> Individual {
        let mut ind = Individual::new(full.clone(), full, 0);
        ind.objectives = Some(ObjectiveVector { error_rate: err, feature_rate: fr, assistant_error: err });
        ind
    }

    #[test]
    fn prime_selection_rules() {
        let e = [elite(0.3, 0.1, vec![0.1]), elite(0.1, 0.1, vec![0.2]), elite(0.2, 0.1, vec![0.3])];
        assert_eq!(select_prime(&e).unwrap(), vec![0.2]);
        let e = [elite(0.1, 0.40, vec![0.1]), elite(0.1, 0.25, vec![0.2]), elite(0.1, 0.25, vec![0.9])];
        assert_eq!(select_prime(&e).unwrap(), vec![0.2]);
        let e = [elite(0.1, 0.2, vec![0.0, 0.7])];
        assert_eq!(select_prime(&e).unwrap(), vec![1e-6, 0.7]);
        assert_eq!(select_prime(&[]), Err(NoElites));
    }

    #[test]
    fn duplicated_features_share_a_cluster() {
        // two independent bits; the class encodes both
        let n = 64;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let a = ((i / 2) % 2) as f64;
                let b = (i % 2) as f64;
                vec![a, a, a, b]
            })
            .collect();
        let labels: Vec<usize> = (0..n).map(|i| 2 * ((i / 2) % 2) + i % 2).collect();
        let d = Dataset::new(rows, labels, 4).unwrap();
        let su = su_scores(&d, 10);
        let cm = correlation_cluster(&d, &su, 10);
        assert_eq!(cm.n_clusters, 2);
        assert_eq!(cm.cluster_of[0], cm.cluster_of[1]);
        assert_eq!(cm.cluster_of[1], cm.cluster_of[2]);
        assert_ne!(cm.cluster_of[0], cm.cluster_of[3]);
    }

    #[test]
    fn single_feature_is_its_own_centre() {
        let d = Dataset::new(vec![vec![0.0], vec![1.0], vec![0.2], vec![0.9]], vec![0, 1, 0, 1], 2).unwrap();
        let cm = correlation_cluster(&d, &su_scores(&d, 10), 10);
        assert_eq!(cm, ClusterMap { cluster_of: vec![0], n_clusters: 1, centers: vec![0] });
    }

    proptest! {
        #[test]
        fn round_trip_away_from_clamps(
            assign in prop::collection::vec(0usize..5, 1..40),
            seed_prime in prop::collection::vec(0.001f64..1.0, 40),
            seed_u in prop::collection::vec(0.0f64..2.0, 5),
        ) {
            let cm = map({
                // relabel densely
                let mut ids = assign.clone();
                let mut seen: Vec<usize> = Vec::new();
                for id in ids.iter_mut() {
                    let pos = seen.iter().position(|s| s == id).unwrap_or_else(|| { seen.push(*id); seen.len() - 1 });
                    *id = pos;
                }
                ids
            });
            let prime = &seed_prime[..cm.n_features()];
            let u: Vec<f64> = (0..cm.n_clusters)
                .map(|c| {
                    let max_p = cm.members(c).map(|i| prime[i]).fold(0.0, f64::max);
                    seed_u[c].min(1.0 / max_p)
                })
                .collect();
            let v = wo_expand(&u, prime, &cm).unwrap();
            prop_assert!(v.iter().all(|&x| (0.0..=1.0).contains(&x)));
            let back = wo_reduce(&v, prime, &cm).unwrap();
            for (a, b) in back.iter().zip(&u) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
