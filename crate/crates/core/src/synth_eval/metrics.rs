//! Detection quality and pruning metrics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::alid::ClusterResult;
use crate::synth_eval::generate::GroundTruth;

/// Best-match F1 of every true cluster against the detected member sets.
pub fn f1_scores(truth: &GroundTruth, results: &[ClusterResult]) -> Vec<f64> {
    let sizes: Vec<usize> = truth.cluster_members().iter().map(Vec::len).collect();
    let mut best = vec![0.0f64; truth.clusters];
    for r in results {
        let support = r.members.support();
        let mut overlap: HashMap<usize, usize> = HashMap::new();
        for &i in support {
            if let Some(Some(c)) = truth.labels.get(i) {
                *overlap.entry(*c).or_default() += 1;
            }
        }
        for (c, hits) in overlap {
            let f1 = 2.0 * hits as f64 / (sizes[c] + support.len()) as f64;
            best[c] = best[c].max(f1);
        }
    }
    best
}

/// Mean best-match F1 over the true clusters; zero when there are none.
pub fn avg_f(truth: &GroundTruth, results: &[ClusterResult]) -> f64 {
    let scores = f1_scores(truth, results);
    if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

/// Fraction of off-diagonal matrix entries never evaluated, given the number
/// of distinct unordered pairs that were.
pub fn sparse_degree(distinct_pairs: u64, n: usize) -> f64 {
    if n < 2 {
        return 1.0;
    }
    let total = n as f64 * (n as f64 - 1.0);
    (1.0 - 2.0 * distinct_pairs as f64 / total).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub avg_f: f64,
    pub per_cluster_f1: Vec<f64>,
    pub runtime_s: f64,
    pub peak_mem_bytes: u64,
    pub memory_method: String,
    pub sparse_degree: f64,
    pub kernel_eval_count: u64,
}

impl EvalReport {
    /// Quality-only report (no run measurements).
    pub fn quality(truth: &GroundTruth, results: &[ClusterResult]) -> Self {
        let per_cluster_f1 = f1_scores(truth, results);
        let avg_f = if per_cluster_f1.is_empty() {
            0.0
        } else {
            per_cluster_f1.iter().sum::<f64>() / per_cluster_f1.len() as f64
        };
        EvalReport {
            avg_f,
            per_cluster_f1,
            runtime_s: 0.0,
            peak_mem_bytes: 0,
            memory_method: "none".into(),
            sparse_degree: 1.0,
            kernel_eval_count: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::Subgraph;
    use proptest::prelude::*;

    fn truth(labels: Vec<Option<usize>>, clusters: usize) -> GroundTruth {
        GroundTruth { n: labels.len(), clusters, labels, scale: 1.0, seed: 0 }
    }

    fn found(ids: &[usize]) -> ClusterResult {
        ClusterResult {
            label: 0,
            density: 0.9,
            members: Subgraph::uniform(ids).unwrap(),
            rounds_used: 1,
            converged: true,
        }
    }

    #[test]
    fn exact_and_empty() {
        let t = truth(vec![Some(0), Some(0), Some(1), Some(1), None], 2);
        assert_eq!(avg_f(&t, &[found(&[0, 1]), found(&[2, 3])]), 1.0);
        assert_eq!(avg_f(&t, &[]), 0.0);
    }

    #[test]
    fn half_precision_half_recall() {
        let mut labels = vec![Some(0); 10];
        labels.extend(vec![None; 10]);
        let t = truth(labels, 1);
        let det = found(&[0, 1, 2, 3, 4, 10, 11, 12, 13, 14]);
        assert!((avg_f(&t, &[det]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sparse_degree_edges() {
        assert_eq!(sparse_degree(0, 100), 1.0);
        assert_eq!(sparse_degree(100 * 99 / 2, 100), 0.0);
        assert_eq!(sparse_degree(0, 1), 1.0);
    }

    proptest! {
        #[test]
        fn avg_f_bounded_and_order_free(
            labels in proptest::collection::vec(proptest::option::of(0usize..4), 30),
            groups in proptest::collection::vec(proptest::collection::btree_set(0usize..30, 1..8), 0..6),
        ) {
            let t = truth(labels.clone(), 4);
            let det: Vec<ClusterResult> = groups.iter().map(|g| found(&g.iter().copied().collect::<Vec<_>>())).collect();
            let f = avg_f(&t, &det);
            prop_assert!((0.0..=1.0).contains(&f));
            let mut rev = det.clone();
            rev.reverse();
            prop_assert_eq!(f, avg_f(&t, &rev));
            // relabel the truth by a fixed permutation
            let perm = [2, 0, 3, 1];
            let t2 = truth(labels.iter().map(|l| l.map(|c| perm[c])).collect(), 4);
            let mut a = f1_scores(&t, &det);
            let mut b = f1_scores(&t2, &det);
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
        }
    }
}
