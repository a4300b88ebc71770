//! Exhaustive-scan ground truth and recall.

use std::cmp::Ordering;
use std::collections::HashSet;

use adaivf::{DistanceMetric, Error, Scalar, VectorId};
use rayon::prelude::*;

/// Exact neighbours of each query, sorted by `(distance, id)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T> {
    pub k: usize,
    pub neighbors: Vec<Vec<(VectorId, T)>>,
    /// Fewer than `k` live vectors existed, so every list is shorter than `k`.
    pub truncated: bool,
}

impl<T: Scalar> GroundTruth<T> {
    pub fn ids(&self, query: usize) -> Vec<VectorId> {
        self.neighbors[query].iter().map(|n| n.0).collect()
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

fn by_distance_then_id<T: Scalar>(a: &(VectorId, T), b: &(VectorId, T)) -> Ordering {
    a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
}

/// Top-`k` of every query (row-major `queries`) over `live`, ties broken by
/// the lower id.
pub fn ground_truth<T: Scalar>(
    live: &[(VectorId, &[T])],
    queries: &[T],
    dim: usize,
    k: usize,
    metric: DistanceMetric,
) -> adaivf::Result<GroundTruth<T>> {
    if live.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if k == 0 {
        return Err(Error::InvalidK { k, n: live.len() });
    }
    if dim == 0 || !queries.len().is_multiple_of(dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: queries.len() % dim.max(1),
        });
    }
    if let Some((_, v)) = live.iter().find(|(_, v)| v.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: v.len(),
        });
    }
    let take = k.min(live.len());
    let neighbors = queries
        .par_chunks_exact(dim)
        .map(|q| {
            let mut all: Vec<(VectorId, T)> = live.iter().map(|(id, v)| (*id, metric.eval(q, v))).collect();
            if take < all.len() {
                all.select_nth_unstable_by(take - 1, by_distance_then_id);
                all.truncate(take);
            }
            all.sort_by(by_distance_then_id);
            all
        })
        .collect();
    Ok(GroundTruth {
        k,
        neighbors,
        truncated: take < k,
    })
}

/// `|G ∩ R| / k`.
pub fn recall(returned: &[VectorId], truth: &[VectorId], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let truth: HashSet<&VectorId> = truth.iter().collect();
    let hit = returned.iter().filter(|id| truth.contains(id)).count();
    hit as f64 / k as f64
}

/// Recall of one query against its ground-truth list; a truncated list is
/// scored against its own length.
pub fn query_recall<T: Scalar>(returned: &[VectorId], truth: &GroundTruth<T>, query: usize) -> f64 {
    let ids = truth.ids(query);
    let k = truth.k.min(ids.len());
    let returned = &returned[..returned.len().min(k)];
    recall(returned, &ids, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<(VectorId, Vec<f32>)> {
        vec![
            (VectorId(4), vec![1.0, 0.0]),
            (VectorId(2), vec![0.0, 1.0]),
            (VectorId(9), vec![3.0, 3.0]),
            (VectorId(1), vec![-1.0, 0.0]),
        ]
    }

    fn live(r: &[(VectorId, Vec<f32>)]) -> Vec<(VectorId, &[f32])> {
        r.iter().map(|(id, v)| (*id, v.as_slice())).collect()
    }

    #[test]
    fn query_on_a_live_vector_comes_first() {
        let r = rows();
        let gt = ground_truth(&live(&r), &[3.0, 3.0], 2, 2, DistanceMetric::SquaredL2).unwrap();
        assert_eq!(gt.neighbors[0][0], (VectorId(9), 0.0));
        assert!(!gt.truncated);
    }

    #[test]
    fn k_equal_to_live_count_ranks_everything() {
        let r = rows();
        let gt = ground_truth(&live(&r), &[0.0, 0.0], 2, 4, DistanceMetric::SquaredL2).unwrap();
        // Three vectors tie at distance 1; lower ids first.
        assert_eq!(gt.ids(0), vec![VectorId(1), VectorId(2), VectorId(4), VectorId(9)]);
    }

    #[test]
    fn oversized_k_is_truncated_and_flagged() {
        let r = rows();
        let gt = ground_truth(&live(&r), &[0.0, 0.0, 1.0, 1.0], 2, 10, DistanceMetric::SquaredL2).unwrap();
        assert!(gt.truncated);
        assert_eq!(gt.len(), 2);
        assert!(gt.neighbors.iter().all(|n| n.len() == 4));
        assert_eq!(query_recall(&gt.ids(1), &gt, 1), 1.0);
    }

    #[test]
    fn empty_live_set_is_rejected() {
        assert!(ground_truth::<f32>(&[], &[0.0], 1, 1, DistanceMetric::SquaredL2).is_err());
    }

    #[test]
    fn recall_examples() {
        let g: Vec<VectorId> = (0..10).map(VectorId).collect();
        assert_eq!(recall(&g, &g, 10), 1.0);
        let disjoint: Vec<VectorId> = (10..20).map(VectorId).collect();
        assert_eq!(recall(&disjoint, &g, 10), 0.0);
        let half: Vec<VectorId> = (5..15).map(VectorId).collect();
        assert_eq!(recall(&half, &g, 10), 0.5);
    }
}
