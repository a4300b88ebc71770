use std::fmt;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tracking::PartitionMeta;
use crate::vector::VectorId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartitionId(pub u64);

impl fmt::Display for PartitionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// One inverted list: member ids, row-major member vectors, and the cached
/// squared distance of each member to the centroid it was assigned under.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition<T> {
    pub(crate) id: PartitionId,
    pub(crate) ids: Vec<VectorId>,
    pub(crate) data: Vec<T>,
    pub(crate) assign_dist: Vec<f64>,
    pub(crate) meta: PartitionMeta<T>,
}

impl<T: Scalar> Partition<T> {
    pub fn id(&self) -> PartitionId {
        self.id
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[VectorId] {
        &self.ids
    }

    pub fn vectors(&self) -> &[T] {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.meta.mu.len()
    }

    pub fn row(&self, slot: usize) -> &[T] {
        let d = self.dim();
        &self.data[slot * d..(slot + 1) * d]
    }

    /// The routing centroid (the tracked running mean).
    pub fn centroid(&self) -> &[T] {
        &self.meta.mu
    }

    pub fn meta(&self) -> &PartitionMeta<T> {
        &self.meta
    }

    pub fn iter(&self) -> impl Iterator<Item = (VectorId, &[T])> + '_ {
        self.ids.iter().copied().zip(self.data.chunks_exact(self.dim()))
    }

    /// Exact member mean, recomputed from scratch in `f64`.
    pub fn exact_mean(&self) -> Vec<f64> {
        let d = self.dim();
        let mut acc = vec![0f64; d];
        for row in self.data.chunks_exact(d) {
            for (a, x) in acc.iter_mut().zip(row) {
                *a += x.as_f64();
            }
        }
        let n = self.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// Remove the member in `slot`; returns the id moved into that slot, if any.
    pub(crate) fn swap_remove(&mut self, slot: usize) -> (Vec<T>, f64, Option<VectorId>) {
        let d = self.dim();
        let last = self.ids.len() - 1;
        let row = self.row(slot).to_vec();
        let dist = self.assign_dist[slot];
        self.ids.swap_remove(slot);
        self.assign_dist.swap_remove(slot);
        if slot != last {
            let (head, tail) = self.data.split_at_mut(last * d);
            head[slot * d..(slot + 1) * d].copy_from_slice(&tail[..d]);
        }
        self.data.truncate(last * d);
        let moved = (slot != last).then(|| self.ids[slot]);
        (row, dist, moved)
    }
}

/// Fixed-capacity buffer of recent inserts, scanned exhaustively by every search.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaStore<T> {
    pub(crate) capacity: usize,
    pub(crate) ids: Vec<VectorId>,
    pub(crate) data: Vec<T>,
}

impl<T: Scalar> DeltaStore<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            ids: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[VectorId] {
        &self.ids
    }

    pub fn vectors(&self) -> &[T] {
        &self.data
    }

    pub(crate) fn swap_remove(&mut self, slot: usize, dim: usize) -> Option<VectorId> {
        let last = self.ids.len() - 1;
        self.ids.swap_remove(slot);
        if slot != last {
            let (head, tail) = self.data.split_at_mut(last * dim);
            head[slot * dim..(slot + 1) * dim].copy_from_slice(&tail[..dim]);
        }
        self.data.truncate(last * dim);
        (slot != last).then(|| self.ids[slot])
    }
}
