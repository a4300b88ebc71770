//! The IVF index: partitions addressed by [`PartitionId`], a delta store for
//! recent inserts, and an id map that locates every live vector.
//!
//! Inserts and deletes are grouped by destination partition so the running
//! mean of each touched partition is updated once per batch. Partitions that
//! become empty are dropped together with their centroid.

mod partition;
mod snapshot;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};

use rayon::prelude::*;

pub use partition::{DeltaStore, Partition, PartitionId};
pub use snapshot::{read_snapshot, write_snapshot, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

use crate::clustering::{balanced_kmeans, knn_centroids, nearest_centroid, ClusteringResult, KMeansParams};
use crate::config::IndexConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tracking::{
    partition_size_std, scaled_probe_distances, update_partition_properties, update_temperature,
    GlobalStats, MAX_TEMPERATURE,
    PartitionMeta, PartitionUpdate, TemperatureParams,
};
use crate::vector::{squared_l2, VectorDataset, VectorId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Location {
    Partition(PartitionId, usize),
    Delta(usize),
}

/// What one insert, delete or flush did to the index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateReport {
    pub inserted: usize,
    pub deleted: usize,
    /// Inserted vectors that went to the delta store.
    pub buffered: usize,
    /// Deleted vectors that were found in the delta store.
    pub deleted_from_delta: usize,
    /// Delta entries moved into partitions.
    pub flushed: usize,
    /// Partitions that gained or lost vectors, with the number moved.
    pub modified: Vec<(PartitionId, usize)>,
    pub created: Vec<PartitionId>,
    pub removed: Vec<PartitionId>,
    pub distance_evals: u64,
}

impl UpdateReport {
    fn absorb(&mut self, other: UpdateReport) {
        self.inserted += other.inserted;
        self.deleted += other.deleted;
        self.buffered += other.buffered;
        self.deleted_from_delta += other.deleted_from_delta;
        self.flushed += other.flushed;
        self.modified.extend(other.modified);
        self.created.extend(other.created);
        self.removed.extend(other.removed);
        self.distance_evals += other.distance_evals;
    }

    /// True when at least one partition changed membership.
    pub fn touched_partitions(&self) -> bool {
        !self.modified.is_empty() || !self.created.is_empty() || !self.removed.is_empty()
    }
}

pub type InsertReport = UpdateReport;
pub type DeleteReport = UpdateReport;
pub type FlushReport = UpdateReport;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult<T> {
    /// Ascending by distance, ties by lower id.
    pub hits: Vec<(VectorId, T)>,
    /// Probed partitions with their centroid distance, nearest first.
    pub probed: Vec<(PartitionId, T)>,
    /// Vectors scanned (partition members plus delta entries).
    pub scanned: usize,
    pub distance_evals: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate<T> {
    dist: T,
    id: VectorId,
}

impl<T: Scalar> Eq for Candidate<T> {}

impl<T: Scalar> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Candidate<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .partial_cmp(&other.dist)
            .unwrap_or(Ordering::Equal)
            .then(self.id.cmp(&other.id))
    }
}

/// Bounded max-heap keeping the `k` smallest `(distance, id)` pairs.
struct TopK<T> {
    k: usize,
    heap: BinaryHeap<Candidate<T>>,
}

impl<T: Scalar> TopK<T> {
    fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    fn push(&mut self, id: VectorId, dist: T) {
        let c = Candidate { dist, id };
        if self.heap.len() < self.k {
            self.heap.push(c);
        } else if let Some(top) = self.heap.peek() {
            if c < *top {
                self.heap.pop();
                self.heap.push(c);
            }
        }
    }

    fn into_sorted(self) -> Vec<(VectorId, T)> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| (c.id, c.dist))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct IvfIndex<T> {
    config: IndexConfig,
    dim: usize,
    partitions: BTreeMap<PartitionId, Partition<T>>,
    id_map: HashMap<VectorId, Location>,
    delta: DeltaStore<T>,
    stats: GlobalStats,
    next_partition: u64,
    track_centroids: bool,
    /// Sum of cached member-to-centroid distances over partition members.
    eps_sum: f64,
    builds: u64,
    centroid_cache: Vec<T>,
    centroid_pids: Vec<PartitionId>,
}

impl<T: Scalar> IvfIndex<T> {
    /// Build over `dataset` with `config.n_c` partitions.
    pub fn build(dataset: &VectorDataset<T>, config: IndexConfig) -> Result<Self> {
        config.validate()?;
        if dataset.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if config.n_c > dataset.len() {
            return Err(Error::InvalidK {
                k: config.n_c,
                n: dataset.len(),
            });
        }
        let mut index = Self::empty(dataset.dim(), config);
        let mut rows: Vec<(VectorId, &[T])> = dataset.iter().collect();
        rows.sort_by_key(|r| r.0);
        let ids: Vec<VectorId> = rows.iter().map(|r| r.0).collect();
        let data: Vec<T> = rows.iter().flat_map(|r| r.1.iter().copied()).collect();
        let n_c = index.config.n_c;
        index.install_full_clustering(ids, data, n_c)?;
        Ok(index)
    }

    /// An index with no partitions.
    pub fn empty(dim: usize, config: IndexConfig) -> Self {
        let capacity = config.delta_capacity;
        Self {
            config,
            dim,
            partitions: BTreeMap::new(),
            id_map: HashMap::new(),
            delta: DeltaStore::new(capacity),
            stats: GlobalStats {
                dim,
                sigma0: 0.0,
                sigma: 0.0,
                eps0: 0.0,
                eps: 0.0,
                n0: 0,
                n: 0,
            },
            next_partition: 0,
            track_centroids: true,
            eps_sum: 0.0,
            builds: 0,
            centroid_cache: Vec::new(),
            centroid_pids: Vec::new(),
        }
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Live vectors: partition members plus delta entries.
    pub fn len(&self) -> usize {
        self.id_map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_map.is_empty()
    }

    pub fn partition_count(&self) -> usize {
        self.partitions.len()
    }

    pub fn partitioned_len(&self) -> usize {
        self.partitions.values().map(Partition::len).sum()
    }

    pub fn partitions(&self) -> impl Iterator<Item = &Partition<T>> + '_ {
        self.partitions.values()
    }

    pub fn partition(&self, pid: PartitionId) -> Option<&Partition<T>> {
        self.partitions.get(&pid)
    }

    pub fn partition_ids(&self) -> Vec<PartitionId> {
        self.partitions.keys().copied().collect()
    }

    pub fn partition_sizes(&self) -> Vec<usize> {
        self.partitions.values().map(Partition::len).collect()
    }

    pub fn delta(&self) -> &DeltaStore<T> {
        &self.delta
    }

    pub fn contains(&self, id: VectorId) -> bool {
        self.id_map.contains_key(&id)
    }

    /// Partition currently holding `id`; `None` for delta entries and unknown ids.
    pub fn partition_of(&self, id: VectorId) -> Option<PartitionId> {
        match self.id_map.get(&id)? {
            Location::Partition(pid, _) => Some(*pid),
            Location::Delta(_) => None,
        }
    }

    pub fn get(&self, id: VectorId) -> Option<&[T]> {
        match *self.id_map.get(&id)? {
            Location::Partition(pid, slot) => Some(self.partitions[&pid].row(slot)),
            Location::Delta(slot) => Some(&self.delta.data[slot * self.dim..(slot + 1) * self.dim]),
        }
    }

    /// Every live vector as `(id, vector)`, ascending by id.
    pub fn live_vectors(&self) -> Vec<(VectorId, &[T])> {
        let mut out: Vec<(VectorId, &[T])> = self
            .partitions
            .values()
            .flat_map(|p| p.iter())
            .chain(self.delta.ids.iter().copied().zip(self.delta.data.chunks_exact(self.dim)))
            .collect();
        out.sort_by_key(|r| r.0);
        out
    }

    /// Row-major centroid matrix and the partition of each row, in id order.
    pub fn centroids(&self) -> (&[T], &[PartitionId]) {
        (&self.centroid_cache, &self.centroid_pids)
    }

    /// When disabled, membership changes only move size counters and the
    /// centroids stay where the last clustering put them.
    pub fn set_centroid_tracking(&mut self, enabled: bool) {
        self.track_centroids = enabled;
    }

    pub fn centroid_tracking(&self) -> bool {
        self.track_centroids
    }

    /// Number of full clusterings performed (initial build included).
    pub fn build_count(&self) -> u64 {
        self.builds
    }

    pub fn set_default_probes(&mut self, n_p: usize) {
        self.config.n_p = n_p.max(1);
    }

    /// Approximate `k` nearest neighbours scanning the `n_p` nearest partitions
    /// and the whole delta store.
    pub fn search(&self, query: &[T], k: usize, n_p: usize) -> Result<SearchResult<T>> {
        if k == 0 {
            return Err(Error::InvalidK { k, n: self.len() });
        }
        if n_p == 0 {
            return Err(Error::InvalidProbe(0));
        }
        if query.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: query.len(),
            });
        }
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let metric = self.config.metric;
        let mut top = TopK::new(k);
        let mut probed = Vec::new();
        let mut scanned = 0usize;
        let mut evals = 0u64;
        if !self.partitions.is_empty() {
            let np = n_p.min(self.partitions.len());
            let nearest = knn_centroids(query, &self.centroid_cache, self.dim, np, metric)?;
            evals += self.partitions.len() as u64;
            for (row, d) in nearest {
                let pid = self.centroid_pids[row];
                probed.push((pid, d));
                let part = &self.partitions[&pid];
                for (id, v) in part.iter() {
                    top.push(id, metric.eval(query, v));
                }
                scanned += part.len();
            }
        }
        for (id, v) in self.delta.ids.iter().zip(self.delta.data.chunks_exact(self.dim)) {
            top.push(*id, metric.eval(query, v));
        }
        scanned += self.delta.len();
        evals += scanned as u64;
        Ok(SearchResult {
            hits: top.into_sorted(),
            probed,
            scanned,
            distance_evals: evals,
        })
    }

    fn check_new_batch(&self, ids: &[VectorId], vectors: &[T]) -> Result<()> {
        if vectors.len() != ids.len() * self.dim {
            return Err(Error::Dimension {
                expected: ids.len() * self.dim,
                got: vectors.len(),
            });
        }
        if vectors.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in ids {
            if self.id_map.contains_key(id) || !seen.insert(*id) {
                return Err(Error::DuplicateId(*id));
            }
        }
        Ok(())
    }

    /// Insert a batch (row-major `vectors`, one row per id). Rejected as a
    /// whole if any id is already live or repeated.
    pub fn insert(&mut self, ids: &[VectorId], vectors: &[T]) -> Result<InsertReport> {
        self.check_new_batch(ids, vectors)?;
        let mut report = UpdateReport::default();
        if ids.is_empty() {
            return Ok(report);
        }
        let cap = self.delta.capacity;
        if cap > 0 {
            if self.delta.len() + ids.len() > cap {
                report.absorb(self.flush_delta());
            }
            if ids.len() <= cap {
                for (i, id) in ids.iter().enumerate() {
                    self.id_map.insert(*id, Location::Delta(self.delta.len()));
                    self.delta.ids.push(*id);
                    self.delta
                        .data
                        .extend_from_slice(&vectors[i * self.dim..(i + 1) * self.dim]);
                }
                report.inserted += ids.len();
                report.buffered += ids.len();
                self.stats.n = self.len();
                return Ok(report);
            }
        }
        let routed = self.route(ids, vectors);
        report.inserted += ids.len();
        report.absorb(routed);
        Ok(report)
    }

    /// Move every delta entry into its nearest partition.
    pub fn flush_delta(&mut self) -> FlushReport {
        if self.delta.is_empty() {
            return UpdateReport::default();
        }
        let ids = std::mem::take(&mut self.delta.ids);
        let data = std::mem::take(&mut self.delta.data);
        let mut report = self.route(&ids, &data);
        report.flushed = ids.len();
        report
    }

    /// Append rows to their nearest partitions (squared L2 to the routing
    /// centroid), applying the partition update rule once per partition.
    fn route(&mut self, ids: &[VectorId], vectors: &[T]) -> UpdateReport {
        let dim = self.dim;
        let mut report = UpdateReport::default();
        if self.partitions.is_empty() {
            let pid = self.alloc_partition_id();
            let mean = crate::clustering::cluster_means(vectors, dim, 1, &vec![0; ids.len()]);
            let assign_dist: Vec<f64> = vectors
                .chunks_exact(dim)
                .map(|v| squared_l2(v, &mean).as_f64())
                .collect();
            self.eps_sum += assign_dist.iter().sum::<f64>();
            for (slot, id) in ids.iter().enumerate() {
                self.id_map.insert(*id, Location::Partition(pid, slot));
            }
            self.partitions.insert(
                pid,
                Partition {
                    id: pid,
                    ids: ids.to_vec(),
                    data: vectors.to_vec(),
                    assign_dist,
                    meta: PartitionMeta::new(ids.len(), mean),
                },
            );
            report.created.push(pid);
            report.distance_evals += ids.len() as u64;
            self.after_mutation();
            return report;
        }

        let cents = &self.centroid_cache;
        let nearest: Vec<(usize, T)> = vectors
            .par_chunks(dim)
            .with_min_len(64)
            .map(|v| nearest_centroid(v, cents, dim))
            .collect();
        report.distance_evals += (ids.len() * self.partitions.len()) as u64;

        let mut groups: BTreeMap<PartitionId, Vec<usize>> = BTreeMap::new();
        for (row, (c, _)) in nearest.iter().enumerate() {
            groups.entry(self.centroid_pids[*c]).or_default().push(row);
        }
        for (pid, rows) in groups {
            let mut batch = Vec::with_capacity(rows.len() * dim);
            for &r in &rows {
                batch.extend_from_slice(&vectors[r * dim..(r + 1) * dim]);
            }
            let part = self.partitions.get_mut(&pid).expect("routed to live partition");
            for &r in &rows {
                let slot = part.ids.len();
                part.ids.push(ids[r]);
                part.data.extend_from_slice(&vectors[r * dim..(r + 1) * dim]);
                let d = nearest[r].1.as_f64();
                part.assign_dist.push(d);
                self.eps_sum += d;
                self.id_map.insert(ids[r], Location::Partition(pid, slot));
            }
            if self.track_centroids {
                update_partition_properties(&mut part.meta, &batch, false)
                    .expect("non-empty insert batch");
            } else {
                part.meta.size += rows.len();
            }
            report.modified.push((pid, rows.len()));
        }
        self.after_mutation();
        report
    }

    /// Delete a batch of ids. Rejected as a whole if any id is not live.
    pub fn delete(&mut self, ids: &[VectorId]) -> Result<DeleteReport> {
        let mut seen = HashSet::with_capacity(ids.len());
        for id in ids {
            if !self.id_map.contains_key(id) || !seen.insert(*id) {
                return Err(Error::NotFound(*id));
            }
        }
        let dim = self.dim;
        let mut report = UpdateReport {
            deleted: ids.len(),
            ..Default::default()
        };
        let mut groups: BTreeMap<PartitionId, Vec<VectorId>> = BTreeMap::new();
        for id in ids {
            match self.id_map[id] {
                Location::Delta(_) => {
                    let Some(Location::Delta(slot)) = self.id_map.remove(id) else {
                        unreachable!()
                    };
                    if let Some(moved) = self.delta.swap_remove(slot, dim) {
                        self.id_map.insert(moved, Location::Delta(slot));
                    }
                    report.deleted_from_delta += 1;
                }
                Location::Partition(pid, _) => groups.entry(pid).or_default().push(*id),
            }
        }
        for (pid, members) in groups {
            let part = self.partitions.get_mut(&pid).expect("id map points at live partition");
            let mut removed = Vec::with_capacity(members.len() * dim);
            for id in &members {
                let Some(Location::Partition(_, slot)) = self.id_map.remove(id) else {
                    unreachable!()
                };
                let (row, dist, moved) = part.swap_remove(slot);
                removed.extend_from_slice(&row);
                self.eps_sum -= dist;
                if let Some(m) = moved {
                    self.id_map.insert(m, Location::Partition(pid, slot));
                }
            }
            report.modified.push((pid, members.len()));
            let emptied = if self.track_centroids {
                update_partition_properties(&mut part.meta, &removed, true)?
                    == PartitionUpdate::Emptied
            } else {
                part.meta.size -= members.len();
                part.meta.size == 0
            };
            if emptied {
                self.partitions.remove(&pid);
                report.removed.push(pid);
            }
        }
        if self.partitions.is_empty() {
            self.eps_sum = 0.0;
        }
        self.after_mutation();
        Ok(report)
    }

    /// Apply one query's probe set to every partition's temperature.
    pub fn update_temperatures(
        &mut self,
        probed: &[(PartitionId, T)],
        params: TemperatureParams,
    ) -> Result<()> {
        let probed: Vec<(PartitionId, f64)> = probed.iter().map(|(p, d)| (*p, d.as_f64())).collect();
        update_temperature(
            self.partitions.iter_mut().map(|(pid, p)| (*pid, &mut p.meta)),
            &probed,
            params,
        )
    }

    /// Temperature update for a whole search batch. With `cool_per_query`
    /// each query heats and cools in turn; otherwise each query only heats
    /// and partitions probed by no query cool once at the end.
    pub fn update_temperatures_batch(
        &mut self,
        probes: &[Vec<(PartitionId, T)>],
        params: TemperatureParams,
        cool_per_query: bool,
    ) -> Result<()> {
        if cool_per_query {
            for p in probes {
                self.update_temperatures(p, params)?;
            }
            return Ok(());
        }
        let mut hit = HashSet::new();
        for p in probes {
            if p.is_empty() {
                return Err(Error::NoProbes);
            }
            let probed: Vec<(PartitionId, f64)> = p.iter().map(|(q, d)| (*q, d.as_f64())).collect();
            for ((pid, _), d) in probed.iter().zip(scaled_probe_distances(&probed)) {
                if let Some(part) = self.partitions.get_mut(pid) {
                    let t = part.meta.temperature * (1.0 + d * params.eta);
                    part.meta.temperature = t.min(MAX_TEMPERATURE);
                }
                hit.insert(*pid);
            }
        }
        for (pid, part) in self.partitions.iter_mut() {
            if !hit.contains(pid) {
                part.meta.temperature = (part.meta.temperature * (1.0 - params.nu)).max(1.0);
            }
        }
        Ok(())
    }

    /// Exact mean squared distance of partition members to their partition
    /// centroid. Delta entries are excluded.
    pub fn compute_reconstruction_error(&self) -> Result<f64> {
        let n = self.partitioned_len();
        if n == 0 {
            return Err(Error::EmptyIndex);
        }
        let total: f64 = self
            .partitions
            .values()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|p| {
                p.data
                    .chunks_exact(self.dim)
                    .map(|v| squared_l2(v, &p.meta.mu).as_f64())
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        Ok(total / n as f64)
    }

    /// Recompute every cached assignment distance against the current
    /// centroids and return the exact reconstruction error (0 when empty).
    pub fn refresh_reconstruction_error(&mut self) -> f64 {
        let dim = self.dim;
        let sums: Vec<f64> = self
            .partitions
            .values_mut()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|p| {
                let mu = &p.meta.mu;
                let mut s = 0.0;
                for (d, v) in p.assign_dist.iter_mut().zip(p.data.chunks_exact(dim)) {
                    *d = squared_l2(v, mu).as_f64();
                    s += *d;
                }
                s
            })
            .collect();
        self.eps_sum = sums.iter().sum();
        self.stats.eps = self.tracked_error();
        self.stats.eps
    }

    /// Reconstruction error from cached assignment distances.
    pub fn tracked_error(&self) -> f64 {
        let n = self.partitioned_len();
        if n == 0 {
            0.0
        } else {
            self.eps_sum.max(0.0) / n as f64
        }
    }

    /// Current statistics: `sigma`, `n` and tracked `eps` are refreshed, the
    /// baselines are those of the last full build.
    pub fn stats(&self) -> GlobalStats {
        GlobalStats {
            sigma: partition_size_std(&self.partition_sizes()),
            eps: self.tracked_error(),
            n: self.len(),
            ..self.stats.clone()
        }
    }

    /// Capture the current state as the rebuild baseline (`sigma0`, `eps0`,
    /// `n0`) and reset every partition's `mu0`, temperature and score.
    pub fn reset_baselines(&mut self) {
        let eps = self.refresh_reconstruction_error();
        let sigma = partition_size_std(&self.partition_sizes());
        self.stats = GlobalStats {
            dim: self.dim,
            sigma0: sigma,
            sigma,
            eps0: eps,
            eps,
            n0: self.len(),
            n: self.len(),
        };
        for p in self.partitions.values_mut() {
            p.meta.mu0 = p.meta.mu.clone();
            p.meta.temperature = 1.0;
            p.meta.score = 0.0;
        }
    }

    /// Full rebuild over every live vector (delta included) into `n_c`
    /// partitions, resetting all baselines.
    pub fn rebuild(&mut self, n_c: usize) -> Result<u64> {
        let live = self.live_vectors();
        if live.is_empty() {
            return Ok(0);
        }
        let ids: Vec<VectorId> = live.iter().map(|r| r.0).collect();
        let data: Vec<T> = live.iter().flat_map(|r| r.1.iter().copied()).collect();
        let n_c = n_c.clamp(1, ids.len());
        self.partitions.clear();
        self.id_map.clear();
        self.delta.ids.clear();
        self.delta.data.clear();
        self.eps_sum = 0.0;
        self.install_full_clustering(ids, data, n_c)
    }

    fn install_full_clustering(&mut self, ids: Vec<VectorId>, data: Vec<T>, n_c: usize) -> Result<u64> {
        let params = KMeansParams::new(n_c, self.config.build_iterations)
            .with_seed(self.config.seed)
            .with_slack(self.config.balance_slack);
        let result = balanced_kmeans(&data, self.dim, &params)?;
        let evals = result.distance_evals;
        self.install_clusters(&ids, &data, &result, 1.0);
        self.builds += 1;
        self.after_mutation();
        self.reset_baselines();
        Ok(evals)
    }

    /// Add one partition per cluster of `result` (rows of `data` aligned with
    /// `ids`). Each partition's centroid is its member mean.
    pub(crate) fn install_clusters(
        &mut self,
        ids: &[VectorId],
        data: &[T],
        result: &ClusteringResult<T>,
        temperature: f64,
    ) -> Vec<PartitionId> {
        let dim = self.dim;
        let mut created = Vec::new();
        for rows in result.members() {
            if rows.is_empty() {
                continue;
            }
            let pid = self.alloc_partition_id();
            let mut pdata = Vec::with_capacity(rows.len() * dim);
            let mut pids = Vec::with_capacity(rows.len());
            for &r in &rows {
                pids.push(ids[r]);
                pdata.extend_from_slice(&data[r * dim..(r + 1) * dim]);
            }
            let mean = crate::clustering::cluster_means(&pdata, dim, 1, &vec![0; rows.len()]);
            let assign_dist: Vec<f64> = pdata
                .chunks_exact(dim)
                .map(|v| squared_l2(v, &mean).as_f64())
                .collect();
            self.eps_sum += assign_dist.iter().sum::<f64>();
            for (slot, id) in pids.iter().enumerate() {
                self.id_map.insert(*id, Location::Partition(pid, slot));
            }
            self.partitions.insert(
                pid,
                Partition {
                    id: pid,
                    ids: pids,
                    data: pdata,
                    assign_dist,
                    meta: PartitionMeta::new(rows.len(), mean).with_temperature(temperature),
                },
            );
            created.push(pid);
        }
        created
    }

    /// Detach a partition. Its members stay in the id map until reinstalled
    /// by the caller.
    pub(crate) fn take_partition(&mut self, pid: PartitionId) -> Option<Partition<T>> {
        let p = self.partitions.remove(&pid)?;
        self.eps_sum -= p.assign_dist.iter().sum::<f64>();
        Some(p)
    }

    pub(crate) fn partitions_mut(&mut self) -> impl Iterator<Item = &mut Partition<T>> + '_ {
        self.partitions.values_mut()
    }

    fn alloc_partition_id(&mut self) -> PartitionId {
        let pid = PartitionId(self.next_partition);
        self.next_partition += 1;
        pid
    }

    /// Rebuild the centroid matrix and refresh the live count.
    pub(crate) fn after_mutation(&mut self) {
        self.centroid_cache.clear();
        self.centroid_pids.clear();
        for (pid, p) in &self.partitions {
            self.centroid_cache.extend_from_slice(&p.meta.mu);
            self.centroid_pids.push(*pid);
        }
        self.stats.n = self.len();
    }

    /// Full consistency audit: id map against partition and delta contents,
    /// tracked sizes against member counts, delta capacity.
    pub fn audit(&self) -> std::result::Result<(), String> {
        let mut seen = 0usize;
        for (pid, p) in &self.partitions {
            if p.is_empty() {
                return Err(format!("{pid} is empty"));
            }
            if p.meta.size != p.len() {
                return Err(format!("{pid} tracks size {} but holds {}", p.meta.size, p.len()));
            }
            if p.data.len() != p.len() * self.dim || p.assign_dist.len() != p.len() {
                return Err(format!("{pid} storage out of shape"));
            }
            if p.meta.temperature < 1.0 {
                return Err(format!("{pid} temperature {} below floor", p.meta.temperature));
            }
            for (slot, id) in p.ids.iter().enumerate() {
                match self.id_map.get(id) {
                    Some(Location::Partition(q, s)) if q == pid && *s == slot => {}
                    other => return Err(format!("{id} in {pid}/{slot} but id map says {other:?}")),
                }
            }
            seen += p.len();
        }
        if self.delta.len() > self.delta.capacity && self.delta.capacity > 0 {
            return Err(format!(
                "delta holds {} over capacity {}",
                self.delta.len(),
                self.delta.capacity
            ));
        }
        if self.delta.capacity == 0 && !self.delta.is_empty() {
            return Err("delta non-empty with zero capacity".into());
        }
        for (slot, id) in self.delta.ids.iter().enumerate() {
            match self.id_map.get(id) {
                Some(Location::Delta(s)) if *s == slot => {}
                other => return Err(format!("{id} in delta/{slot} but id map says {other:?}")),
            }
        }
        seen += self.delta.len();
        if seen != self.id_map.len() {
            return Err(format!("id map has {} entries, storage {}", self.id_map.len(), seen));
        }
        if self.centroid_pids.len() != self.partitions.len() {
            return Err("stale centroid cache".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
