use std::collections::BTreeSet;

use crate::clustering::{balanced_kmeans, knn_centroids, KMeansParams};
use crate::error::{Error, Result};
use crate::index::{IvfIndex, Partition, PartitionId};
use crate::scalar::Scalar;
use crate::vector::{DistanceMetric, VectorId};

/// What a local reindexing pass removed and created.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LocalReindexReport {
    /// Violators larger than the target size, split before reclustering.
    pub splits: usize,
    /// Violators at or below the target size, pooled without splitting.
    pub merges: usize,
    /// Violators plus their neighbours.
    pub removed: Vec<PartitionId>,
    pub created: Vec<PartitionId>,
    pub distance_evals: u64,
}

/// Member pool gathered from removed partitions.
struct Pool<T> {
    ids: Vec<VectorId>,
    data: Vec<T>,
    heat: f64,
}

impl<T: Scalar> Pool<T> {
    fn absorb(&mut self, part: &Partition<T>) {
        self.ids.extend_from_slice(part.ids());
        self.data.extend_from_slice(part.vectors());
        self.heat += part.meta().temperature * part.len() as f64;
    }
}

fn seed_for(base: u64, pid: PartitionId) -> u64 {
    base ^ pid.0.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Split oversized violators, pull in the `r_c` nearest surviving partitions
/// of every seed centroid, and recluster the pooled vectors seeded with all
/// collected centroids. New partitions inherit the size-weighted mean
/// temperature of the partitions they replace.
pub fn local_reindex<T: Scalar>(
    index: &mut IvfIndex<T>,
    violators: &[PartitionId],
    tau_s: usize,
    r_c: usize,
    iota: usize,
) -> Result<LocalReindexReport> {
    let violators: BTreeSet<PartitionId> = violators.iter().copied().collect();
    if let Some(missing) = violators.iter().find(|p| index.partition(**p).is_none()) {
        return Err(Error::PartitionNotFound(missing.0));
    }
    let mut report = LocalReindexReport::default();
    if violators.is_empty() {
        return Ok(report);
    }
    let dim = index.dim();
    let seed = index.config().seed;
    let slack = index.config().balance_slack;
    let tau_s = tau_s.max(1);

    let mut pool = Pool::<T> {
        ids: Vec::new(),
        data: Vec::new(),
        heat: 0.0,
    };
    let mut seeds: Vec<T> = Vec::new();
    for &pid in &violators {
        let part = index.take_partition(pid).expect("checked above");
        if part.len() > tau_s {
            let k = part.len().div_ceil(tau_s);
            let params = KMeansParams::new(k, iota)
                .with_seed(seed_for(seed, pid))
                .with_slack(slack);
            let split = balanced_kmeans(part.vectors(), dim, &params)?;
            report.distance_evals += split.distance_evals;
            seeds.extend_from_slice(&split.centroids);
            report.splits += 1;
        } else {
            seeds.extend_from_slice(part.centroid());
            report.merges += 1;
        }
        pool.absorb(&part);
        report.removed.push(pid);
    }
    index.after_mutation();

    let survivors = index.partition_count();
    if survivors > 0 && r_c > 0 {
        let k = r_c.min(survivors);
        let mut neighbours = BTreeSet::new();
        {
            let (cents, pids) = index.centroids();
            for m in seeds.chunks_exact(dim) {
                for (row, _) in knn_centroids(m, cents, dim, k, DistanceMetric::SquaredL2)? {
                    neighbours.insert(pids[row]);
                }
            }
        }
        report.distance_evals += (seeds.len() / dim * survivors) as u64;
        for pid in neighbours {
            let part = index.take_partition(pid).expect("neighbour is live");
            seeds.extend_from_slice(part.centroid());
            pool.absorb(&part);
            report.removed.push(pid);
        }
    }

    let k = seeds.len() / dim;
    let n = pool.ids.len();
    let temperature = pool.heat / n as f64;
    let params = KMeansParams::new(k, iota)
        .with_seed(seed)
        .with_slack(slack)
        .with_initial_centroids(seeds);
    let result = balanced_kmeans(&pool.data, dim, &params)?;
    report.distance_evals += result.distance_evals;
    report.created = index.install_clusters(&pool.ids, &pool.data, &result, temperature);
    index.after_mutation();
    Ok(report)
}
