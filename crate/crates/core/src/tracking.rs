//! Per-partition metadata and index-wide statistics.
//!
//! A partition tracks its size, the mean at creation (`mu0`), its running
//! mean (`mu`), a read temperature and its last reindexing score. The index
//! tracks the partition-size deviation and reconstruction error against the
//! baselines captured at the last full build.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::PartitionId;
use crate::scalar::Scalar;

/// Temperatures saturate here so that `T * 0` never becomes `inf * 0`.
pub const MAX_TEMPERATURE: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionMeta<T> {
    pub size: usize,
    pub mu0: Vec<T>,
    pub mu: Vec<T>,
    /// Read temperature, always in `[1.0, MAX_TEMPERATURE]`.
    pub temperature: f64,
    pub score: f64,
}

impl<T: Scalar> PartitionMeta<T> {
    /// Fresh metadata for a partition whose member mean is `mean`.
    pub fn new(size: usize, mean: Vec<T>) -> Self {
        Self {
            size,
            mu0: mean.clone(),
            mu: mean,
            temperature: 1.0,
            score: 0.0,
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t.clamp(1.0, MAX_TEMPERATURE);
        self
    }

    /// Bytes of tracked state: two `d`-vectors plus three scalars.
    pub fn footprint_bytes(&self) -> usize {
        (self.mu0.len() + self.mu.len()) * T::BYTES + 3 * 4
    }
}

/// Outcome of [`update_partition_properties`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionUpdate {
    Updated,
    /// The partition reached size zero; the caller removes it. The mean is
    /// left untouched.
    Emptied,
}

/// Apply a batch of inserted or deleted vectors (row-major `delta`) to the
/// size and running mean:
/// `mu <- mu + (s_delta / s_new) * (mean(delta) - mu)` with `s_delta` negative
/// for deletes.
pub fn update_partition_properties<T: Scalar>(
    meta: &mut PartitionMeta<T>,
    delta: &[T],
    is_delete: bool,
) -> Result<PartitionUpdate> {
    let dim = meta.mu.len();
    if delta.is_empty() || dim == 0 {
        return Err(Error::EmptyDelta);
    }
    if !delta.len().is_multiple_of(dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: delta.len() % dim,
        });
    }
    let m = delta.len() / dim;
    let new_size = if is_delete {
        meta.size.checked_sub(m).ok_or(Error::Underflow {
            size: meta.size,
            removed: m,
        })?
    } else {
        meta.size + m
    };
    if new_size == 0 {
        meta.size = 0;
        return Ok(PartitionUpdate::Emptied);
    }
    let mut mean_delta = vec![0f64; dim];
    for row in delta.chunks_exact(dim) {
        for (acc, x) in mean_delta.iter_mut().zip(row) {
            *acc += x.as_f64();
        }
    }
    let s_delta = if is_delete { -(m as f64) } else { m as f64 };
    let step = s_delta / new_size as f64;
    for (mu, md) in meta.mu.iter_mut().zip(&mean_delta) {
        let cur = mu.as_f64();
        *mu = T::from_f64_lossy(cur + step * (md / m as f64 - cur));
    }
    meta.size = new_size;
    Ok(PartitionUpdate::Updated)
}

/// Temperature parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureParams {
    /// Heating factor, > 0.
    pub eta: f64,
    /// Cooling factor in `[0, 1)`.
    pub nu: f64,
}

impl Default for TemperatureParams {
    fn default() -> Self {
        Self { eta: 0.5, nu: 0.01 }
    }
}

/// Scaled distance of each probed partition: nearest distance over its own.
/// A non-positive nearest distance (query on a centroid, or inner-product
/// scores) gives every probed partition 1.0.
pub fn scaled_probe_distances(probed: &[(PartitionId, f64)]) -> Vec<f64> {
    let nearest = probed
        .iter()
        .map(|p| p.1)
        .fold(f64::INFINITY, f64::min);
    probed
        .iter()
        .map(|&(_, d)| {
            if nearest <= 0.0 || d <= 0.0 {
                1.0
            } else {
                (nearest / d).min(1.0)
            }
        })
        .collect()
}

/// One query's temperature update over every partition: probed partitions
/// heat by `T * (1 + d * eta)`, all others cool to `max(T * (1 - nu), 1)`.
pub fn update_temperature<'a, T: Scalar + 'a>(
    metas: impl IntoIterator<Item = (PartitionId, &'a mut PartitionMeta<T>)>,
    probed: &[(PartitionId, f64)],
    params: TemperatureParams,
) -> Result<()> {
    if probed.is_empty() {
        return Err(Error::NoProbes);
    }
    let scaled: HashMap<PartitionId, f64> = probed
        .iter()
        .map(|p| p.0)
        .zip(scaled_probe_distances(probed))
        .collect();
    for (pid, meta) in metas {
        meta.temperature = match scaled.get(&pid) {
            Some(d) => (meta.temperature * (1.0 + d * params.eta)).min(MAX_TEMPERATURE),
            None => (meta.temperature * (1.0 - params.nu)).max(1.0),
        };
    }
    Ok(())
}

/// Index-wide statistics and the baselines frozen at the last full build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalStats {
    pub dim: usize,
    pub sigma0: f64,
    pub sigma: f64,
    pub eps0: f64,
    pub eps: f64,
    pub n0: usize,
    pub n: usize,
}

/// Estimated reconstruction error of a full rebuild over `n` vectors:
/// `eps0 * (n0 / n)^(1/d)`.
pub fn estimate_ideal_error(stats: &GlobalStats) -> f64 {
    if stats.n == 0 || stats.dim == 0 {
        return stats.eps0;
    }
    stats.eps0 * (stats.n0 as f64 / stats.n as f64).powf(1.0 / stats.dim as f64)
}

/// Population standard deviation of partition sizes.
pub fn partition_size_std(sizes: &[usize]) -> f64 {
    if sizes.is_empty() {
        return 0.0;
    }
    let n = sizes.len() as f64;
    let mean = sizes.iter().map(|&s| s as f64).sum::<f64>() / n;
    let var = sizes
        .iter()
        .map(|&s| {
            let d = s as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    var.sqrt()
}
