use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::DistanceMetric;

/// Construction and search parameters of an [`IvfIndex`](crate::index::IvfIndex).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexConfig {
    /// Initial partition count.
    pub n_c: usize,
    /// Default probe count.
    pub n_p: usize,
    pub metric: DistanceMetric,
    /// Target partition size, also used to size full rebuilds.
    pub target_partition_size: usize,
    /// Delta store capacity; 0 routes inserts straight into partitions.
    pub delta_capacity: usize,
    pub seed: u64,
    /// Lloyd iterations for full builds.
    pub build_iterations: usize,
    /// Balanced k-means capacity slack (max cluster size is `ceil(n/k * slack)`).
    pub balance_slack: f64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            n_c: 100,
            n_p: 8,
            metric: DistanceMetric::SquaredL2,
            target_partition_size: 1000,
            delta_capacity: 0,
            seed: 0,
            build_iterations: 10,
            balance_slack: 1.25,
        }
    }
}

impl IndexConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_c == 0 {
            return Err(Error::InvalidK { k: 0, n: 0 });
        }
        if self.n_p == 0 {
            return Err(Error::InvalidProbe(0));
        }
        if self.target_partition_size == 0 {
            return Err(Error::Spec("target partition size must be >= 1".into()));
        }
        if !(self.balance_slack >= 1.0) {
            return Err(Error::Spec("balance slack must be >= 1.0".into()));
        }
        Ok(())
    }
}
