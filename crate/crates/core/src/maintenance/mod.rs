//! Reindexing decisions and the maintenance policies.
//!
//! [`check_reindex`] collects local violators, reindexes their neighbourhood
//! and then falls back to a full rebuild when the global indicator crosses
//! its threshold. [`Maintainer`] drives any [`MaintenancePolicy`] after each
//! update batch.

mod indicator;
mod reindex;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use indicator::{
    drift, global_indicator, local_indicator, size_deviation, GlobalIndicator, LocalIndicator,
};
pub use reindex::{local_reindex, LocalReindexReport};

use crate::clustering::{balanced_kmeans, KMeansParams};
use crate::error::{Error, Result};
use crate::index::{IvfIndex, PartitionId, UpdateReport};
use crate::scalar::Scalar;
use crate::tracking::TemperatureParams;

/// Parameters shared by every policy; each reads the subset it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaIvfParams {
    pub alpha: f64,
    pub beta: f64,
    pub tau_f: f64,
    pub tau_s: usize,
    pub r_c: usize,
    pub iota: usize,
    pub gamma: f64,
    pub tau_g: f64,
    pub eta: f64,
    pub nu: f64,
    pub min_size: usize,
    pub max_size: usize,
}

impl Default for AdaIvfParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.5,
            tau_f: 0.5,
            tau_s: 1000,
            r_c: 25,
            iota: 5,
            gamma: 0.5,
            tau_g: 1.0,
            eta: 0.5,
            nu: 0.01,
            min_size: 500,
            max_size: 2000,
        }
    }
}

impl AdaIvfParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Spec(m.to_string()));
        if !(self.alpha > 0.0) {
            return bad("alpha must be > 0");
        }
        if !(0.0..=1.0).contains(&self.beta) || !(0.0..=1.0).contains(&self.gamma) {
            return bad("beta and gamma must lie in [0, 1]");
        }
        if !(self.tau_f >= 0.0) || !(self.tau_g >= 0.0) {
            return bad("thresholds must be >= 0");
        }
        if self.tau_s == 0 || self.r_c == 0 {
            return bad("tau_s and r_c must be >= 1");
        }
        if !(self.min_size <= self.tau_s && self.tau_s <= self.max_size) {
            return bad("size bounds must satisfy min_size <= tau_s <= max_size");
        }
        if !(self.eta > 0.0) || !(0.0..1.0).contains(&self.nu) {
            return bad("need eta > 0 and 0 <= nu < 1");
        }
        Ok(())
    }

    pub fn temperature(&self) -> TemperatureParams {
        TemperatureParams {
            eta: self.eta,
            nu: self.nu,
        }
    }

    /// True when `size` lies outside `[min_size, max_size]`.
    pub fn violates_size_bounds(&self, size: usize) -> bool {
        size < self.min_size || size > self.max_size
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// Membership changes, centroids never move.
    Frozen,
    /// Centroids follow the running member mean; no reindexing.
    UpdateCentroids,
    /// Full rebuild once modified vectors reach `rebuild_fraction` of the live count.
    PeriodicRebuild {
        #[serde(default = "default_rebuild_fraction")]
        rebuild_fraction: f64,
    },
    /// Recluster the `k1` largest and `k1` smallest partitions every
    /// `epoch_batches` update batches.
    DeDrift {
        k1: usize,
        #[serde(default = "default_epoch")]
        epoch_batches: usize,
    },
    /// Size-bound triggering with assignment-only reclustering.
    Lire,
    AdaIvf,
}

fn default_rebuild_fraction() -> f64 {
    0.025
}

fn default_epoch() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaintenancePolicy {
    #[serde(flatten)]
    pub kind: PolicyKind,
    #[serde(default)]
    pub params: AdaIvfParams,
}

impl Default for MaintenancePolicy {
    fn default() -> Self {
        Self::new(PolicyKind::AdaIvf, AdaIvfParams::default())
    }
}

impl MaintenancePolicy {
    pub fn new(kind: PolicyKind, params: AdaIvfParams) -> Self {
        Self { kind, params }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            PolicyKind::Frozen => "frozen",
            PolicyKind::UpdateCentroids => "update_centroids",
            PolicyKind::PeriodicRebuild { .. } => "periodic_rebuild",
            PolicyKind::DeDrift { .. } => "dedrift",
            PolicyKind::Lire => "lire",
            PolicyKind::AdaIvf => "ada_ivf",
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        match self.kind {
            PolicyKind::PeriodicRebuild { rebuild_fraction } if !(rebuild_fraction > 0.0) => {
                Err(Error::Spec("rebuild_fraction must be > 0".into()))
            }
            PolicyKind::DeDrift { k1, epoch_batches } if k1 == 0 || epoch_batches == 0 => {
                Err(Error::Spec("dedrift needs k1 >= 1 and epoch_batches >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Whether searches should feed partition temperatures.
    pub fn uses_temperature(&self) -> bool {
        matches!(self.kind, PolicyKind::AdaIvf)
    }
}

/// How [`check_reindex`] selects violators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trigger {
    /// Local indicator above `tau_f`, followed by the global check.
    Indicator,
    /// Size outside `[min_size, max_size]`; local reclustering is
    /// assignment-only and there is no global check.
    SizeBounds,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaintenanceReport {
    pub violators: Vec<PartitionId>,
    pub splits: usize,
    pub merges: usize,
    /// Partitions removed by local reclustering.
    pub removals: usize,
    /// Partitions created by local reclustering.
    pub created: usize,
    pub rebuild_triggered: bool,
    /// Global indicator after local reindexing, when it was evaluated.
    pub global_indicator: Option<f64>,
    pub wall_time: Duration,
    pub distance_evals: u64,
}

impl MaintenanceReport {
    pub fn is_noop(&self) -> bool {
        self.violators.is_empty() && self.removals == 0 && !self.rebuild_triggered
    }
}

/// Partition count a global rebuild targets: `round(live / tau_s)`, at least 1.
pub fn rebuild_partition_count(live: usize, tau_s: usize) -> usize {
    ((live as f64 / tau_s.max(1) as f64).round() as usize).clamp(1, live.max(1))
}

/// Partitions selected by `trigger`, recording each local score.
pub fn find_violators<T: Scalar>(
    index: &mut IvfIndex<T>,
    params: &AdaIvfParams,
    trigger: Trigger,
) -> Vec<PartitionId> {
    let mut out = Vec::new();
    for part in index.partitions_mut() {
        let f = local_indicator(&part.meta, params).value;
        part.meta.score = f;
        let violates = match trigger {
            Trigger::Indicator => f > params.tau_f,
            Trigger::SizeBounds => params.violates_size_bounds(part.meta.size),
        };
        if violates {
            out.push(part.id);
        }
    }
    out
}

/// One pass of the reindexing manager.
pub fn check_reindex<T: Scalar>(
    index: &mut IvfIndex<T>,
    params: &AdaIvfParams,
    trigger: Trigger,
) -> Result<MaintenanceReport> {
    let start = Instant::now();
    let mut report = MaintenanceReport::default();
    if index.partition_count() == 0 {
        return Ok(report);
    }
    report.violators = find_violators(index, params, trigger);
    if !report.violators.is_empty() {
        let iota = match trigger {
            Trigger::Indicator => params.iota,
            Trigger::SizeBounds => 0,
        };
        let local = local_reindex(index, &report.violators, params.tau_s, params.r_c, iota)?;
        report.splits = local.splits;
        report.merges = local.merges;
        report.removals = local.removed.len();
        report.created = local.created.len();
        report.distance_evals += local.distance_evals;
    }
    if trigger == Trigger::Indicator {
        let mut g = global_indicator(&index.stats(), params).value;
        if g > params.tau_g {
            // The tracked error is approximate; confirm before rebuilding.
            index.refresh_reconstruction_error();
            report.distance_evals += index.partitioned_len() as u64;
            g = global_indicator(&index.stats(), params).value;
        }
        report.global_indicator = Some(g);
        if g > params.tau_g {
            let n_c = rebuild_partition_count(index.len(), params.tau_s);
            report.distance_evals += index.rebuild(n_c)?;
            report.rebuild_triggered = true;
        }
    }
    report.wall_time = start.elapsed();
    Ok(report)
}

/// Stateful policy runner. Call [`Maintainer::attach`] once on the index
/// and [`Maintainer::on_update`] after every update batch.
#[derive(Debug, Clone)]
pub struct Maintainer {
    policy: MaintenancePolicy,
    modified_since_build: usize,
    batches_since_epoch: usize,
    epochs: u64,
}

impl Maintainer {
    pub fn new(policy: MaintenancePolicy) -> Result<Self> {
        policy.validate()?;
        Ok(Self {
            policy,
            modified_since_build: 0,
            batches_since_epoch: 0,
            epochs: 0,
        })
    }

    pub fn policy(&self) -> &MaintenancePolicy {
        &self.policy
    }

    /// Configure centroid tracking for the policy.
    pub fn attach<T: Scalar>(&self, index: &mut IvfIndex<T>) {
        index.set_centroid_tracking(!matches!(self.policy.kind, PolicyKind::Frozen));
    }

    /// Vectors modified since the last full rebuild (periodic rebuild only).
    pub fn modified_since_build(&self) -> usize {
        self.modified_since_build
    }

    /// Apply the policy after one update batch described by `update`.
    /// Batches that only touched the delta store trigger nothing.
    pub fn on_update<T: Scalar>(
        &mut self,
        index: &mut IvfIndex<T>,
        update: &UpdateReport,
    ) -> Result<MaintenanceReport> {
        let start = Instant::now();
        let params = &self.policy.params;
        let touched = update.touched_partitions();
        let mut report = match self.policy.kind {
            PolicyKind::Frozen | PolicyKind::UpdateCentroids => MaintenanceReport::default(),
            PolicyKind::PeriodicRebuild { rebuild_fraction } => {
                self.modified_since_build += update.inserted + update.deleted;
                let mut r = MaintenanceReport::default();
                let live = index.len();
                if live > 0 && self.modified_since_build as f64 >= rebuild_fraction * live as f64 {
                    let n_c = rebuild_partition_count(live, params.tau_s);
                    r.distance_evals = index.rebuild(n_c)?;
                    r.rebuild_triggered = true;
                    self.modified_since_build = 0;
                }
                r
            }
            PolicyKind::DeDrift { k1, epoch_batches } => {
                self.batches_since_epoch += 1;
                if self.batches_since_epoch >= epoch_batches && touched {
                    self.batches_since_epoch = 0;
                    self.epochs += 1;
                    dedrift(index, k1, params.iota, self.epochs)?
                } else {
                    MaintenanceReport::default()
                }
            }
            PolicyKind::Lire if touched => check_reindex(index, params, Trigger::SizeBounds)?,
            PolicyKind::AdaIvf if touched => check_reindex(index, params, Trigger::Indicator)?,
            PolicyKind::Lire | PolicyKind::AdaIvf => MaintenanceReport::default(),
        };
        report.wall_time = start.elapsed();
        Ok(report)
    }
}

/// Recluster the `k1` largest and `k1` smallest partitions into the same
/// number of partitions, seeded with their current centroids.
pub fn dedrift<T: Scalar>(
    index: &mut IvfIndex<T>,
    k1: usize,
    iota: usize,
    epoch: u64,
) -> Result<MaintenanceReport> {
    let mut report = MaintenanceReport::default();
    let mut by_size: Vec<(usize, PartitionId)> =
        index.partitions().map(|p| (p.len(), p.id())).collect();
    if by_size.len() < 2 {
        return Ok(report);
    }
    by_size.sort();
    let mut chosen = BTreeSet::new();
    for &(_, pid) in by_size.iter().take(k1) {
        chosen.insert(pid);
    }
    for &(_, pid) in by_size.iter().rev().take(k1) {
        chosen.insert(pid);
    }
    let dim = index.dim();
    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut seeds = Vec::new();
    let mut heat = 0.0;
    for pid in &chosen {
        let part = index.take_partition(*pid).expect("listed partition is live");
        ids.extend_from_slice(part.ids());
        data.extend_from_slice(part.vectors());
        seeds.extend_from_slice(part.centroid());
        heat += part.meta().temperature * part.len() as f64;
    }
    let params = KMeansParams::new(chosen.len(), iota)
        .with_seed(index.config().seed ^ epoch)
        .with_slack(index.config().balance_slack)
        .with_initial_centroids(seeds);
    let result = balanced_kmeans(&data, dim, &params)?;
    report.distance_evals = result.distance_evals;
    let created = index.install_clusters(&ids, &data, &result, heat / ids.len() as f64);
    index.after_mutation();
    report.removals = chosen.len();
    report.created = created.len();
    report.violators = chosen.into_iter().collect();
    Ok(report)
}
