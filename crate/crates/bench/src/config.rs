use std::path::{Path, PathBuf};

use adaivf::maintenance::MaintenancePolicy;
use adaivf::workload::{GaussianMixture, WorkloadSpec};
use adaivf::IndexConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::clock::ClockMode;
use crate::error::{BenchError, Result};

/// One benchmark run. Vectors come from a saved trace, or from a workload
/// spec applied to a dataset file or a synthetic mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Base vectors (fvecs or bvecs) for inline generation.
    pub dataset: Option<PathBuf>,
    /// Optional query file for inline generation; otherwise a holdout is used.
    pub queries: Option<PathBuf>,
    /// Saved trace to replay.
    pub trace: Option<PathBuf>,
    /// Inline generator spec.
    pub workload: Option<WorkloadSpec>,
    /// Synthetic dataset used when no dataset file is given.
    pub synthetic: Option<GaussianMixture>,
    /// Where to save an inline-generated trace.
    pub save_trace: Option<PathBuf>,
    pub index: IndexConfig,
    /// Initial partition count; `round(initial / tau_s)` when absent.
    pub initial_partitions: Option<usize>,
    pub policy: MaintenancePolicy,
    pub recall_target: f64,
    /// Overrides the `k` recorded in search operations.
    pub k: Option<usize>,
    /// Measure at every n-th search batch.
    pub measure_every: usize,
    /// Output directory for `metrics.csv` and `summary.json`.
    pub output: Option<PathBuf>,
    /// Overrides the index seed and the inline workload seed.
    pub seed: Option<u64>,
    pub clock: ClockMode,
    /// Cool unprobed partitions after every query rather than once per batch.
    pub cool_per_query: bool,
    /// Check index invariants after every operation.
    pub audit: bool,
    pub timing_repeats: usize,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            queries: None,
            trace: None,
            workload: None,
            synthetic: None,
            save_trace: None,
            index: IndexConfig::default(),
            initial_partitions: None,
            policy: MaintenancePolicy::default(),
            recall_target: 0.9,
            k: None,
            measure_every: 1,
            output: None,
            seed: None,
            clock: ClockMode::Wall,
            cool_per_query: true,
            audit: false,
            timing_repeats: 10,
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if !(self.recall_target > 0.0 && self.recall_target <= 1.0) {
            return bad(format!("recall_target {} outside (0, 1]", self.recall_target));
        }
        if self.measure_every == 0 {
            return bad("measure_every must be >= 1".into());
        }
        if self.k == Some(0) {
            return bad("k must be >= 1".into());
        }
        if self.initial_partitions == Some(0) {
            return bad("initial_partitions must be >= 1".into());
        }
        if self.trace.is_none() && self.workload.is_none() {
            return bad("need a trace or an inline workload".into());
        }
        if self.trace.is_some() && self.workload.is_some() {
            return bad("trace and inline workload are mutually exclusive".into());
        }
        if self.workload.is_some() && self.dataset.is_some() && self.synthetic.is_some() {
            return bad("dataset and synthetic are mutually exclusive".into());
        }
        self.index.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        self.policy.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        if let Some(w) = &self.workload {
            w.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Effective config after applying the `seed` override.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if let Some(seed) = self.seed {
            c.index.seed = seed;
            if let Some(w) = c.workload.as_mut() {
                w.seed = seed;
            }
        }
        c
    }
}

/// Recursively overlay `top` onto `base`: objects merge key by key, any
/// other value in `top` replaces the one in `base`.
pub fn merge_json(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use adaivf::maintenance::PolicyKind;

    #[test]
    fn defaults_and_partial_documents() {
        let c = RunConfig::from_json(
            r#"{"trace":"t.jsonl","policy":{"kind":"lire","params":{"r_c":5}},"index":{"delta_capacity":10}}"#,
        )
        .unwrap();
        assert_eq!(c.recall_target, 0.9);
        assert_eq!(c.policy.kind, PolicyKind::Lire);
        assert_eq!(c.policy.params.r_c, 5);
        assert_eq!(c.policy.params.tau_s, 1000);
        assert_eq!(c.index.delta_capacity, 10);
        c.validate().unwrap();
    }

    #[test]
    fn bad_documents_are_config_errors() {
        assert!(matches!(RunConfig::from_json(r#"{"bogus":1}"#), Err(BenchError::Config(_))));
        let c = RunConfig::from_json(r#"{"trace":"t","recall_target":1.5}"#).unwrap();
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        let c = RunConfig::from_json(r#"{}"#).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn merge_overlays_nested_objects() {
        let mut base = serde_json::json!({"index": {"n_p": 4, "seed": 1}, "k": 5});
        merge_json(&mut base, serde_json::json!({"index": {"seed": 9}, "audit": true}));
        assert_eq!(base, serde_json::json!({"index": {"n_p": 4, "seed": 9}, "k": 5, "audit": true}));
    }
}
