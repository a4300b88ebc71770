use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Initial set size: an absolute count or a fraction of the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSize {
    Count(usize),
    Fraction(f64),
}

impl InitialSize {
    pub fn resolve(self, dataset_len: usize) -> usize {
        match self {
            InitialSize::Count(n) => n,
            InitialSize::Fraction(f) => (f * dataset_len as f64).round() as usize,
        }
    }
}

/// What the read/write ratio counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RwBasis {
    /// Search batches per update batch.
    #[default]
    Operations,
    /// Query vectors per updated vector.
    Vectors,
}

/// Insert/delete ratio that may be infinite; written as a number or `"inf"`.
mod ratio {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if matches!(t.to_ascii_lowercase().as_str(), "inf" | "infinity") => {
                Ok(f64::INFINITY)
            }
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad ratio {t:?}"))),
        }
    }
}

/// Streaming workload parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadSpec {
    /// Initial set size.
    pub s0: InitialSize,
    /// Vectors per update batch.
    pub su: usize,
    /// Insert batches per delete batch; infinite for insert-only.
    #[serde(with = "ratio")]
    pub r_id: f64,
    /// Fraction of a generator cluster taken per pick for updates, in (0, 1].
    pub csf_u: f64,
    /// Read/write ratio.
    pub r_rw: f64,
    pub rw_basis: RwBasis,
    /// Fraction of a cluster's query pool taken per pick; uniform when absent.
    pub csf_q: Option<f64>,
    /// Restrict queries to this fraction of generator clusters.
    pub query_clusters: Option<f64>,
    /// Query vectors per search batch.
    pub query_batch_size: usize,
    /// Dataset vectors reserved as the query pool when no query file is given.
    pub holdout: usize,
    /// Generator clustering granularity; `max(10, |X| / 10000)` when absent.
    pub n_gen_clusters: Option<usize>,
    pub gen_iterations: usize,
    /// Number of update batches.
    pub total_ops: usize,
    /// Neighbours per query.
    pub k: usize,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            s0: InitialSize::Fraction(0.1),
            su: 10_000,
            r_id: f64::INFINITY,
            csf_u: 1.0,
            r_rw: 0.1,
            rw_basis: RwBasis::Operations,
            csf_q: None,
            query_clusters: None,
            query_batch_size: 100,
            holdout: 1000,
            n_gen_clusters: None,
            gen_iterations: 10,
            total_ops: 100,
            k: 10,
            seed: 0,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Spec(m.to_string()));
        if self.su == 0 {
            return bad("su must be >= 1");
        }
        let frac = |f: f64| f > 0.0 && f <= 1.0;
        if !frac(self.csf_u) || !self.csf_q.is_none_or(frac) || !self.query_clusters.is_none_or(frac) {
            return bad("cluster sample fractions must lie in (0, 1]");
        }
        if !(self.r_id >= 0.0) || !(self.r_rw >= 0.0) {
            return bad("ratios must be >= 0");
        }
        if let InitialSize::Fraction(f) = self.s0 {
            if !(0.0..=1.0).contains(&f) {
                return bad("s0 fraction must lie in [0, 1]");
            }
        }
        if self.k == 0 || self.query_batch_size == 0 {
            return bad("k and query_batch_size must be >= 1");
        }
        if self.n_gen_clusters == Some(0) {
            return bad("n_gen_clusters must be >= 1");
        }
        Ok(())
    }

    /// Share of update batches that insert.
    pub fn insert_share(&self) -> f64 {
        if self.r_id.is_infinite() {
            1.0
        } else {
            self.r_id / (1.0 + self.r_id)
        }
    }

    pub fn gen_clusters(&self, dataset_len: usize) -> usize {
        self.n_gen_clusters.unwrap_or((dataset_len / 10_000).max(10))
    }
}
