use std::collections::HashMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clustering::{balanced_kmeans, nearest_centroid, KMeansParams};
use crate::error::{Error, Result};
use crate::vector::{VectorDataset, VectorId};

use super::trace::{Operation, Trace, TraceHeader, TRACE_FORMAT, TRACE_VERSION};
use super::{RwBasis, WorkloadSpec};

/// A generated trace plus the generator-cluster label of every vector id it
/// mentions (initial set, inserts and reinserts).
#[derive(Debug, Clone)]
pub struct GeneratedWorkload {
    pub trace: Trace,
    pub labels: HashMap<VectorId, usize>,
    /// Generator cluster of each query batch vector, in trace order.
    pub query_labels: Vec<Vec<usize>>,
}

/// Deterministic schedule: event `j` (1-based) fires when
/// `ceil(j * share)` increases.
fn fires(j: usize, share: f64) -> bool {
    let a = (j as f64 * share - 1e-9).ceil();
    let b = ((j - 1) as f64 * share - 1e-9).ceil();
    a > b
}

struct State<'a> {
    data: &'a VectorDataset<f32>,
    spec: &'a WorkloadSpec,
    rng: ChaCha8Rng,
    cluster_size: Vec<usize>,
    /// Unused rows per cluster, already shuffled.
    fresh: Vec<Vec<usize>>,
    /// Deleted rows per cluster, candidates for reinsertion.
    deleted: Vec<Vec<usize>>,
    /// Live `(id, row)` per cluster.
    live: Vec<Vec<(VectorId, usize)>>,
    live_total: usize,
    next_id: u64,
    reinserted: bool,
    labels: HashMap<VectorId, usize>,
}

impl State<'_> {
    /// Pick a cluster: among those holding at least `want` candidates when
    /// any do, otherwise among those holding any.
    fn pick(&mut self, counts: &[usize], csf: f64, need: usize) -> Option<usize> {
        let full: Vec<usize> = (0..counts.len())
            .filter(|&c| counts[c] > 0 && counts[c] >= self.take_size(c, csf, need))
            .collect();
        let any: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] > 0).collect();
        let pool = if full.is_empty() { any } else { full };
        if pool.is_empty() {
            None
        } else {
            Some(pool[self.rng.random_range(0..pool.len())])
        }
    }

    fn take_size(&self, c: usize, csf: f64, need: usize) -> usize {
        let t = ((csf * self.cluster_size[c] as f64).round() as usize).max(1);
        t.min(need)
    }

    fn insert_batch(&mut self) -> Result<Operation> {
        let dim = self.data.dim();
        let mut need = self.spec.su;
        let mut ids = Vec::with_capacity(need);
        let mut vectors = Vec::with_capacity(need * dim);
        while need > 0 {
            let counts: Vec<usize> = self.fresh.iter().map(Vec::len).collect();
            let recycle = counts.iter().all(|&n| n == 0);
            if recycle && self.spec.r_id.is_infinite() {
                return Err(Error::Spec("dataset exhausted by insert-only workload".into()));
            }
            let counts = if recycle {
                self.deleted.iter().map(Vec::len).collect()
            } else {
                counts
            };
            let csf = self.spec.csf_u;
            let c = self
                .pick(&counts, csf, need)
                .ok_or_else(|| Error::Spec("no vectors left to insert".into()))?;
            let take = self.take_size(c, csf, need).min(counts[c]);
            for _ in 0..take {
                let (id, row) = if recycle {
                    self.reinserted = true;
                    let row = self.deleted[c].pop().expect("counted");
                    let id = VectorId(self.next_id);
                    self.next_id += 1;
                    (id, row)
                } else {
                    let row = self.fresh[c].pop().expect("counted");
                    (self.data.ids()[row], row)
                };
                ids.push(id);
                vectors.extend_from_slice(self.data.row(row));
                self.live[c].push((id, row));
                self.labels.insert(id, c);
            }
            self.live_total += take;
            need -= take;
        }
        Ok(Operation::Insert { ids, vectors })
    }

    fn delete_batch(&mut self, size: usize) -> Operation {
        let mut need = size;
        let mut ids = Vec::with_capacity(need);
        while need > 0 {
            let counts: Vec<usize> = self.live.iter().map(Vec::len).collect();
            let csf = self.spec.csf_u;
            let c = self
                .pick(&counts, csf, need)
                .expect("live set larger than delete size");
            let take = self.take_size(c, csf, need).min(counts[c]);
            for _ in 0..take {
                let i = self.rng.random_range(0..self.live[c].len());
                let (id, row) = self.live[c].swap_remove(i);
                ids.push(id);
                self.deleted[c].push(row);
            }
            self.live_total -= take;
            need -= take;
        }
        Operation::Delete { ids }
    }
}

/// Query source: pool rows with their generator cluster.
struct QueryPool {
    vectors: Vec<f32>,
    by_cluster: Vec<Vec<usize>>,
    eligible: Vec<usize>,
}

impl QueryPool {
    fn batch(&self, spec: &WorkloadSpec, dim: usize, rng: &mut ChaCha8Rng) -> (Vec<f32>, Vec<usize>) {
        let n = spec.query_batch_size;
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        match spec.csf_q {
            Some(csf) => {
                while rows.len() < n {
                    let c = self.eligible[rng.random_range(0..self.eligible.len())];
                    let members = &self.by_cluster[c];
                    let t = ((csf * members.len() as f64).round() as usize)
                        .max(1)
                        .min(n - rows.len());
                    for &r in members.choose_multiple(rng, t) {
                        rows.push(r);
                        labels.push(c);
                    }
                }
            }
            None => {
                let all: Vec<(usize, usize)> = self
                    .eligible
                    .iter()
                    .flat_map(|&c| self.by_cluster[c].iter().map(move |&r| (r, c)))
                    .collect();
                for _ in 0..n {
                    let (r, c) = all[rng.random_range(0..all.len())];
                    rows.push(r);
                    labels.push(c);
                }
            }
        }
        let mut out = Vec::with_capacity(n * dim);
        for r in rows {
            out.extend_from_slice(&self.vectors[r * dim..(r + 1) * dim]);
        }
        (out, labels)
    }
}

/// Cluster `dataset`, draw the initial set, and emit update batches with
/// interleaved search batches as described by `spec`. Queries come from
/// `queries` when given, otherwise from `spec.holdout` reserved dataset rows.
pub fn generate(
    dataset: &VectorDataset<f32>,
    queries: Option<&VectorDataset<f32>>,
    spec: &WorkloadSpec,
) -> Result<GeneratedWorkload> {
    spec.validate()?;
    let n = dataset.len();
    let dim = dataset.dim();
    if n == 0 {
        return Err(Error::Spec("empty dataset".into()));
    }
    if let Some(q) = queries {
        if q.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: q.dim(),
            });
        }
    }
    let g = spec.gen_clusters(n).min(n);
    let params = KMeansParams::new(g, spec.gen_iterations)
        .with_seed(spec.seed)
        .with_slack(g as f64);
    let clustering = balanced_kmeans(dataset.as_flat(), dim, &params)?;
    let label = &clustering.assignments;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5E_ED0F_7ACE);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let holdout = if queries.is_some() { 0 } else { spec.holdout.min(n) };
    let s0 = spec.s0.resolve(n);
    if s0 == 0 {
        return Err(Error::Spec("initial set must be non-empty".into()));
    }
    if holdout + s0 > n {
        return Err(Error::Spec(format!(
            "initial set {s0} plus holdout {holdout} exceeds dataset size {n}"
        )));
    }

    let pool = match queries {
        Some(q) => {
            let mut by_cluster = vec![Vec::new(); g];
            for (i, v) in q.as_flat().chunks_exact(dim).enumerate() {
                by_cluster[nearest_centroid(v, &clustering.centroids, dim).0].push(i);
            }
            QueryPool {
                vectors: q.as_flat().to_vec(),
                by_cluster,
                eligible: Vec::new(),
            }
        }
        None => {
            let mut by_cluster = vec![Vec::new(); g];
            let mut vectors = Vec::with_capacity(holdout * dim);
            for (i, &row) in order[..holdout].iter().enumerate() {
                by_cluster[label[row]].push(i);
                vectors.extend_from_slice(dataset.row(row));
            }
            QueryPool {
                vectors,
                by_cluster,
                eligible: Vec::new(),
            }
        }
    };
    let mut pool = pool;
    let mut clusters: Vec<usize> = (0..g).collect();
    clusters.shuffle(&mut rng);
    let quota = spec
        .query_clusters
        .map(|f| ((f * g as f64).round() as usize).max(1))
        .unwrap_or(g);
    let with_queries: Vec<usize> = clusters
        .iter()
        .copied()
        .filter(|&c| !pool.by_cluster[c].is_empty())
        .collect();
    pool.eligible = with_queries.into_iter().take(quota).collect();
    pool.eligible.sort_unstable();
    if spec.r_rw > 0.0 && pool.eligible.is_empty() {
        return Err(Error::Spec("no query vectors available".into()));
    }

    let mut initial: Vec<usize> = order[holdout..holdout + s0].to_vec();
    initial.sort_unstable();
    let mut fresh = vec![Vec::new(); g];
    for &row in &order[holdout + s0..] {
        fresh[label[row]].push(row);
    }
    let mut cluster_size = vec![0usize; g];
    for &l in label {
        cluster_size[l] += 1;
    }

    let share = spec.insert_share();
    let planned_inserts = (1..=spec.total_ops).filter(|&j| fires(j, share)).count();
    let fresh_total = n - holdout - s0;
    if spec.r_id.is_infinite() && planned_inserts * spec.su > fresh_total {
        return Err(Error::Spec(format!(
            "{planned_inserts} insert batches of {} need more than the {fresh_total} unused vectors",
            spec.su
        )));
    }

    let max_id = dataset.ids().iter().map(|i| i.0).max().unwrap_or(0);
    let mut state = State {
        data: dataset,
        spec,
        rng,
        cluster_size,
        fresh,
        deleted: vec![Vec::new(); g],
        live: vec![Vec::new(); g],
        live_total: s0,
        next_id: max_id + 1,
        reinserted: false,
        labels: HashMap::new(),
    };
    let mut initial_ids = Vec::with_capacity(s0);
    let mut initial_vectors = Vec::with_capacity(s0 * dim);
    for &row in &initial {
        let id = dataset.ids()[row];
        initial_ids.push(id);
        initial_vectors.extend_from_slice(dataset.row(row));
        state.live[label[row]].push((id, row));
        state.labels.insert(id, label[row]);
    }

    let mut ops = Vec::new();
    let mut query_labels = Vec::new();
    let mut searches = 0usize;
    let mut updated_vectors = 0usize;
    for j in 1..=spec.total_ops {
        let delete_size = spec.su.min(state.live_total.saturating_sub(1));
        let op = if fires(j, share) || delete_size == 0 {
            state.insert_batch()?
        } else {
            state.delete_batch(delete_size)
        };
        updated_vectors += match &op {
            Operation::Insert { ids, .. } | Operation::Delete { ids } => ids.len(),
            Operation::Search { .. } => 0,
        };
        ops.push(op);
        let due = match spec.rw_basis {
            RwBasis::Operations => (j as f64 * spec.r_rw + 1e-9).floor() as usize,
            RwBasis::Vectors => {
                (updated_vectors as f64 * spec.r_rw / spec.query_batch_size as f64 + 1e-9).floor()
                    as usize
            }
        };
        while searches < due {
            let (queries, labels) = pool.batch(spec, dim, &mut state.rng);
            ops.push(Operation::Search {
                queries,
                k: spec.k,
            });
            query_labels.push(labels);
            searches += 1;
        }
    }

    let header = TraceHeader {
        format: TRACE_FORMAT.to_string(),
        version: TRACE_VERSION,
        dim,
        seed: spec.seed,
        dataset: None,
        n_gen_clusters: g,
        reinserted: state.reinserted,
        spec: spec.clone(),
    };
    Ok(GeneratedWorkload {
        trace: Trace {
            header,
            initial_ids,
            initial_vectors,
            ops,
        },
        labels: state.labels,
        query_labels,
    })
}
