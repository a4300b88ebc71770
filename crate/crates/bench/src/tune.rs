//! Smallest probe count reaching a recall target, and QPS at that count.

use std::collections::BTreeMap;
use std::time::Instant;

use adaivf::{IvfIndex, PartitionId, Scalar};
use rayon::prelude::*;

use crate::clock::ClockMode;
use crate::truth::{query_recall, GroundTruth};

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOptions {
    pub recall_target: f64,
    pub k: usize,
    pub clock: ClockMode,
    /// Timed passes over the query batch; the fastest one counts.
    pub repeats: usize,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            recall_target: 0.9,
            k: 10,
            clock: ClockMode::Wall,
            repeats: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TuneOutcome<T> {
    pub n_p: usize,
    pub mean_recall: f64,
    pub qps: f64,
    /// False when even a full scan of every partition misses the target.
    pub reached: bool,
    /// Seconds of the counted pass.
    pub search_seconds: f64,
    pub distance_evals: u64,
    /// Probe list of every query at `n_p`, in query order.
    pub probes: Vec<Vec<(PartitionId, T)>>,
}

/// Mean recall over the query batch when probing `n_p` partitions.
pub fn mean_recall_at<T: Scalar>(
    index: &IvfIndex<T>,
    queries: &[T],
    truth: &GroundTruth<T>,
    k: usize,
    n_p: usize,
) -> adaivf::Result<f64> {
    let dim = index.dim();
    let per_query: Vec<f64> = queries
        .par_chunks_exact(dim)
        .enumerate()
        .map(|(i, q)| {
            let hits = index.search(q, k, n_p)?.hits;
            let ids: Vec<_> = hits.iter().map(|h| h.0).collect();
            Ok(query_recall(&ids, truth, i))
        })
        .collect::<adaivf::Result<_>>()?;
    Ok(per_query.iter().sum::<f64>() / per_query.len().max(1) as f64)
}

/// Doubling from 1 until the target is met, then binary search between the
/// last miss and the first hit. Recall is monotone in `n_p` because probe sets
/// are nested.
pub fn tune_nprobe<T: Scalar>(
    index: &IvfIndex<T>,
    queries: &[T],
    truth: &GroundTruth<T>,
    opts: &TuneOptions,
) -> adaivf::Result<TuneOutcome<T>> {
    let max = index.partition_count().max(1);
    let mut cache: BTreeMap<usize, f64> = BTreeMap::new();
    let mut at = |n_p: usize| -> adaivf::Result<f64> {
        if let Some(r) = cache.get(&n_p) {
            return Ok(*r);
        }
        let r = mean_recall_at(index, queries, truth, opts.k, n_p)?;
        cache.insert(n_p, r);
        Ok(r)
    };
    let target = opts.recall_target;
    let mut miss = 0;
    let mut hit = 1;
    while at(hit)? < target && hit < max {
        miss = hit;
        hit = (hit * 2).min(max);
    }
    let reached = at(hit)? >= target;
    if reached {
        while hit - miss > 1 {
            let mid = miss + (hit - miss) / 2;
            if at(mid)? >= target {
                hit = mid;
            } else {
                miss = mid;
            }
        }
    }
    let mean_recall = at(hit)?;
    let (search_seconds, distance_evals, probes) = time_searches(index, queries, opts, hit)?;
    let count = queries.len() / index.dim();
    Ok(TuneOutcome {
        n_p: hit,
        mean_recall,
        qps: if search_seconds > 0.0 { count as f64 / search_seconds } else { f64::INFINITY },
        reached,
        search_seconds,
        distance_evals,
        probes,
    })
}

/// Shortest wall-clock pass worth timing; faster batches are repeated
/// within a pass and the per-batch time is the pass time divided by the
/// repetitions.
pub const MIN_TIMED_PASS_SECONDS: f64 = 0.005;

/// Seconds per batch, distance evaluations, and per-query probe lists.
pub type TimedPass<T> = (f64, u64, Vec<Vec<(PartitionId, T)>>);

/// Serial passes over the batch at `n_p`; only the search calls are timed
/// and the fastest pass counts.
pub fn time_searches<T: Scalar>(
    index: &IvfIndex<T>,
    queries: &[T],
    opts: &TuneOptions,
    n_p: usize,
) -> adaivf::Result<TimedPass<T>> {
    let dim = index.dim();
    let mut probes = Vec::with_capacity(queries.len() / dim);
    let mut evals = 0u64;
    let start = Instant::now();
    for q in queries.chunks_exact(dim) {
        let r = index.search(q, opts.k, n_p)?;
        evals += r.distance_evals;
        probes.push(r.probed);
    }
    let first = start.elapsed().as_secs_f64();
    if opts.clock == ClockMode::Work {
        return Ok((opts.clock.work_seconds(evals, dim), evals, probes));
    }
    let inner = ((MIN_TIMED_PASS_SECONDS / first.max(1e-9)).ceil() as usize).clamp(1, 1000);
    let mut best = first;
    for _ in 0..opts.repeats.max(1) {
        let start = Instant::now();
        for _ in 0..inner {
            for q in queries.chunks_exact(dim) {
                std::hint::black_box(index.search(q, opts.k, n_p)?);
            }
        }
        best = best.min(start.elapsed().as_secs_f64() / inner as f64);
    }
    Ok((best, evals, probes))
}
