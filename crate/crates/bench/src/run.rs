//! Trace replay under a maintenance policy.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use adaivf::io::read_vectors;
use adaivf::maintenance::{rebuild_partition_count, Maintainer};
use adaivf::tracking::estimate_ideal_error;
use adaivf::workload::{generate, load_trace, save_trace, GaussianMixture, Operation, Trace};
use adaivf::{IvfIndex, UpdateReport, VectorDataset};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{BenchError, Result};
use crate::truth::ground_truth;
use crate::tune::{time_searches, tune_nprobe, TuneOptions};

/// One measurement point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub op_index: usize,
    pub live_count: usize,
    pub partition_count: usize,
    pub sigma: f64,
    pub eps: f64,
    pub eps_prime: f64,
    pub qps_at_target: f64,
    pub mean_recall: f64,
    pub n_p_used: usize,
    pub cum_update_seconds: f64,
    pub cum_maintenance_seconds: f64,
    pub violators_this_step: usize,
}

/// Per-run maxima used to normalize columns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub qps_at_target: f64,
    pub cum_update_seconds: f64,
    pub cum_maintenance_seconds: f64,
    pub sigma: f64,
    pub eps: f64,
    pub partition_count: f64,
}

/// Columns divided by their own maximum over the run (all zero when the
/// maximum is zero).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizedColumns {
    pub op_index: Vec<usize>,
    pub qps_at_target: Vec<f64>,
    pub cum_update_seconds: Vec<f64>,
    pub cum_maintenance_seconds: Vec<f64>,
    pub sigma: Vec<f64>,
    pub eps: Vec<f64>,
    pub partition_count: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub policy: String,
    pub clock: crate::clock::ClockMode,
    pub total_update_seconds: f64,
    pub total_maintenance_seconds: f64,
    pub updated_vectors: usize,
    /// Updated vectors per second of update plus maintenance time.
    pub update_throughput: f64,
    pub mean_qps_at_target: f64,
    pub mean_recall: f64,
    pub final_partition_count: usize,
    pub final_live_count: usize,
    pub full_builds: u64,
    pub total_violators: usize,
    /// Measurements where the recall target was missed at a full scan.
    pub unreached_targets: usize,
    pub normalization: Normalization,
    pub normalized: NormalizedColumns,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<MetricsRow>,
    pub summary: Summary,
}

/// Load the configured trace or generate one inline (saving it when asked).
pub fn prepare_trace(cfg: &RunConfig) -> Result<Trace> {
    let cfg = cfg.resolved();
    if let Some(path) = &cfg.trace {
        let trace = load_trace(path)?;
        if let Some(ds) = &cfg.dataset {
            let data = read_vectors::<f32>(ds)?;
            if data.dim() != trace.dim() {
                return Err(BenchError::Config(format!(
                    "trace dim {} does not match dataset dim {}",
                    trace.dim(),
                    data.dim()
                )));
            }
        }
        return Ok(trace);
    }
    let spec = cfg
        .workload
        .as_ref()
        .ok_or_else(|| BenchError::Config("need a trace or an inline workload".into()))?;
    let data = match (&cfg.dataset, &cfg.synthetic) {
        (Some(path), _) => read_vectors::<f32>(path)?,
        (None, Some(g)) => g.generate()?.0,
        (None, None) => GaussianMixture::default().generate()?.0,
    };
    let queries = cfg.queries.as_ref().map(read_vectors::<f32>).transpose()?;
    if let Some(q) = &queries {
        if q.dim() != data.dim() {
            return Err(BenchError::Config(format!(
                "query dim {} does not match dataset dim {}",
                q.dim(),
                data.dim()
            )));
        }
    }
    let trace = generate(&data, queries.as_ref(), spec)?.trace;
    if let Some(path) = &cfg.save_trace {
        save_trace(&trace, path)?;
    }
    Ok(trace)
}

/// Prepare the trace, replay it and write outputs when an output directory
/// is configured.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let trace = prepare_trace(cfg)?;
    let out = run_trace(cfg, &trace)?;
    if let Some(dir) = &cfg.output {
        write_outputs(&out, dir)?;
    }
    Ok(out)
}

fn audit_dump(cfg: &RunConfig, op_index: usize, detail: &str, index: &IvfIndex<f32>, expected: usize) -> Option<std::path::PathBuf> {
    let dir = cfg.output.as_ref()?;
    std::fs::create_dir_all(dir).ok()?;
    let path = dir.join("audit_dump.json");
    let dump = serde_json::json!({
        "op_index": op_index,
        "detail": detail,
        "expected_live": expected,
        "index_live": index.len(),
        "delta_len": index.delta().len(),
        "partitions": index
            .partitions()
            .map(|p| serde_json::json!({"id": p.id().0, "size": p.len(), "temperature": p.meta().temperature}))
            .collect::<Vec<_>>(),
    });
    std::fs::write(&path, serde_json::to_vec_pretty(&dump).ok()?).ok()?;
    Some(path)
}

/// Replay `trace` under the configured index and policy.
pub fn run_trace(cfg: &RunConfig, trace: &Trace) -> Result<RunOutput> {
    cfg.validate()?;
    let cfg = cfg.resolved();
    let dim = trace.dim();
    let clock = cfg.clock;
    let params = cfg.policy.params.clone();

    let mut initial = VectorDataset::new(dim);
    for (id, v) in trace.initial_ids.iter().zip(trace.initial_vectors.chunks_exact(dim)) {
        initial.push(*id, v)?;
    }
    if initial.is_empty() {
        return Err(BenchError::Config("trace has an empty initial set".into()));
    }
    let n_c = cfg
        .initial_partitions
        .unwrap_or_else(|| rebuild_partition_count(initial.len(), params.tau_s))
        .min(initial.len());
    let mut index = IvfIndex::build(&initial, adaivf::IndexConfig { n_c, ..cfg.index.clone() })?;
    let mut maintainer = Maintainer::new(cfg.policy.clone()).map_err(|e| BenchError::Config(e.to_string()))?;
    maintainer.attach(&mut index);

    let tune = TuneOptions {
        recall_target: cfg.recall_target,
        k: 0,
        clock,
        repeats: cfg.timing_repeats,
    };
    let mut n_p = cfg.index.n_p;
    let mut live = initial.len();
    let mut rows = Vec::new();
    let mut cum_update = 0.0;
    let mut cum_maint = 0.0;
    let mut updated_vectors = 0usize;
    let mut violators_step = 0usize;
    let mut total_violators = 0usize;
    let mut unreached = 0usize;
    let mut searches = 0usize;

    for (op_index, op) in trace.ops.iter().enumerate() {
        let mut apply = |index: &mut IvfIndex<f32>, f: &dyn Fn(&mut IvfIndex<f32>) -> adaivf::Result<UpdateReport>, moved: usize| -> Result<()> {
            let (rep, secs) = clock.measure(dim, || f(index), |r| {
                r.as_ref().map(|r| r.distance_evals + moved as u64).unwrap_or(0)
            });
            let rep = rep?;
            cum_update += secs;
            let (m, secs) = clock.measure(dim, || maintainer.on_update(index, &rep), |r| {
                r.as_ref().map(|r| r.distance_evals).unwrap_or(0)
            });
            let m = m?;
            cum_maint += secs;
            violators_step += m.violators.len();
            total_violators += m.violators.len();
            Ok(())
        };
        match op {
            Operation::Insert { ids, vectors } => {
                apply(&mut index, &|ix| ix.insert(ids, vectors), ids.len())?;
                live += ids.len();
                updated_vectors += ids.len();
            }
            Operation::Delete { ids } => {
                apply(&mut index, &|ix| ix.delete(ids), ids.len())?;
                live -= ids.len().min(live);
                updated_vectors += ids.len();
            }
            Operation::Search { queries, k } => {
                searches += 1;
                let k = cfg.k.unwrap_or(*k);
                let probes = if searches.is_multiple_of(cfg.measure_every) {
                    let gt = ground_truth(&index.live_vectors(), queries, dim, k, index.config().metric)?;
                    let outcome = tune_nprobe(&index, queries, &gt, &TuneOptions { k, ..tune.clone() })?;
                    if !outcome.reached {
                        unreached += 1;
                    }
                    n_p = outcome.n_p;
                    let stats = index.stats();
                    rows.push(MetricsRow {
                        op_index,
                        live_count: index.len(),
                        partition_count: index.partition_count(),
                        sigma: stats.sigma,
                        eps: index.compute_reconstruction_error().unwrap_or(0.0),
                        eps_prime: estimate_ideal_error(&stats),
                        qps_at_target: outcome.qps,
                        mean_recall: outcome.mean_recall,
                        n_p_used: outcome.n_p,
                        cum_update_seconds: cum_update,
                        cum_maintenance_seconds: cum_maint,
                        violators_this_step: violators_step,
                    });
                    violators_step = 0;
                    outcome.probes
                } else if cfg.policy.uses_temperature() {
                    // Probe lists only; nothing is timed.
                    let probe_only = TuneOptions { k, clock: crate::clock::ClockMode::Work, ..tune.clone() };
                    time_searches(&index, queries, &probe_only, n_p)?.2
                } else {
                    Vec::new()
                };
                if cfg.policy.uses_temperature() {
                    index.update_temperatures_batch(&probes, params.temperature(), cfg.cool_per_query)?;
                }
            }
        }
        if cfg.audit {
            let check = index.audit().and_then(|_| {
                if index.len() == live {
                    Ok(())
                } else {
                    Err(format!("index holds {} vectors, trace implies {live}", index.len()))
                }
            });
            if let Err(detail) = check {
                let dump = audit_dump(&cfg, op_index, &detail, &index, live);
                return Err(BenchError::Invariant { op_index, detail, dump });
            }
        }
    }

    let summary = summarize(&cfg, &rows, &index, cum_update, cum_maint, updated_vectors, total_violators, unreached);
    Ok(RunOutput { rows, summary })
}

fn normalize(values: &[f64]) -> (f64, Vec<f64>) {
    let max = values.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let scaled = values
        .iter()
        .map(|v| if max > 0.0 { (v / max).min(1.0) } else { 0.0 })
        .collect();
    (max, scaled)
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    cfg: &RunConfig,
    rows: &[MetricsRow],
    index: &IvfIndex<f32>,
    cum_update: f64,
    cum_maint: f64,
    updated_vectors: usize,
    total_violators: usize,
    unreached: usize,
) -> Summary {
    let col = |f: fn(&MetricsRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let (qps_max, qps) = normalize(&col(|r| r.qps_at_target));
    let (upd_max, upd) = normalize(&col(|r| r.cum_update_seconds));
    let (maint_max, maint) = normalize(&col(|r| r.cum_maintenance_seconds));
    let (sigma_max, sigma) = normalize(&col(|r| r.sigma));
    let (eps_max, eps) = normalize(&col(|r| r.eps));
    let (pc_max, pc) = normalize(&col(|r| r.partition_count as f64));
    let mean = |v: Vec<f64>| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let busy = cum_update + cum_maint;
    Summary {
        policy: cfg.policy.name().to_string(),
        clock: cfg.clock,
        total_update_seconds: cum_update,
        total_maintenance_seconds: cum_maint,
        updated_vectors,
        update_throughput: if busy > 0.0 { updated_vectors as f64 / busy } else { 0.0 },
        mean_qps_at_target: mean(col(|r| r.qps_at_target)),
        mean_recall: mean(col(|r| r.mean_recall)),
        final_partition_count: index.partition_count(),
        final_live_count: index.len(),
        full_builds: index.build_count(),
        total_violators,
        unreached_targets: unreached,
        normalization: Normalization {
            qps_at_target: qps_max,
            cum_update_seconds: upd_max,
            cum_maintenance_seconds: maint_max,
            sigma: sigma_max,
            eps: eps_max,
            partition_count: pc_max,
        },
        normalized: NormalizedColumns {
            op_index: rows.iter().map(|r| r.op_index).collect(),
            qps_at_target: qps,
            cum_update_seconds: upd,
            cum_maintenance_seconds: maint,
            sigma,
            eps,
            partition_count: pc,
        },
    }
}

pub fn write_metrics_csv(rows: &[MetricsRow], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if rows.is_empty() {
        out.write_record([
            "op_index",
            "live_count",
            "partition_count",
            "sigma",
            "eps",
            "eps_prime",
            "qps_at_target",
            "mean_recall",
            "n_p_used",
            "cum_update_seconds",
            "cum_maintenance_seconds",
            "violators_this_step",
        ])?;
    }
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<MetricsRow>, _>>()?;
    Ok(rows)
}

/// Write `metrics.csv` and `summary.json` into `dir`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_metrics_csv(&out.rows, File::create(dir.join("metrics.csv"))?)?;
    let mut f = File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &out.summary)?;
    f.write_all(b"\n")?;
    Ok(())
}
