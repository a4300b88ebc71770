use std::path::PathBuf;
use std::process::ExitCode;

use adaivf::index::write_snapshot;
use adaivf::io::{read_vectors, write_fvecs, write_ivecs};
use adaivf::maintenance::rebuild_partition_count;
use adaivf::workload::{generate, save_trace, GaussianMixture, WorkloadSpec};
use adaivf::{DistanceMetric, IndexConfig, IvfIndex};
use adaivf_bench::config::merge_json;
use adaivf_bench::report::{build_report, load_entry, render_report, NormalizeTo};
use adaivf_bench::{ground_truth, run, BenchError, Result, RunConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

#[derive(Parser)]
#[command(name = "adaivf", version, about = "Dynamic IVF index benchmark harness")]
struct Cli {
    /// Worker threads; 1 gives fully serial execution.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic Gaussian-mixture dataset as fvecs.
    GenDataset(GenDatasetArgs),
    /// Build an index over a dataset and write a snapshot.
    Build(BuildArgs),
    /// Generate a workload trace.
    GenWorkload(GenWorkloadArgs),
    /// Replay a trace under a maintenance policy.
    Run(RunArgs),
    /// Exact neighbours of a query file, written as ivecs.
    GroundTruth(GroundTruthArgs),
    /// Compare runs in a normalized table.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenDatasetArgs {
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 100)]
    clusters: usize,
    #[arg(long, default_value_t = 10.0)]
    spread: f64,
    #[arg(long, default_value_t = 2.0)]
    std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    L2,
    Ip,
}

impl From<Metric> for DistanceMetric {
    fn from(m: Metric) -> Self {
        match m {
            Metric::L2 => DistanceMetric::SquaredL2,
            Metric::Ip => DistanceMetric::InnerProduct,
        }
    }
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Partition count; `round(n / target_size)` when absent.
    #[arg(long)]
    n_c: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    target_size: usize,
    #[arg(long, value_enum, default_value_t = Metric::L2)]
    metric: Metric,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenWorkloadArgs {
    /// Base vectors; a default synthetic mixture when absent.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Generator spec as JSON; its fields override the flags below.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    s0: Option<f64>,
    #[arg(long)]
    su: Option<usize>,
    /// Insert batches per delete batch (`inf` for insert-only).
    #[arg(long)]
    r_id: Option<String>,
    #[arg(long)]
    csf_u: Option<f64>,
    #[arg(long)]
    r_rw: Option<f64>,
    #[arg(long)]
    csf_q: Option<f64>,
    #[arg(long)]
    query_clusters: Option<f64>,
    #[arg(long)]
    total_ops: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration; its fields override the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Policy kind: frozen, update_centroids, periodic_rebuild, dedrift, lire, ada_ivf.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    recall_target: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    measure_every: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// wall or work.
    #[arg(long)]
    clock: Option<String>,
    #[arg(long)]
    delta_capacity: Option<usize>,
    #[arg(long)]
    initial_partitions: Option<usize>,
    #[arg(long)]
    audit: bool,
    /// Cool unprobed partitions once per search batch.
    #[arg(long)]
    cool_per_batch: bool,
}

#[derive(Args)]
struct GroundTruthArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, value_enum, default_value_t = Metric::L2)]
    metric: Metric,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Run output directories, summary.json files or metrics CSVs.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Normalize to this run's label instead of the maximum across runs.
    #[arg(long)]
    baseline: Option<String>,
}

fn config_err(e: impl std::fmt::Display) -> BenchError {
    BenchError::Config(e.to_string())
}

/// Flags that were given, overlaid by the JSON document at `file`.
fn layered<T: serde::de::DeserializeOwned>(flags: Map<String, Value>, file: Option<&PathBuf>) -> Result<T> {
    let mut doc = Value::Object(flags);
    if let Some(path) = file {
        let top: Value = serde_json::from_str(&std::fs::read_to_string(path)?).map_err(config_err)?;
        merge_json(&mut doc, top);
    }
    serde_json::from_value(doc).map_err(config_err)
}

fn put<V: serde::Serialize>(m: &mut Map<String, Value>, key: &str, v: Option<V>) {
    if let Some(v) = v {
        m.insert(key.into(), json!(v));
    }
}

fn gen_dataset(a: GenDatasetArgs) -> Result<()> {
    let g = GaussianMixture {
        n: a.n,
        dim: a.dim,
        clusters: a.clusters,
        spread: a.spread,
        std: a.std,
        seed: a.seed,
    };
    let (ds, _) = g.generate().map_err(config_err)?;
    write_fvecs(&a.out, &ds)?;
    println!("wrote {} vectors of dim {} to {}", ds.len(), ds.dim(), a.out.display());
    Ok(())
}

fn build(a: BuildArgs) -> Result<()> {
    let ds = read_vectors::<f32>(&a.dataset)?;
    let config = IndexConfig {
        n_c: a.n_c.unwrap_or_else(|| rebuild_partition_count(ds.len(), a.target_size)),
        target_partition_size: a.target_size,
        metric: a.metric.into(),
        seed: a.seed,
        ..Default::default()
    };
    config.validate().map_err(config_err)?;
    let index = IvfIndex::build(&ds, config)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(&a.out)?);
    write_snapshot(&index, &mut out)?;
    let stats = index.stats();
    println!(
        "built {} partitions over {} vectors: sigma {:.3}, eps {:.6}",
        index.partition_count(),
        index.len(),
        stats.sigma,
        stats.eps
    );
    Ok(())
}

fn gen_workload(a: GenWorkloadArgs) -> Result<()> {
    let mut flags = Map::new();
    if let Some(s0) = a.s0 {
        // Values above 1 are counts, the rest fractions.
        let v = if s0 > 1.0 { json!(s0 as usize) } else { json!(s0) };
        flags.insert("s0".into(), v);
    }
    put(&mut flags, "su", a.su);
    put(&mut flags, "r_id", a.r_id.map(|r| r.parse::<f64>().map(Value::from).unwrap_or(Value::String(r))));
    put(&mut flags, "csf_u", a.csf_u);
    put(&mut flags, "r_rw", a.r_rw);
    put(&mut flags, "csf_q", a.csf_q);
    put(&mut flags, "query_clusters", a.query_clusters);
    put(&mut flags, "total_ops", a.total_ops);
    put(&mut flags, "k", a.k);
    put(&mut flags, "seed", a.seed);
    let spec: WorkloadSpec = layered(flags, a.spec.as_ref())?;
    spec.validate().map_err(config_err)?;
    let data = match &a.dataset {
        Some(p) => read_vectors::<f32>(p)?,
        None => GaussianMixture::default().generate()?.0,
    };
    let queries = a.queries.as_ref().map(read_vectors::<f32>).transpose()?;
    let mut w = generate(&data, queries.as_ref(), &spec)?;
    w.trace.header.dataset = a.dataset.as_ref().map(|p| p.display().to_string());
    save_trace(&w.trace, &a.out)?;
    println!(
        "wrote {} update and {} search operations to {}",
        w.trace.update_count(),
        w.trace.search_count(),
        a.out.display()
    );
    Ok(())
}

fn run_cmd(a: RunArgs, threads: Option<usize>) -> Result<()> {
    let mut flags = Map::new();
    put(&mut flags, "trace", a.trace);
    put(&mut flags, "dataset", a.dataset);
    put(&mut flags, "queries", a.queries);
    put(&mut flags, "policy", a.policy.map(|kind| json!({ "kind": kind })));
    put(&mut flags, "recall_target", a.recall_target);
    put(&mut flags, "k", a.k);
    put(&mut flags, "measure_every", a.measure_every);
    put(&mut flags, "output", a.output);
    put(&mut flags, "seed", a.seed);
    put(&mut flags, "clock", a.clock);
    put(&mut flags, "initial_partitions", a.initial_partitions);
    put(&mut flags, "threads", threads);
    if a.audit {
        flags.insert("audit".into(), json!(true));
    }
    if a.cool_per_batch {
        flags.insert("cool_per_query".into(), json!(false));
    }
    if let Some(c) = a.delta_capacity {
        flags.insert("index".into(), json!({ "delta_capacity": c }));
    }
    let cfg: RunConfig = layered(flags, a.config.as_ref())?;
    if cfg.output.is_none() {
        return Err(BenchError::Config("run needs an output directory".into()));
    }
    let out = run(&cfg)?;
    let s = &out.summary;
    println!(
        "{}: {} measurements, mean qps@{} {:.1}, update {:.3}s, maintenance {:.3}s, {} partitions",
        s.policy,
        out.rows.len(),
        cfg.recall_target,
        s.mean_qps_at_target,
        s.total_update_seconds,
        s.total_maintenance_seconds,
        s.final_partition_count
    );
    Ok(())
}

fn ground_truth_cmd(a: GroundTruthArgs) -> Result<()> {
    let base = read_vectors::<f32>(&a.base)?;
    let queries = read_vectors::<f32>(&a.queries)?;
    if base.dim() != queries.dim() {
        return Err(BenchError::Config(format!(
            "base dim {} does not match query dim {}",
            base.dim(),
            queries.dim()
        )));
    }
    let live: Vec<_> = base.iter().collect();
    let gt = ground_truth(&live, queries.as_flat(), base.dim(), a.k, a.metric.into())?;
    let rows: Vec<Vec<i32>> = gt
        .neighbors
        .iter()
        .map(|n| n.iter().map(|(id, _)| id.0 as i32).collect())
        .collect();
    write_ivecs(&a.out, &rows)?;
    if gt.truncated {
        eprintln!("warning: k exceeds the base size; lists are truncated");
    }
    println!("wrote {} neighbour lists to {}", rows.len(), a.out.display());
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let entries = a.runs.iter().map(|p| load_entry(p)).collect::<Result<Vec<_>>>()?;
    let norm = a.baseline.map_or(NormalizeTo::RunMax, NormalizeTo::Baseline);
    let rows = build_report(entries, &norm)?;
    print!("{}", render_report(&rows, &norm)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.cmd {
        Cmd::GenDataset(a) => gen_dataset(a),
        Cmd::Build(a) => build(a),
        Cmd::GenWorkload(a) => gen_workload(a),
        Cmd::Run(a) => run_cmd(a, cli.threads),
        Cmd::GroundTruth(a) => ground_truth_cmd(a),
        Cmd::Report(a) => report_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let BenchError::Invariant { dump: Some(p), .. } = &e {
                eprintln!("audit dump written to {}", p.display());
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
