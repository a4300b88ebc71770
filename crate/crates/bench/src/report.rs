//! Cross-policy comparison tables from run outputs.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{BenchError, Result};
use crate::run::{read_metrics_csv, Summary};

/// What the normalized columns are divided by.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NormalizeTo {
    /// The largest value across the compared runs.
    RunMax,
    /// The value of the named run.
    Baseline(String),
}

impl NormalizeTo {
    pub fn label(&self) -> String {
        match self {
            NormalizeTo::RunMax => "max across runs".into(),
            NormalizeTo::Baseline(b) => format!("baseline {b}"),
        }
    }
}

/// One compared run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportEntry {
    pub label: String,
    pub mean_qps_at_target: f64,
    pub update_throughput: f64,
    pub total_update_seconds: f64,
    pub total_maintenance_seconds: f64,
    pub final_partition_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub entry: ReportEntry,
    pub norm_qps: f64,
    pub norm_update_throughput: f64,
}

/// Read a run from `summary.json`, a metrics CSV, or a directory holding
/// either. Labels default to the policy name (summaries) or file stem (CSV).
pub fn load_entry(path: &Path) -> Result<ReportEntry> {
    let path: PathBuf = if path.is_dir() {
        let s = path.join("summary.json");
        if s.exists() {
            s
        } else {
            path.join("metrics.csv")
        }
    } else {
        path.to_path_buf()
    };
    if path.extension().is_some_and(|e| e == "json") {
        let s: Summary = serde_json::from_slice(&std::fs::read(&path)?)?;
        return Ok(ReportEntry {
            label: s.policy,
            mean_qps_at_target: s.mean_qps_at_target,
            update_throughput: s.update_throughput,
            total_update_seconds: s.total_update_seconds,
            total_maintenance_seconds: s.total_maintenance_seconds,
            final_partition_count: s.final_partition_count,
        });
    }
    let rows = read_metrics_csv(&path)?;
    let last = rows
        .last()
        .ok_or_else(|| BenchError::Config(format!("{} has no rows", path.display())))?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let busy = last.cum_update_seconds + last.cum_maintenance_seconds;
    Ok(ReportEntry {
        label,
        mean_qps_at_target: rows.iter().map(|r| r.qps_at_target).sum::<f64>() / rows.len() as f64,
        // CSV rows carry no update volume; throughput is per second of busy time.
        update_throughput: if busy > 0.0 { 1.0 / busy } else { 0.0 },
        total_update_seconds: last.cum_update_seconds,
        total_maintenance_seconds: last.cum_maintenance_seconds,
        final_partition_count: last.partition_count,
    })
}

pub fn build_report(entries: Vec<ReportEntry>, norm: &NormalizeTo) -> Result<Vec<ReportRow>> {
    let (qps_ref, upd_ref) = match norm {
        NormalizeTo::RunMax => (
            entries.iter().map(|e| e.mean_qps_at_target).fold(0.0, f64::max),
            entries.iter().map(|e| e.update_throughput).fold(0.0, f64::max),
        ),
        NormalizeTo::Baseline(name) => {
            let b = entries
                .iter()
                .find(|e| &e.label == name)
                .ok_or_else(|| BenchError::Config(format!("baseline {name} not among the runs")))?;
            (b.mean_qps_at_target, b.update_throughput)
        }
    };
    let div = |v: f64, r: f64| if r > 0.0 { v / r } else { 0.0 };
    Ok(entries
        .into_iter()
        .map(|entry| ReportRow {
            norm_qps: div(entry.mean_qps_at_target, qps_ref),
            norm_update_throughput: div(entry.update_throughput, upd_ref),
            entry,
        })
        .collect())
}

/// CSV table preceded by a comment line naming the normalization.
pub fn render_report(rows: &[ReportRow], norm: &NormalizeTo) -> Result<String> {
    let mut out = format!("# normalized to {}\n", norm.label()).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record([
            "label",
            "mean_qps_at_target",
            "update_throughput",
            "total_update_seconds",
            "total_maintenance_seconds",
            "final_partition_count",
            "norm_qps",
            "norm_update_throughput",
        ])?;
        for r in rows {
            let e = &r.entry;
            w.write_record([
                e.label.clone(),
                e.mean_qps_at_target.to_string(),
                e.update_throughput.to_string(),
                e.total_update_seconds.to_string(),
                e.total_maintenance_seconds.to_string(),
                e.final_partition_count.to_string(),
                r.norm_qps.to_string(),
                r.norm_update_throughput.to_string(),
            ])?;
        }
        w.flush()?;
    }
    String::from_utf8(out).map_err(|e| BenchError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(label: &str, qps: f64, upd: f64) -> ReportEntry {
        ReportEntry {
            label: label.into(),
            mean_qps_at_target: qps,
            update_throughput: upd,
            total_update_seconds: 1.0,
            total_maintenance_seconds: 1.0,
            final_partition_count: 10,
        }
    }

    #[test]
    fn both_normalizations() {
        let e = vec![entry("a", 100.0, 10.0), entry("b", 50.0, 40.0)];
        let max = build_report(e.clone(), &NormalizeTo::RunMax).unwrap();
        assert_eq!((max[0].norm_qps, max[0].norm_update_throughput), (1.0, 0.25));
        assert_eq!((max[1].norm_qps, max[1].norm_update_throughput), (0.5, 1.0));
        let base = build_report(e.clone(), &NormalizeTo::Baseline("b".into())).unwrap();
        assert_eq!((base[0].norm_qps, base[0].norm_update_throughput), (2.0, 0.25));
        assert!(build_report(e, &NormalizeTo::Baseline("c".into())).is_err());
        let text = render_report(&max, &NormalizeTo::RunMax).unwrap();
        assert!(text.starts_with("# normalized to max across runs\nlabel,"));
    }
}
