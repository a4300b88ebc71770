//! Trace file: JSON lines plus an fvecs sidecar holding every vector.
//!
//! The first line is the header (dim, seed, spec echo, initial set); each
//! following line is one operation. Insert and search records point into the
//! sidecar by row offset. The sidecar lives next to the trace as
//! `<trace file name>.fvecs`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_fvecs, write_fvecs_to};
use crate::vector::VectorId;

use super::WorkloadSpec;

pub const TRACE_FORMAT: &str = "adaivf-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub seed: u64,
    /// Free-form reference to the source dataset.
    pub dataset: Option<String>,
    pub n_gen_clusters: usize,
    /// Some inserts re-add previously deleted vectors under fresh ids.
    pub reinserted: bool,
    pub spec: WorkloadSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operation {
    Insert { ids: Vec<VectorId>, vectors: Vec<f32> },
    Delete { ids: Vec<VectorId> },
    Search { queries: Vec<f32>, k: usize },
}

impl Operation {
    pub fn is_update(&self) -> bool {
        !matches!(self, Operation::Search { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub initial_ids: Vec<VectorId>,
    /// Row-major initial vectors, aligned with `initial_ids`.
    pub initial_vectors: Vec<f32>,
    pub ops: Vec<Operation>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    #[serde(flatten)]
    header: TraceHeader,
    initial: InitialRecord,
}

#[derive(Serialize, Deserialize)]
struct InitialRecord {
    ids: Vec<VectorId>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
enum OpRecord {
    Insert { ids: Vec<VectorId>, offset: usize },
    Delete { ids: Vec<VectorId> },
    Search { k: usize, offset: usize, count: usize },
}

impl Trace {
    pub fn dim(&self) -> usize {
        self.header.dim
    }

    pub fn update_count(&self) -> usize {
        self.ops.iter().filter(|o| o.is_update()).count()
    }

    pub fn search_count(&self) -> usize {
        self.ops.len() - self.update_count()
    }

    /// Simulate the live set: inserts are fresh, deletes hit live ids,
    /// searches never see an empty set, vector shapes match `dim`.
    pub fn validate(&self) -> Result<()> {
        let dim = self.header.dim;
        let fail = |line: usize, message: String| Err(Error::Trace { line, message });
        let mut live: HashSet<VectorId> = HashSet::new();
        let mut ever: HashSet<VectorId> = HashSet::new();
        if self.initial_vectors.len() != self.initial_ids.len() * dim {
            return fail(1, "initial vectors do not match ids".into());
        }
        for id in &self.initial_ids {
            if !ever.insert(*id) {
                return fail(1, format!("{id} repeated in initial set"));
            }
            live.insert(*id);
        }
        for (i, op) in self.ops.iter().enumerate() {
            let line = i + 2;
            match op {
                Operation::Insert { ids, vectors } => {
                    if vectors.len() != ids.len() * dim {
                        return fail(line, "insert vectors do not match ids".into());
                    }
                    for id in ids {
                        if !ever.insert(*id) {
                            return fail(line, format!("{id} inserted twice"));
                        }
                        live.insert(*id);
                    }
                }
                Operation::Delete { ids } => {
                    for id in ids {
                        if !live.remove(id) {
                            return fail(line, format!("delete of absent {id}"));
                        }
                    }
                }
                Operation::Search { queries, k } => {
                    if *k == 0 || queries.is_empty() || queries.len() % dim != 0 {
                        return fail(line, "malformed search batch".into());
                    }
                    if live.is_empty() {
                        return fail(line, "search on an empty index".into());
                    }
                }
            }
        }
        Ok(())
    }
}

/// Sidecar path for a trace file: the trace file name with `.fvecs` appended.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".fvecs");
    PathBuf::from(name)
}

pub fn save_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dim = trace.header.dim;
    let json = |e: serde_json::Error| Error::Format(e.to_string());
    let mut lines = BufWriter::new(File::create(path)?);
    let mut side = BufWriter::new(File::create(sidecar_path(path))?);
    let mut rows = 0usize;

    let head = HeaderLine {
        header: trace.header.clone(),
        initial: InitialRecord {
            ids: trace.initial_ids.clone(),
            offset: 0,
        },
    };
    serde_json::to_writer(&mut lines, &head).map_err(json)?;
    lines.write_all(b"\n")?;
    write_fvecs_to(&mut side, trace.initial_vectors.chunks_exact(dim))?;
    rows += trace.initial_ids.len();

    for op in &trace.ops {
        let rec = match op {
            Operation::Insert { ids, vectors } => {
                let r = OpRecord::Insert {
                    ids: ids.clone(),
                    offset: rows,
                };
                write_fvecs_to(&mut side, vectors.chunks_exact(dim))?;
                rows += ids.len();
                r
            }
            Operation::Delete { ids } => OpRecord::Delete { ids: ids.clone() },
            Operation::Search { queries, k } => {
                let count = queries.len() / dim;
                let r = OpRecord::Search {
                    k: *k,
                    offset: rows,
                    count,
                };
                write_fvecs_to(&mut side, queries.chunks_exact(dim))?;
                rows += count;
                r
            }
        };
        serde_json::to_writer(&mut lines, &rec).map_err(json)?;
        lines.write_all(b"\n")?;
    }
    lines.flush()?;
    side.flush()?;
    Ok(())
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace> {
    let path = path.as_ref();
    let mut reader = BufReader::new(File::open(path)?);
    let mut raw = Vec::new();
    let mut buf = String::new();
    loop {
        buf.clear();
        if reader.read_line(&mut buf)? == 0 {
            break;
        }
        raw.push(buf.clone());
    }
    let parse_err = |line: usize, text: &str, e: serde_json::Error| {
        let message = if text.ends_with('\n') {
            e.to_string()
        } else {
            format!("truncated record; last complete line is {}", line - 1)
        };
        Error::Trace { line, message }
    };

    let first = raw.first().ok_or(Error::Trace {
        line: 1,
        message: "missing header".into(),
    })?;
    let head: HeaderLine = serde_json::from_str(first).map_err(|e| parse_err(1, first, e))?;
    if head.header.format != TRACE_FORMAT || head.header.version != TRACE_VERSION {
        return Err(Error::Trace {
            line: 1,
            message: format!(
                "unsupported trace {} v{}",
                head.header.format, head.header.version
            ),
        });
    }
    let mut records = Vec::with_capacity(raw.len().saturating_sub(1));
    for (i, text) in raw.iter().enumerate().skip(1) {
        if text.trim().is_empty() {
            continue;
        }
        let rec: OpRecord = serde_json::from_str(text).map_err(|e| parse_err(i + 1, text, e))?;
        records.push((i + 1, rec));
    }

    let dim = head.header.dim;
    let side = read_fvecs::<f32>(sidecar_path(path))?;
    if !side.is_empty() && side.dim() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: side.dim(),
        });
    }
    let flat = side.as_flat();
    let rows = |line: usize, offset: usize, count: usize| -> Result<Vec<f32>> {
        if offset + count > side.len() {
            return Err(Error::Trace {
                line,
                message: format!("rows {offset}..{} beyond sidecar", offset + count),
            });
        }
        Ok(flat[offset * dim..(offset + count) * dim].to_vec())
    };

    let initial_vectors = rows(1, head.initial.offset, head.initial.ids.len())?;
    let mut ops = Vec::with_capacity(records.len());
    for (line, rec) in records {
        ops.push(match rec {
            OpRecord::Insert { ids, offset } => {
                let vectors = rows(line, offset, ids.len())?;
                Operation::Insert { ids, vectors }
            }
            OpRecord::Delete { ids } => Operation::Delete { ids },
            OpRecord::Search { k, offset, count } => Operation::Search {
                queries: rows(line, offset, count)?,
                k,
            },
        });
    }
    Ok(Trace {
        header: head.header,
        initial_ids: head.initial.ids,
        initial_vectors,
        ops,
    })
}
