//! Binary index snapshot.
//!
//! Layout (little-endian): magic, version, scalar width, dim, metric code,
//! partition count, length-prefixed JSON config, global stats, allocator and
//! flag words, then one record per partition (id, size, temperature, score,
//! `mu0`, `mu`, member ids, member vectors, cached assignment distances) and
//! finally the delta store.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{DeltaStore, IvfIndex, Location, Partition, PartitionId};
use crate::config::IndexConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tracking::{GlobalStats, PartitionMeta};
use crate::vector::{DistanceMetric, VectorId};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"AIVFSNAP";
pub const SNAPSHOT_VERSION: u32 = 1;

fn put_scalars<T: Scalar, W: Write>(w: &mut W, xs: &[T]) -> Result<()> {
    let mut buf = Vec::with_capacity(xs.len() * T::BYTES);
    for x in xs {
        x.write_le(&mut buf);
    }
    w.write_all(&buf)?;
    Ok(())
}

fn get_scalars<T: Scalar, R: Read>(r: &mut R, n: usize) -> Result<Vec<T>> {
    let mut buf = vec![0u8; n * T::BYTES];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(T::BYTES).map(T::read_le).collect())
}

fn put_ids<W: Write>(w: &mut W, ids: &[VectorId]) -> Result<()> {
    for id in ids {
        w.write_u64::<LittleEndian>(id.0)?;
    }
    Ok(())
}

fn get_ids<R: Read>(r: &mut R, n: usize) -> Result<Vec<VectorId>> {
    (0..n)
        .map(|_| Ok(VectorId(r.read_u64::<LittleEndian>()?)))
        .collect()
}

fn get_len<R: Read>(r: &mut R) -> Result<usize> {
    let n = r.read_u64::<LittleEndian>()?;
    usize::try_from(n).map_err(|_| Error::Format(format!("length {n} out of range")))
}

pub fn write_snapshot<T: Scalar, W: Write>(index: &IvfIndex<T>, mut w: W) -> Result<()> {
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_u32::<LittleEndian>(SNAPSHOT_VERSION)?;
    w.write_u8(T::BYTES as u8)?;
    w.write_u64::<LittleEndian>(index.dim as u64)?;
    w.write_u8(index.config.metric.code())?;
    w.write_u64::<LittleEndian>(index.partitions.len() as u64)?;
    let cfg = serde_json::to_vec(&index.config).map_err(|e| Error::Format(e.to_string()))?;
    w.write_u64::<LittleEndian>(cfg.len() as u64)?;
    w.write_all(&cfg)?;

    let s = &index.stats;
    for v in [s.sigma0, s.sigma, s.eps0, s.eps] {
        w.write_f64::<LittleEndian>(v)?;
    }
    w.write_u64::<LittleEndian>(s.n0 as u64)?;
    w.write_u64::<LittleEndian>(s.n as u64)?;
    w.write_u64::<LittleEndian>(index.next_partition)?;
    w.write_u64::<LittleEndian>(index.builds)?;
    w.write_u8(index.track_centroids as u8)?;
    w.write_f64::<LittleEndian>(index.eps_sum)?;

    for (pid, p) in &index.partitions {
        w.write_u64::<LittleEndian>(pid.0)?;
        w.write_u64::<LittleEndian>(p.len() as u64)?;
        w.write_u64::<LittleEndian>(p.meta.size as u64)?;
        w.write_f64::<LittleEndian>(p.meta.temperature)?;
        w.write_f64::<LittleEndian>(p.meta.score)?;
        put_scalars(&mut w, &p.meta.mu0)?;
        put_scalars(&mut w, &p.meta.mu)?;
        put_ids(&mut w, &p.ids)?;
        put_scalars(&mut w, &p.data)?;
        for d in &p.assign_dist {
            w.write_f64::<LittleEndian>(*d)?;
        }
    }

    w.write_u64::<LittleEndian>(index.delta.capacity as u64)?;
    w.write_u64::<LittleEndian>(index.delta.len() as u64)?;
    put_ids(&mut w, &index.delta.ids)?;
    put_scalars(&mut w, &index.delta.data)?;
    w.flush()?;
    Ok(())
}

pub fn read_snapshot<T: Scalar, R: Read>(mut r: R) -> Result<IvfIndex<T>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Format("not an index snapshot".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let width = r.read_u8()? as usize;
    if width != T::BYTES {
        return Err(Error::Format(format!(
            "snapshot stores {width}-byte scalars, reader expects {}",
            T::BYTES
        )));
    }
    let dim = get_len(&mut r)?;
    let metric = DistanceMetric::from_code(r.read_u8()?)
        .ok_or_else(|| Error::Format("unknown metric code".into()))?;
    let n_parts = get_len(&mut r)?;
    let cfg_len = get_len(&mut r)?;
    let mut cfg = vec![0u8; cfg_len];
    r.read_exact(&mut cfg)?;
    let config: IndexConfig =
        serde_json::from_slice(&cfg).map_err(|e| Error::Format(e.to_string()))?;
    if config.metric != metric {
        return Err(Error::Format("metric code disagrees with config".into()));
    }

    let sigma0 = r.read_f64::<LittleEndian>()?;
    let sigma = r.read_f64::<LittleEndian>()?;
    let eps0 = r.read_f64::<LittleEndian>()?;
    let eps = r.read_f64::<LittleEndian>()?;
    let n0 = get_len(&mut r)?;
    let n = get_len(&mut r)?;
    let next_partition = r.read_u64::<LittleEndian>()?;
    let builds = r.read_u64::<LittleEndian>()?;
    let track_centroids = r.read_u8()? != 0;
    let eps_sum = r.read_f64::<LittleEndian>()?;

    let mut partitions = BTreeMap::new();
    let mut id_map = HashMap::new();
    for _ in 0..n_parts {
        let pid = PartitionId(r.read_u64::<LittleEndian>()?);
        let len = get_len(&mut r)?;
        let size = get_len(&mut r)?;
        let temperature = r.read_f64::<LittleEndian>()?;
        let score = r.read_f64::<LittleEndian>()?;
        let mu0 = get_scalars(&mut r, dim)?;
        let mu = get_scalars(&mut r, dim)?;
        let ids = get_ids(&mut r, len)?;
        let data = get_scalars(&mut r, len * dim)?;
        let assign_dist = (0..len)
            .map(|_| r.read_f64::<LittleEndian>())
            .collect::<std::io::Result<Vec<f64>>>()?;
        for (slot, id) in ids.iter().enumerate() {
            if id_map.insert(*id, Location::Partition(pid, slot)).is_some() {
                return Err(Error::Format(format!("{id} stored twice")));
            }
        }
        let meta = PartitionMeta {
            size,
            mu0,
            mu,
            temperature,
            score,
        };
        partitions.insert(
            pid,
            Partition {
                id: pid,
                ids,
                data,
                assign_dist,
                meta,
            },
        );
    }

    let capacity = get_len(&mut r)?;
    let delta_len = get_len(&mut r)?;
    let delta_ids = get_ids(&mut r, delta_len)?;
    let delta_data = get_scalars(&mut r, delta_len * dim)?;
    for (slot, id) in delta_ids.iter().enumerate() {
        if id_map.insert(*id, Location::Delta(slot)).is_some() {
            return Err(Error::Format(format!("{id} stored twice")));
        }
    }

    let mut index = IvfIndex {
        config,
        dim,
        partitions,
        id_map,
        delta: DeltaStore {
            capacity,
            ids: delta_ids,
            data: delta_data,
        },
        stats: GlobalStats {
            dim,
            sigma0,
            sigma,
            eps0,
            eps,
            n0,
            n,
        },
        next_partition,
        track_centroids,
        eps_sum,
        builds,
        centroid_cache: Vec::new(),
        centroid_pids: Vec::new(),
    };
    index.after_mutation();
    Ok(index)
}
