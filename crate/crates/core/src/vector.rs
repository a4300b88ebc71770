//! Vector identifiers, datasets and the distance kernel.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Stable identifier of one vector over the lifetime of a run.
///
/// Ids are assigned by whoever drives the index (the trace), never by the
/// index itself, and are not reused after deletion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VectorId(pub u64);

impl fmt::Display for VectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for VectorId {
    fn from(v: u64) -> Self {
        VectorId(v)
    }
}

/// Similarity metric. Every metric is normalized so that smaller is more similar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    SquaredL2,
    /// Negated inner product.
    InnerProduct,
}

impl DistanceMetric {
    /// Evaluate without checking dimensions.
    #[inline]
    pub fn eval<T: Scalar>(self, a: &[T], b: &[T]) -> T {
        match self {
            DistanceMetric::SquaredL2 => squared_l2(a, b),
            DistanceMetric::InnerProduct => -dot(a, b),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            DistanceMetric::SquaredL2 => 0,
            DistanceMetric::InnerProduct => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DistanceMetric::SquaredL2),
            1 => Some(DistanceMetric::InnerProduct),
            _ => None,
        }
    }
}

/// Distance between `a` and `b` under `metric`.
pub fn distance<T: Scalar>(a: &[T], b: &[T], metric: DistanceMetric) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(metric.eval(a, b))
}

const LANES: usize = 8;

#[inline]
pub fn squared_l2<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let mut tail = T::zero();
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let d = *x - *y;
        tail += d * d;
    }
    acc.iter().fold(tail, |s, v| s + *v)
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += *x * *y;
    }
    acc.iter().fold(tail, |s, v| s + *v)
}

/// Euclidean norm accumulated in `f64`.
pub fn norm_f64<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt()
}

/// Dense `dim`-dimensional vectors addressed by [`VectorId`], stored row-major.
#[derive(Debug, Clone, Default)]
pub struct VectorDataset<T> {
    dim: usize,
    ids: Vec<VectorId>,
    data: Vec<T>,
    positions: HashMap<VectorId, usize>,
}

impl<T: Scalar> VectorDataset<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ids: Vec::new(),
            data: Vec::new(),
            positions: HashMap::new(),
        }
    }

    /// Wrap a row-major buffer, numbering rows `0..n`.
    pub fn from_flat(dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let n = data.len() / dim;
        let ids: Vec<VectorId> = (0..n as u64).map(VectorId).collect();
        let positions = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        Ok(Self {
            dim,
            ids,
            data,
            positions,
        })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut ds = Self::new(dim);
        for (i, r) in rows.iter().enumerate() {
            ds.push(VectorId(i as u64), r)?;
        }
        Ok(ds)
    }

    /// Append one vector. The first push fixes the dimension of an empty,
    /// dimensionless dataset.
    pub fn push(&mut self, id: VectorId, v: &[T]) -> Result<()> {
        if self.dim == 0 && self.ids.is_empty() {
            self.dim = v.len();
        }
        if v.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        if self.positions.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.positions.insert(id, self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(v);
        Ok(())
    }

    /// Dimension; 0 for an empty dataset read from an empty file.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[VectorId] {
        &self.ids
    }

    pub fn as_flat(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: VectorId) -> Option<&[T]> {
        self.positions.get(&id).map(|&i| self.row(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (VectorId, &[T])> + '_ {
        self.ids.iter().enumerate().map(|(i, id)| (*id, self.row(i)))
    }

    /// Convert every component to another scalar type.
    pub fn cast<U: Scalar>(&self) -> VectorDataset<U> {
        VectorDataset {
            dim: self.dim,
            ids: self.ids.clone(),
            data: self
                .data
                .iter()
                .map(|x| U::from_f64_lossy(x.as_f64()))
                .collect(),
            positions: self.positions.clone(),
        }
    }

    /// Sub-dataset holding the given rows, keeping their ids.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut out = Self::new(self.dim);
        for &r in rows {
            out.ids.push(self.ids[r]);
            out.data.extend_from_slice(self.row(r));
        }
        out.positions = out.ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        out
    }
}
