//! Readers and writers for the `fvecs` / `bvecs` / `ivecs` formats.
//!
//! Every record is a little-endian `i32` dimension followed by that many
//! components: `f32` for fvecs, `u8` for bvecs, `i32` for ivecs.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vector::{VectorDataset, VectorId};

#[derive(Clone, Copy)]
enum Payload {
    F32,
    U8,
}

/// Reads the next record header. `Ok(None)` on a clean end of stream.
fn read_dim(r: &mut impl Read, record: usize) -> Result<Option<usize>> {
    let mut buf = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    match got {
        0 => Ok(None),
        4 => {
            let d = i32::from_le_bytes(buf);
            if d <= 0 {
                return Err(Error::Format(format!(
                    "record {record}: non-positive dimension {d}"
                )));
            }
            Ok(Some(d as usize))
        }
        _ => Err(Error::Format(format!("record {record}: truncated header"))),
    }
}

fn truncated(record: usize) -> impl FnOnce(std::io::Error) -> Error {
    move |e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            Error::Format(format!("record {record}: truncated payload"))
        } else {
            Error::Io(e)
        }
    }
}

fn read_vecs<T: Scalar>(mut r: impl Read, payload: Payload) -> Result<VectorDataset<T>> {
    let mut ds = VectorDataset::<T>::new(0);
    let mut dim = None;
    let mut f32_buf: Vec<f32> = Vec::new();
    let mut u8_buf: Vec<u8> = Vec::new();
    let mut row: Vec<T> = Vec::new();
    let mut record = 0usize;
    while let Some(d) = read_dim(&mut r, record)? {
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::Format(format!(
                    "record {record}: dimension {d} differs from {expected}"
                )))
            }
            _ => {}
        }
        row.clear();
        match payload {
            Payload::F32 => {
                f32_buf.resize(d, 0.0);
                r.read_f32_into::<LittleEndian>(&mut f32_buf)
                    .map_err(truncated(record))?;
                row.extend(f32_buf.iter().map(|&x| T::from_f64_lossy(x as f64)));
            }
            Payload::U8 => {
                u8_buf.resize(d, 0);
                r.read_exact(&mut u8_buf).map_err(truncated(record))?;
                row.extend(u8_buf.iter().map(|&x| T::from_f64_lossy(x as f64)));
            }
        }
        ds.push(VectorId(record as u64), &row)
            .map_err(|e| Error::Format(format!("record {record}: {e}")))?;
        record += 1;
    }
    Ok(ds)
}

pub fn read_fvecs_from<T: Scalar>(r: impl Read) -> Result<VectorDataset<T>> {
    read_vecs(r, Payload::F32)
}

pub fn read_bvecs_from<T: Scalar>(r: impl Read) -> Result<VectorDataset<T>> {
    read_vecs(r, Payload::U8)
}

/// Read an fvecs file; ids are `0..n` in file order. An empty file yields an
/// empty dataset with dimension 0.
pub fn read_fvecs<T: Scalar>(path: impl AsRef<Path>) -> Result<VectorDataset<T>> {
    read_fvecs_from(BufReader::new(File::open(path)?))
}

/// Read a bvecs file, converting bytes to floats.
pub fn read_bvecs<T: Scalar>(path: impl AsRef<Path>) -> Result<VectorDataset<T>> {
    read_bvecs_from(BufReader::new(File::open(path)?))
}

/// Read fvecs or bvecs by file extension.
pub fn read_vectors<T: Scalar>(path: impl AsRef<Path>) -> Result<VectorDataset<T>> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("bvecs") => read_bvecs(path),
        _ => read_fvecs(path),
    }
}

/// Write rows as fvecs records; components are narrowed to `f32`.
pub fn write_fvecs_to<'a, T: Scalar>(
    w: &mut impl Write,
    rows: impl IntoIterator<Item = &'a [T]>,
) -> Result<()> {
    for row in rows {
        w.write_i32::<LittleEndian>(row.len() as i32)?;
        for x in row {
            w.write_f32::<LittleEndian>(x.to_f32().unwrap_or(f32::NAN))?;
        }
    }
    Ok(())
}

pub fn write_fvecs<T: Scalar>(path: impl AsRef<Path>, ds: &VectorDataset<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_fvecs_to(&mut w, ds.iter().map(|(_, v)| v))?;
    w.flush()?;
    Ok(())
}

pub fn read_ivecs_from(mut r: impl Read) -> Result<Vec<Vec<i32>>> {
    let mut out = Vec::new();
    let mut record = 0usize;
    while let Some(d) = read_dim(&mut r, record)? {
        let mut row = vec![0i32; d];
        r.read_i32_into::<LittleEndian>(&mut row)
            .map_err(truncated(record))?;
        out.push(row);
        record += 1;
    }
    Ok(out)
}

/// Read an ivecs file (e.g. ground-truth neighbor lists). Rows may differ in length.
pub fn read_ivecs(path: impl AsRef<Path>) -> Result<Vec<Vec<i32>>> {
    read_ivecs_from(BufReader::new(File::open(path)?))
}

pub fn write_ivecs_to(w: &mut impl Write, rows: &[Vec<i32>]) -> Result<()> {
    for row in rows {
        w.write_i32::<LittleEndian>(row.len() as i32)?;
        for &x in row {
            w.write_i32::<LittleEndian>(x)?;
        }
    }
    Ok(())
}

pub fn write_ivecs(path: impl AsRef<Path>, rows: &[Vec<i32>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ivecs_to(&mut w, rows)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn fvecs_bytes(rows: &[&[f32]]) -> Vec<u8> {
        let mut out = Vec::new();
        for r in rows {
            out.extend_from_slice(&(r.len() as i32).to_le_bytes());
            for x in *r {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    #[test]
    fn single_record_decodes() {
        let bytes = fvecs_bytes(&[&[1.0, 2.0, 3.0, 4.0]]);
        let ds: VectorDataset<f32> = read_fvecs_from(Cursor::new(bytes)).unwrap();
        assert_eq!(ds.dim(), 4);
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.get(VectorId(0)).unwrap(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let ds: VectorDataset<f32> = read_fvecs_from(Cursor::new(Vec::new())).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.dim(), 0);
    }

    #[test]
    fn inconsistent_dims_rejected() {
        let bytes = fvecs_bytes(&[&[0.0; 4], &[0.0; 8]]);
        let err = read_fvecs_from::<f32>(Cursor::new(bytes)).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn truncated_record_rejected() {
        let mut bytes = fvecs_bytes(&[&[1.0, 2.0, 3.0]]);
        bytes.truncate(bytes.len() - 2);
        assert!(matches!(
            read_fvecs_from::<f32>(Cursor::new(bytes)),
            Err(Error::Format(_))
        ));
        // header cut mid-way
        let bytes = vec![4u8, 0];
        assert!(matches!(
            read_fvecs_from::<f32>(Cursor::new(bytes)),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn bvecs_converts_bytes() {
        let mut bytes = 3i32.to_le_bytes().to_vec();
        bytes.extend_from_slice(&[0u8, 7, 255]);
        let ds: VectorDataset<f64> = read_bvecs_from(Cursor::new(bytes)).unwrap();
        assert_eq!(ds.row(0), &[0.0, 7.0, 255.0]);
    }

    #[test]
    fn ivecs_roundtrip_ragged() {
        let rows = vec![vec![1, 2, 3], vec![-4], vec![5, 6]];
        let mut buf = Vec::new();
        write_ivecs_to(&mut buf, &rows).unwrap();
        assert_eq!(read_ivecs_from(Cursor::new(buf)).unwrap(), rows);
    }

    proptest! {
        #[test]
        fn fvecs_roundtrip_is_bit_exact(
            rows in prop::collection::vec(prop::collection::vec(-1e30f32..1e30, 5), 0..20)
        ) {
            let mut buf = Vec::new();
            write_fvecs_to(&mut buf, rows.iter().map(|r| r.as_slice())).unwrap();
            let ds: VectorDataset<f32> = read_fvecs_from(Cursor::new(buf)).unwrap();
            prop_assert_eq!(ds.len(), rows.len());
            for (i, r) in rows.iter().enumerate() {
                let bits: Vec<u32> = r.iter().map(|x| x.to_bits()).collect();
                let got: Vec<u32> = ds.row(i).iter().map(|x| x.to_bits()).collect();
                prop_assert_eq!(got, bits);
            }
        }
    }
}
