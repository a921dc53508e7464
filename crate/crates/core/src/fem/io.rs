//! `PUMROM01` dense matrix files: 8-byte magic, `u64` rows, `u64` cols, then
//! row-major little-endian `f64` values. Fields are single-column matrices
//! with a JSON sidecar at `<path>.json`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PUMROM01";

pub fn write_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::MatrixFormat("file shorter than header".into()))?;
    if &magic != MAGIC {
        return Err(Error::MatrixFormat("bad magic".into()));
    }
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| Error::MatrixFormat("missing row count".into()))?;
    let rows = u64::from_le_bytes(b) as usize;
    r.read_exact(&mut b)
        .map_err(|_| Error::MatrixFormat("missing column count".into()))?;
    let cols = u64::from_le_bytes(b) as usize;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::MatrixFormat("size overflow".into()))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != len * 8 {
        return Err(Error::MatrixFormat(format!(
            "expected {} payload bytes, found {}",
            len * 8,
            payload.len()
        )));
    }
    let vals: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &vals))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes a field and its JSON sidecar.
pub fn write_field(path: impl AsRef<Path>, values: &[f64], meta: &serde_json::Value) -> Result<()> {
    let path = path.as_ref();
    write_matrix(path, &DMatrix::from_column_slice(values.len(), 1, values))?;
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<(Vec<f64>, serde_json::Value)> {
    let path = path.as_ref();
    let m = read_matrix(path)?;
    if m.ncols() != 1 {
        return Err(Error::MatrixFormat(format!("field file has {} columns", m.ncols())));
    }
    let meta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    Ok((m.column(0).iter().copied().collect(), meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, -6.5]);
        write_matrix(&p, &m).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 3);
        // row-major: second value is m[(0,1)]
        assert_eq!(f64::from_le_bytes(bytes[32..40].try_into().unwrap()), 2.0);
        assert_eq!(read_matrix(&p).unwrap(), m);
    }

    #[test]
    fn malformed_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.bin");
        std::fs::write(&p, b"PUMROM02aaaaaaaaaaaaaaaa").unwrap();
        assert!(matches!(read_matrix(&p), Err(Error::MatrixFormat(_))));
        let mut bytes = MAGIC.to_vec();
        bytes.extend(1u64.to_le_bytes());
        bytes.extend(2u64.to_le_bytes());
        bytes.extend(1.0f64.to_le_bytes());
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_matrix(&p), Err(Error::MatrixFormat(_))));
    }

    #[test]
    fn field_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.bin");
        let meta = serde_json::json!({"n_dd": 2, "degree": 3});
        write_field(&p, &[0.5, 0.25], &meta).unwrap();
        let (v, m) = read_field(&p).unwrap();
        assert_eq!(v, vec![0.5, 0.25]);
        assert_eq!(m, meta);
    }
}
