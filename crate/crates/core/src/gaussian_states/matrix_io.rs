//! Row-major matrix files used for covariance checkpoints.
//!
//! Text format: a header line `rows cols`, then one line per row of
//! whitespace-separated values in `{:.16e}` (round-trip exact).
//!
//! Binary format: magic `GMAT`, `rows` and `cols` as little-endian `u64`,
//! then `rows·cols` little-endian `f64` values in row-major order.
//! Checkpoints use magic `GCKP` and carry the evolution time as one extra
//! `f64` after the dimensions.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::CovarianceState;
use crate::{Error, Result};

const MATRIX_MAGIC: &[u8; 4] = b"GMAT";
const CHECKPOINT_MAGIC: &[u8; 4] = b"GCKP";

fn data_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Data { path: path.to_path_buf(), reason: reason.into() }
}

/// Writes `bytes` next to `path` and renames into place.
pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = BufWriter::new(fs::File::create(&tmp)?);
        f.write_all(bytes)?;
        f.flush()?;
        f.get_ref().sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_matrix_text(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_matrix_text(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| data_err(path, "missing header"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| data_err(path, "bad dimension header")))
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(data_err(path, "header must be `rows cols`"));
    }
    let (rows, cols) = (dims[0], dims[1]);
    let mut values = Vec::with_capacity(rows * cols);
    for line in lines.filter(|l| !l.trim().is_empty()) {
        for tok in line.split_whitespace() {
            values.push(tok.parse::<f64>().map_err(|_| data_err(path, format!("bad value `{tok}`")))?);
        }
    }
    if values.len() != rows * cols {
        return Err(data_err(path, format!("expected {} values, found {}", rows * cols, values.len())));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

fn encode(magic: &[u8; 4], m: &DMatrix<f64>, time: Option<f64>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(28 + 8 * m.len());
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    if let Some(t) = time {
        buf.extend_from_slice(&t.to_le_bytes());
    }
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    buf
}

fn decode(path: &Path, magic: &[u8; 4], with_time: bool) -> Result<(DMatrix<f64>, f64)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let header = if with_time { 28 } else { 20 };
    if bytes.len() < header || &bytes[..4] != magic {
        return Err(data_err(path, "not a matrix file of the expected kind"));
    }
    let word = |at: usize| -> [u8; 8] { bytes[at..at + 8].try_into().expect("8-byte slice") };
    let rows = u64::from_le_bytes(word(4)) as usize;
    let cols = u64::from_le_bytes(word(12)) as usize;
    let time = if with_time { f64::from_le_bytes(word(20)) } else { 0.0 };
    if bytes.len() != header + 8 * rows * cols {
        return Err(data_err(path, "truncated matrix payload"));
    }
    let values: Vec<f64> = (0..rows * cols).map(|k| f64::from_le_bytes(word(header + 8 * k))).collect();
    Ok((DMatrix::from_row_slice(rows, cols, &values), time))
}

pub fn write_matrix_binary(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    atomic_write(path, &encode(MATRIX_MAGIC, m, None))
}

pub fn read_matrix_binary(path: &Path) -> Result<DMatrix<f64>> {
    decode(path, MATRIX_MAGIC, false).map(|(m, _)| m)
}

pub fn write_checkpoint(path: &Path, state: &CovarianceState) -> Result<()> {
    atomic_write(path, &encode(CHECKPOINT_MAGIC, state.matrix(), Some(state.time)))
}

pub fn read_checkpoint(path: &Path) -> Result<CovarianceState> {
    let (m, t) = decode(path, CHECKPOINT_MAGIC, true)?;
    CovarianceState::new(m, t)
}
