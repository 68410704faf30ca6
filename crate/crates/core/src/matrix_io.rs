//! `MEPM` matrix dumps and CSV export for masks, spectra, gradients and
//! embeddings.
//!
//! Layout (little-endian): the 4-byte magic `MEPM`, `u32` rows, `u32` cols,
//! then rows × cols `f32` values in row-major order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{MepError, Result};

pub const MAGIC: &[u8; 4] = b"MEPM";
const HEADER_LEN: usize = 12;

pub fn encode_matrix(matrix: ArrayView2<f64>) -> Result<Vec<u8>> {
    let (rows, cols) = matrix.dim();
    let r = u32::try_from(rows).map_err(|_| MepError::MalformedMatrix("too many rows".into()))?;
    let c = u32::try_from(cols).map_err(|_| MepError::MalformedMatrix("too many cols".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&r.to_le_bytes());
    out.extend_from_slice(&c.to_le_bytes());
    for v in matrix.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Array2<f32>> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(MepError::MalformedMatrix("missing MEPM header".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| MepError::MalformedMatrix("dimensions overflow".into()))?;
    if body.len() != expected {
        return Err(MepError::MalformedMatrix(format!(
            "{rows}x{cols} needs {expected} payload bytes, found {}",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Array2::from_shape_vec((rows, cols), values).map_err(|e| MepError::MalformedMatrix(e.to_string()))
}

pub fn write_matrix(matrix: ArrayView2<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_matrix(matrix)?).map_err(|e| MepError::io(path, e))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Array2<f32>> {
    let path = path.as_ref();
    decode_matrix(&fs::read(path).map_err(|e| MepError::io(path, e))?)
}

/// Comma-separated rows, full `f64` precision, no header.
pub fn matrix_to_csv(matrix: ArrayView2<f64>) -> String {
    let mut out = String::new();
    for row in matrix.rows() {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(matrix: ArrayView2<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, matrix_to_csv(matrix)).map_err(|e| MepError::io(path, e))
}
