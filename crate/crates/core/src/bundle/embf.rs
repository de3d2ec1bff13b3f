//! EMBF: a minimal little-endian container for one dense matrix.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "EMBF"
//!      4     2  version (u16) = 1
//!      6     1  dtype code (1 = f32, 2 = f64)
//!      7     1  reserved = 0
//!      8     8  rows (u64)
//!     16     8  cols (u64)
//!     24     8  reserved = 0
//!     32     1  normalized flag (0/1)
//!     33     -  rows * cols values, row-major
//! ```

use std::fs;
use std::path::Path;

use super::{Dtype, EmbeddingMatrix};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"EMBF";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 33;

pub fn encode_matrix(matrix: &EmbeddingMatrix) -> Result<Vec<u8>> {
    matrix.validate()?;
    let dtype = matrix.dtype();
    let mut out = Vec::with_capacity(HEADER_LEN + matrix.data().len() * dtype.size());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(dtype.code());
    out.push(0);
    out.extend_from_slice(&(matrix.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(matrix.cols() as u64).to_le_bytes());
    out.extend_from_slice(&[0u8; 8]);
    out.push(u8::from(matrix.is_normalized()));
    match dtype {
        Dtype::F32 => {
            for &v in matrix.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in matrix.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < MAGIC.len() {
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    if bytes[..4] != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&bytes[..4]);
        return Err(Error::BadMagic { found });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }

    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dtype = Dtype::from_code(bytes[6]).ok_or(Error::UnsupportedDtype(bytes[6]))?;
    if bytes[7] != 0 || bytes[24..32].iter().any(|&b| b != 0) {
        return Err(Error::CorruptHeader("reserved bytes must be zero".into()));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().expect("8-byte slice"));
    let cols = u64::from_le_bytes(bytes[16..24].try_into().expect("8-byte slice"));
    let normalized = match bytes[32] {
        0 => false,
        1 => true,
        other => {
            return Err(Error::CorruptHeader(format!(
                "normalized flag must be 0 or 1, got {other}"
            )))
        }
    };
    if rows == 0 || cols == 0 {
        return Err(Error::Shape(format!(
            "matrix must be at least 1x1, got {rows}x{cols}"
        )));
    }

    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(dtype.size() as u64))
        .ok_or_else(|| Error::CorruptHeader(format!("{rows}x{cols} overflows")))?;
    let actual = (bytes.len() - HEADER_LEN) as u64;
    if actual < expected {
        return Err(Error::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(Error::TrailingBytes {
            extra: actual - expected,
        });
    }

    let payload = &bytes[HEADER_LEN..];
    let (rows, cols) = (rows as usize, cols as usize);
    let matrix = match dtype {
        Dtype::F32 => {
            let data: Vec<f32> = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
                .collect();
            EmbeddingMatrix::from_f32(rows, cols, data)?
        }
        Dtype::F64 => {
            let data: Vec<f64> = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            EmbeddingMatrix::from_f64(rows, cols, data)?
        }
    };
    matrix.with_normalized_flag(normalized)
}

/// Writes `matrix` to `path`. Non-finite values are refused before any
/// byte is written.
pub fn write_matrix(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_matrix(matrix)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes)
}
