//! ICLE binary embedding files.
//!
//! Layout (little-endian, no padding):
//!
//! ```text
//! magic   "ICLE"      4 bytes
//! version u32 = 1
//! rows    u32
//! dim     u32
//! payload rows*dim f32, row-major
//! ```

use std::fs;
use std::path::Path;

use super::{CorpusError, EmbeddingMatrix};

pub const MAGIC: &[u8; 4] = b"ICLE";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn encode(matrix: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + matrix.as_slice().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(matrix.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(matrix.dim() as u32).to_le_bytes());
    for x in matrix.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

pub fn decode(bytes: &[u8]) -> Result<EmbeddingMatrix, CorpusError> {
    if bytes.len() < HEADER_LEN {
        return Err(CorpusError::Format(format!("file too short for header: {} bytes", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(CorpusError::Format("bad magic, expected \"ICLE\"".into()));
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(CorpusError::Format(format!("unsupported version {version}")));
    }
    let rows = read_u32(bytes, 8) as usize;
    let dim = read_u32(bytes, 12) as usize;
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| CorpusError::Format("rows*dim overflows".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(CorpusError::Format(format!(
            "payload is {} bytes, header declares {rows}x{dim} ({expected} bytes)",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    EmbeddingMatrix::from_raw(rows, dim, data)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix, CorpusError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| CorpusError::io(path, e))?;
    decode(&bytes)
}

pub fn save_embeddings(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    fs::write(path, encode(matrix)).map_err(|e| CorpusError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_file(rows: u32, dim: u32, values: &[f32]) -> Vec<u8> {
        let mut b = b"ICLE".to_vec();
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&rows.to_le_bytes());
        b.extend_from_slice(&dim.to_le_bytes());
        for v in values {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn rows_are_normalized_on_load() {
        let m = decode(&raw_file(2, 3, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0])).unwrap();
        assert_eq!(m.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(m.row(1), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn truncated_payload_is_a_format_error() {
        let mut b = raw_file(2, 3, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        b.truncate(b.len() - 5);
        assert!(matches!(decode(&b), Err(CorpusError::Format(_))));
    }

    #[test]
    fn bad_magic_and_version() {
        let mut b = raw_file(1, 2, &[1.0, 0.0]);
        b[0] = b'X';
        assert!(matches!(decode(&b), Err(CorpusError::Format(_))));
        let mut b = raw_file(1, 2, &[1.0, 0.0]);
        b[4] = 2;
        assert!(matches!(decode(&b), Err(CorpusError::Format(_))));
    }

    #[test]
    fn zero_row_names_the_row() {
        let err = decode(&raw_file(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap_err();
        assert!(matches!(err, CorpusError::ZeroRow { row: 1 }));
    }

    #[test]
    fn header_is_exactly_sixteen_bytes() {
        let m = EmbeddingMatrix::from_rows(&[vec![0.6, 0.8]]).unwrap();
        let bytes = encode(&m);
        assert_eq!(bytes.len(), 16 + 8);
        assert_eq!(&bytes[..4], b"ICLE");
    }
}
