//! Binary interchange formats.
//!
//! Embedding files (`.gsec`):
//!
//! | offset | size  | field                                   |
//! |--------|-------|-----------------------------------------|
//! | 0      | 4     | ASCII magic `GSEC`                      |
//! | 4      | 4     | format version, u32 LE (currently 1)    |
//! | 8      | 8     | row count `n`, u64 LE                   |
//! | 16     | 8     | column count `d`, u64 LE                |
//! | 24     | 4·n·d | f32 LE values, row-major                |
//!
//! Label files (`.gsecl`) use the same header with `d = 1` followed by `n`
//! u32 LE class ids.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{GsecError, Result};
use crate::numerics::Matrix;

pub const MAGIC: [u8; 4] = *b"GSEC";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

struct Header {
    rows: u64,
    cols: u64,
}

fn encode_header(rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    out
}

fn decode_header(path: &Path, bytes: &[u8]) -> Result<Header> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(format_err(path, "bad magic"));
        }
        return Err(GsecError::Corruption {
            path: path.to_path_buf(),
            reason: format!("header truncated at {} bytes", bytes.len()),
        });
    }
    if bytes[..4] != MAGIC {
        return Err(format_err(path, "bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(format_err(path, &format!("unsupported version {version}")));
    }
    Ok(Header {
        rows: u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")),
        cols: u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")),
    })
}

fn format_err(path: &Path, reason: &str) -> GsecError {
    GsecError::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn payload_len(path: &Path, header: &Header, width: u64, actual: usize) -> Result<usize> {
    let expected = header
        .rows
        .checked_mul(header.cols)
        .and_then(|v| v.checked_mul(width))
        .ok_or_else(|| format_err(path, "header dimensions overflow"))?;
    if expected != actual as u64 {
        return Err(GsecError::Corruption {
            path: path.to_path_buf(),
            reason: format!("payload has {actual} bytes, header implies {expected}"),
        });
    }
    Ok(expected as usize)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| GsecError::io(path, e))?;
    file.write_all(bytes).map_err(|e| GsecError::io(path, e))?;
    file.sync_all().map_err(|e| GsecError::io(path, e))
}

/// Serializes an embedding matrix; values are stored as f32.
pub fn encode_embeddings(matrix: &Matrix) -> Result<Vec<u8>> {
    if !matrix.is_finite() {
        return Err(GsecError::InvalidInput("embedding matrix has non-finite entries".into()));
    }
    let mut out = encode_header(matrix.rows(), matrix.cols());
    out.reserve(matrix.as_slice().len() * 4);
    for &v in matrix.as_slice() {
        let narrowed = v as f32;
        if !narrowed.is_finite() {
            return Err(GsecError::InvalidInput(format!("{v} overflows f32")));
        }
        out.extend_from_slice(&narrowed.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_embeddings(path: &Path, bytes: &[u8]) -> Result<Matrix> {
    let header = decode_header(path, bytes)?;
    payload_len(path, &header, 4, bytes.len() - HEADER_LEN)?;
    let data: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Matrix::from_vec(header.rows as usize, header.cols as usize, data).map_err(|e| {
        GsecError::Corruption {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
    })
}

pub fn write_embeddings(matrix: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_embeddings(matrix)?)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| GsecError::io(path, e))?;
    decode_embeddings(path, &bytes)
}

pub fn encode_labels(labels: &[u32]) -> Vec<u8> {
    let mut out = encode_header(labels.len(), 1);
    out.reserve(labels.len() * 4);
    for &l in labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

pub fn decode_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u32>> {
    let header = decode_header(path, bytes)?;
    if header.cols != 1 {
        return Err(format_err(
            path,
            &format!("label file must have width 1, found {}", header.cols),
        ));
    }
    payload_len(path, &header, 4, bytes.len() - HEADER_LEN)?;
    Ok(bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

pub fn write_labels(labels: &[u32], path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_labels(labels))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<u32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| GsecError::io(path, e))?;
    decode_labels(path, &bytes)
}

/// Reads a comma-separated matrix, one sample per row. A first line that does
/// not parse as numbers is treated as a header.
pub fn read_embeddings_csv(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format_err(path, &e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format_err(path, &e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if line == 0 => continue,
            Err(e) => return Err(format_err(path, &format!("line {}: {e}", line + 1))),
        }
    }
    Matrix::from_rows(&rows).map_err(|e| format_err(path, &e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_3x4() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gsec");
        let m = Matrix::from_vec(3, 4, (0..12).map(|i| i as f64 * 0.5 - 2.0).collect()).unwrap();
        write_embeddings(&m, &path).unwrap();
        assert_eq!(read_embeddings(&path).unwrap(), m);
    }

    #[test]
    fn empty_matrix_round_trip() {
        let m = Matrix::zeros(0, 7);
        let bytes = encode_embeddings(&m).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        let back = decode_embeddings(Path::new("mem"), &bytes).unwrap();
        assert_eq!((back.rows(), back.cols()), (0, 7));
    }

    #[test]
    fn header_layout_is_fixed() {
        let bytes = encode_embeddings(&Matrix::from_vec(1, 2, vec![1.0, -2.0]).unwrap()).unwrap();
        assert_eq!(&bytes[..4], b"GSEC");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..16], &[1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&bytes[16..24], &[2, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&bytes[24..28], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[28..32], &(-2.0f32).to_le_bytes());
    }

    #[test]
    fn wrong_magic_and_version() {
        let mut bytes = encode_embeddings(&Matrix::zeros(1, 1)).unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            decode_embeddings(Path::new("x"), &bytes),
            Err(GsecError::Format { .. })
        ));
        let mut bytes = encode_embeddings(&Matrix::zeros(1, 1)).unwrap();
        bytes[4] = 9;
        assert!(matches!(
            decode_embeddings(Path::new("x"), &bytes),
            Err(GsecError::Format { .. })
        ));
    }

    #[test]
    fn truncated_payload_is_corruption() {
        let bytes = encode_embeddings(&Matrix::zeros(2, 3)).unwrap();
        assert!(matches!(
            decode_embeddings(Path::new("x"), &bytes[..bytes.len() - 1]),
            Err(GsecError::Corruption { .. })
        ));
        assert!(matches!(
            decode_embeddings(Path::new("x"), &bytes[..10]),
            Err(GsecError::Corruption { .. })
        ));
    }

    #[test]
    fn labels_round_trip_and_width_check() {
        let labels = vec![0, 3, 1, 4_000_000_000];
        let bytes = encode_labels(&labels);
        assert_eq!(decode_labels(Path::new("l"), &bytes).unwrap(), labels);
        let emb = encode_embeddings(&Matrix::zeros(2, 2)).unwrap();
        assert!(matches!(
            decode_labels(Path::new("l"), &emb),
            Err(GsecError::Format { .. })
        ));
    }

    #[test]
    fn csv_with_and_without_header() {
        let dir = tempfile::tempdir().unwrap();
        let with = dir.path().join("a.csv");
        fs::write(&with, "x,y\n1,2\n3.5,-4\n").unwrap();
        let m = read_embeddings_csv(&with).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 2.0, 3.5, -4.0]);
        let without = dir.path().join("b.csv");
        fs::write(&without, "1,2\n3.5,-4\n").unwrap();
        assert_eq!(read_embeddings_csv(&without).unwrap(), m);
        let ragged = dir.path().join("c.csv");
        fs::write(&ragged, "1,2\n3\n").unwrap();
        assert!(read_embeddings_csv(&ragged).is_err());
    }
}
