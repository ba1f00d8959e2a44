//! Embedding file formats.
//!
//! `EMB1` binary layout, all little-endian:
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `b"EMB1"`               |
//! | 4      | 2    | version, `u16` = 1            |
//! | 6      | 2    | dtype tag, `u16` = 1 (`f32`)  |
//! | 8      | 8    | rows, `u64`                   |
//! | 16     | 8    | cols, `u64`                   |
//! | 24     | 4·rows·cols | row-major `f32` payload |
//!
//! Files ending in `.csv` are read as header-free text, one token per line.

use std::path::Path;

use thiserror::Error;

use crate::embedding::EmbeddingMatrix;

pub const MAGIC: [u8; 4] = *b"EMB1";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u16 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("file is {len} bytes, shorter than the {HEADER_LEN}-byte header")]
    TruncatedHeader { len: usize },
    #[error("bad magic {found:?} at byte offset 0, expected \"EMB1\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported version {found} at byte offset 4")]
    BadVersion { found: u16 },
    #[error("unsupported dtype tag {found} at byte offset 6")]
    BadDtype { found: u16 },
    #[error("invalid shape {rows}x{cols}")]
    BadShape { rows: u64, cols: u64 },
    #[error("payload truncated: expected {expected} bytes after the header, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("{extra} unexpected trailing bytes after payload ending at byte offset {end}")]
    TrailingBytes { end: usize, extra: usize },
    #[error("non-finite value at row {row}, column {col} (byte offset {offset})")]
    NonFiniteValue { row: usize, col: usize, offset: usize },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("line {line}: expected {expected} values, found {found}")]
    RaggedRow { line: u64, expected: usize, found: usize },
    #[error("csv file has no rows")]
    EmptyCsv,
}

/// Serialises `matrix` into the `EMB1` layout.
pub fn encode_emb(matrix: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * matrix.data().len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&DTYPE_F32.to_le_bytes());
    out.extend_from_slice(&(matrix.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(matrix.cols() as u64).to_le_bytes());
    for v in matrix.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses and validates an `EMB1` buffer.
pub fn decode_emb(bytes: &[u8]) -> Result<EmbeddingMatrix, FormatError> {
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::TruncatedHeader { len: bytes.len() });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic { found: magic });
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(FormatError::BadVersion { found: version });
    }
    let dtype = u16::from_le_bytes(bytes[6..8].try_into().unwrap());
    if dtype != DTYPE_F32 {
        return Err(FormatError::BadDtype { found: dtype });
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let bad_shape = FormatError::BadShape { rows, cols };
    if cols == 0 {
        return Err(bad_shape);
    }
    let (r, c) = match (usize::try_from(rows), usize::try_from(cols)) {
        (Ok(r), Ok(c)) => (r, c),
        _ => return Err(bad_shape),
    };
    let expected = r
        .checked_mul(c)
        .and_then(|count| count.checked_mul(4))
        .ok_or(bad_shape)?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(FormatError::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(FormatError::TrailingBytes {
            end: HEADER_LEN + expected,
            extra: payload.len() - expected,
        });
    }
    let mut data = Vec::with_capacity(r * c);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(FormatError::NonFiniteValue {
                row: i / c,
                col: i % c,
                offset: HEADER_LEN + 4 * i,
            });
        }
        data.push(v);
    }
    Ok(EmbeddingMatrix::new(r, c, data).expect("shape and values validated above"))
}

/// Parses header-free CSV text, one token per line.
pub fn parse_csv(text: &str) -> Result<EmbeddingMatrix, FormatError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut cols = None;
    let mut data = Vec::new();
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| FormatError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let expected = *cols.get_or_insert(record.len());
        if record.len() != expected {
            return Err(FormatError::RaggedRow {
                line,
                expected,
                found: record.len(),
            });
        }
        for (col, field) in record.iter().enumerate() {
            let v: f32 = field.parse().map_err(|_| FormatError::Csv {
                line,
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(FormatError::NonFiniteValue { row: rows, col, offset: 0 });
            }
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or(FormatError::EmptyCsv)?;
    Ok(EmbeddingMatrix::new(rows, cols, data).expect("validated while parsing"))
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads an `EMB1` file, or CSV when the extension is `.csv`.
pub fn read_emb(path: impl AsRef<Path>) -> Result<EmbeddingMatrix, FormatError> {
    let path = path.as_ref();
    if is_csv(path) {
        parse_csv(&std::fs::read_to_string(path)?)
    } else {
        decode_emb(&std::fs::read(path)?)
    }
}

pub fn write_emb(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<(), FormatError> {
    std::fs::write(path, encode_emb(matrix))?;
    Ok(())
}
