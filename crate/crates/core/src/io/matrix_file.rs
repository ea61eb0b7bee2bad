//! Binary layout, all integers little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 0..5 | magic `RKMP1` |
//! | 5 | element kind, `1` = IEEE-754 binary64 little-endian |
//! | 6..14 | rows, u64 |
//! | 14..22 | cols, u64 |
//! | 22.. | `rows * cols` elements, column-major |
//!
//! CSV files hold one matrix row per line, no header, `.` decimals and LF
//! line endings.

use std::fs;
use std::path::Path;

use super::IoError;
use crate::linalg::DenseMatrix;

pub const BINARY_MAGIC: &[u8; 5] = b"RKMP1";
pub const KIND_F64_LE: u8 = 1;
const HEADER_LEN: usize = 22;

pub fn encode_binary(m: &DenseMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.as_slice().len());
    out.extend_from_slice(BINARY_MAGIC);
    out.push(KIND_F64_LE);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for x in m.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<DenseMatrix, IoError> {
    let parse = |offset: usize, reason: String| IoError::Parse {
        offset: offset as u64,
        reason,
    };
    if bytes.len() < HEADER_LEN {
        return Err(parse(bytes.len(), format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len())));
    }
    if let Some(i) = (0..5).find(|&i| bytes[i] != BINARY_MAGIC[i]) {
        return Err(parse(i, "bad magic, expected RKMP1".into()));
    }
    if bytes[5] != KIND_F64_LE {
        return Err(parse(5, format!("unknown element kind {}", bytes[5])));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let (rows, cols) = (word(6), word(14));
    let count = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .filter(|&b| b <= (bytes.len() - HEADER_LEN) as u64)
        .ok_or_else(|| {
            parse(
                bytes.len(),
                format!("payload truncated for a {rows}x{cols} matrix"),
            )
        })?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() as u64 != count {
        return Err(parse(HEADER_LEN + count as usize, "trailing bytes after payload".into()));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(DenseMatrix::from_col_major(rows as usize, cols as usize, data).expect("length checked"))
}

pub fn write_binary(path: &Path, m: &DenseMatrix) -> Result<(), IoError> {
    fs::write(path, encode_binary(m)).map_err(IoError::file(path))
}

pub fn read_binary(path: &Path) -> Result<DenseMatrix, IoError> {
    let bytes = fs::read(path).map_err(IoError::file(path))?;
    decode_binary(&bytes).map_err(|e| IoError::InFile {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, IoError> {
    let file = fs::File::create(path).map_err(IoError::file(path))?;
    Ok(csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

pub fn write_csv(path: &Path, m: &DenseMatrix) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    for i in 0..m.rows() {
        w.write_record(m.row(i).iter().map(|x| format!("{x:?}")))?;
    }
    w.flush().map_err(IoError::file(path))
}

type Records = (Option<Vec<String>>, Vec<Vec<f64>>);

fn parse_records(path: &Path, has_headers: bool) -> Result<Records, IoError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .from_path(path)
        .map_err(|e| in_file(path, e.into()))?;
    let header = if has_headers {
        Some(r.headers().map_err(|e| in_file(path, e.into()))?.iter().map(str::to_string).collect())
    } else {
        None
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| in_file(path, e.into()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| IoError::Csv {
                    line,
                    reason: format!("`{f}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| in_file(path, e))?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn in_file(path: &Path, e: IoError) -> IoError {
    IoError::InFile {
        path: path.to_path_buf(),
        source: Box::new(e),
    }
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> DenseMatrix {
    let cols = rows.first().map_or(0, Vec::len);
    DenseMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

pub fn read_csv(path: &Path) -> Result<DenseMatrix, IoError> {
    let (_, rows) = parse_records(path, false)?;
    Ok(rows_to_matrix(&rows))
}

/// Asset returns with a header row of tickers: `T` rows by `A` columns.
pub fn read_returns_csv(path: &Path) -> Result<(Vec<String>, DenseMatrix), IoError> {
    let (header, rows) = parse_records(path, true)?;
    let tickers = header.unwrap_or_default();
    if tickers.is_empty() {
        return Err(in_file(
            path,
            IoError::Csv {
                line: 1,
                reason: "missing ticker header".into(),
            },
        ));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != tickers.len()) {
        return Err(in_file(
            path,
            IoError::Csv {
                line: i as u64 + 2,
                reason: format!("{} values for {} tickers", r.len(), tickers.len()),
            },
        ));
    }
    Ok((tickers, rows_to_matrix(&rows)))
}

/// Writes `.csv` paths as CSV and anything else in the binary format.
pub fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<(), IoError> {
    if path.extension().is_some_and(|e| e == "csv") {
        write_csv(path, m)
    } else {
        write_binary(path, m)
    }
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix, IoError> {
    if path.extension().is_some_and(|e| e == "csv") {
        read_csv(path)
    } else {
        read_binary(path)
    }
}

/// Writes a table with a header row.
pub fn write_table<S: AsRef<str>>(path: &Path, header: &[&str], rows: &[Vec<S>]) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|s| s.as_ref()))?;
    }
    w.flush().map_err(IoError::file(path))
}
