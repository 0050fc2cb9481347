//! Dense row-major feature matrices and their on-disk interchange formats.
//!
//! Two encodings are supported: a delimited-text rendering with a header row
//! (for inspection) and a compact little-endian binary format (`QCFM`) used
//! between pipeline stages. The binary format is:
//!
//! ```text
//! magic    b"QCFM"
//! version  u32 (currently 1)
//! rows     u64
//! cols     u64
//! names    cols × (u32 byte length, UTF-8 bytes)
//! values   rows × cols × f64, row-major
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAGIC: &[u8; 4] = b"QCFM";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("malformed matrix file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-per-transaction numeric features with named columns.
///
/// All values are finite; construction rejects NaN and infinities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    column_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        column_names: Vec<String>,
    ) -> Result<Self, MatrixError> {
        if values.len() != rows * cols {
            return Err(MatrixError::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        if column_names.len() != cols {
            return Err(MatrixError::Shape(format!(
                "{} column names for {cols} columns",
                column_names.len()
            )));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(MatrixError::NonFinite {
                row: idx / cols.max(1),
                col: idx % cols.max(1),
            });
        }
        Ok(Self {
            rows,
            cols,
            values,
            column_names,
        })
    }

    /// Builds a matrix from row vectors. An empty `rows` with names yields a 0×cols matrix.
    pub fn from_rows(rows: &[Vec<f64>], column_names: Vec<String>) -> Result<Self, MatrixError> {
        let cols = column_names.len();
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(MatrixError::Shape(format!(
                    "row {i} has {} values, expected {cols}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, values, column_names)
    }

    /// A matrix with `rows` rows and no columns.
    pub fn empty_columns(rows: usize) -> Self {
        Self {
            rows,
            cols: 0,
            values: Vec::new(),
            column_names: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    pub fn row_vecs(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    /// Returns a copy with column names prefixed by `prefix`.
    pub fn with_prefix(&self, prefix: &str) -> Self {
        let mut out = self.clone();
        for name in &mut out.column_names {
            *name = format!("{prefix}{name}");
        }
        out
    }

    /// Per-column z-score standardization. Zero-variance columns become all zeros.
    pub fn standardized(&self) -> Self {
        let mut out = self.clone();
        if self.rows == 0 {
            return out;
        }
        let n = self.rows as f64;
        for c in 0..self.cols {
            let col = self.column(c);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            for r in 0..self.rows {
                out.values[r * self.cols + c] = if sd > 0.0 {
                    (col[r] - mean) / sd
                } else {
                    0.0
                };
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W, delimiter: u8) -> Result<(), MatrixError> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(writer);
        w.write_record(&self.column_names)?;
        for r in 0..self.rows {
            w.write_record(self.row(r).iter().map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, delimiter: u8) -> Result<Self, MatrixError> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    s.trim().parse::<f64>().map_err(|_| {
                        MatrixError::Format(format!("row {i}, column {j}: cannot parse {s:?}"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows, names)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(24 + self.values.len() * 8);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.rows as u64).to_le_bytes());
        buf.extend_from_slice(&(self.cols as u64).to_le_bytes());
        for name in &self.column_names {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
        }
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MatrixError> {
        let mut cur = ByteCursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(MatrixError::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(cur.array()?);
        if version != FORMAT_VERSION {
            return Err(MatrixError::Format(format!("unsupported version {version}")));
        }
        let rows = u64::from_le_bytes(cur.array()?) as usize;
        let cols = u64::from_le_bytes(cur.array()?) as usize;
        let mut names = Vec::with_capacity(cols);
        for _ in 0..cols {
            let len = u32::from_le_bytes(cur.array()?) as usize;
            let raw = cur.take(len)?;
            let name = std::str::from_utf8(raw)
                .map_err(|e| MatrixError::Format(format!("column name: {e}")))?;
            names.push(name.to_owned());
        }
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| MatrixError::Format("dimension overflow".into()))?;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(f64::from_le_bytes(cur.array()?));
        }
        if cur.pos != bytes.len() {
            return Err(MatrixError::Format("trailing bytes".into()));
        }
        Self::new(rows, cols, values, names)
    }

    pub fn write_binary(&self, path: &Path) -> Result<(), MatrixError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self, MatrixError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], MatrixError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| MatrixError::Format("unexpected end of data".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], MatrixError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }
}

/// Column-wise concatenation, classical columns first, names prefixed by origin
/// (`classical:` / `quantum:`).
pub fn assemble_hybrid(
    classical: &FeatureMatrix,
    quantum: &FeatureMatrix,
) -> Result<FeatureMatrix, MatrixError> {
    if classical.rows != quantum.rows {
        return Err(MatrixError::Shape(format!(
            "row-count mismatch: {} classical rows vs {} quantum rows",
            classical.rows, quantum.rows
        )));
    }
    let cols = classical.cols + quantum.cols;
    let mut values = Vec::with_capacity(classical.rows * cols);
    for r in 0..classical.rows {
        values.extend_from_slice(classical.row(r));
        values.extend_from_slice(quantum.row(r));
    }
    let names = classical
        .column_names
        .iter()
        .map(|n| format!("classical:{n}"))
        .chain(quantum.column_names.iter().map(|n| format!("quantum:{n}")))
        .collect();
    FeatureMatrix::new(classical.rows, cols, values, names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn rejects_non_finite() {
        let err = FeatureMatrix::new(1, 2, vec![1.0, f64::NAN], names("c", 2)).unwrap_err();
        assert!(matches!(err, MatrixError::NonFinite { row: 0, col: 1 }));
    }

    #[test]
    fn hybrid_concatenates_columns() {
        let c = FeatureMatrix::new(4, 3, (0..12).map(f64::from).collect(), names("x", 3)).unwrap();
        let q = FeatureMatrix::new(4, 2, (0..8).map(f64::from).collect(), names("y", 2)).unwrap();
        let h = assemble_hybrid(&c, &q).unwrap();
        assert_eq!((h.rows(), h.cols()), (4, 5));
        assert_eq!(h.row(1), &[3.0, 4.0, 5.0, 2.0, 3.0]);
    }

    #[test]
    fn hybrid_with_zero_quantum_columns_keeps_classical_values() {
        let c = FeatureMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0], names("x", 2)).unwrap();
        let h = assemble_hybrid(&c, &FeatureMatrix::empty_columns(2)).unwrap();
        assert_eq!(h.values(), c.values());
        assert_eq!(h.cols(), c.cols());
    }

    #[test]
    fn hybrid_names_stay_unique_on_collision() {
        let c = FeatureMatrix::new(1, 1, vec![1.0], vec!["f".into()]).unwrap();
        let q = FeatureMatrix::new(1, 1, vec![2.0], vec!["f".into()]).unwrap();
        let h = assemble_hybrid(&c, &q).unwrap();
        assert_eq!(h.column_names(), &["classical:f", "quantum:f"]);
    }

    #[test]
    fn hybrid_rejects_row_mismatch() {
        let c = FeatureMatrix::empty_columns(3);
        let q = FeatureMatrix::empty_columns(2);
        assert!(matches!(assemble_hybrid(&c, &q), Err(MatrixError::Shape(_))));
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let m = FeatureMatrix::new(2, 2, vec![0.1, -3.5e-12, 1e300, 7.0], names("c", 2)).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf, b',').unwrap();
        assert_eq!(FeatureMatrix::read_csv(&buf[..], b',').unwrap(), m);
    }

    #[test]
    fn binary_rejects_truncation() {
        let m = FeatureMatrix::new(1, 1, vec![1.0], names("c", 1)).unwrap();
        let bytes = m.to_bytes();
        assert!(FeatureMatrix::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn binary_roundtrip(rows in 0usize..6, cols in 0usize..5, seed in any::<u64>()) {
            let values: Vec<f64> = (0..rows * cols)
                .map(|i| ((seed.wrapping_mul(i as u64 + 1)) as f64).sin() * 1e3)
                .collect();
            let m = FeatureMatrix::new(rows, cols, values, names("col_", cols)).unwrap();
            prop_assert_eq!(FeatureMatrix::from_bytes(&m.to_bytes()).unwrap(), m);
        }
    }
}
