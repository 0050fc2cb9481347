//! Transaction ingestion and classical feature engineering.
//!
//! Column treatment per attribute:
//!
//! | attribute          | treatment                         |
//! |--------------------|-----------------------------------|
//! | `block_number`     | numeric, unscaled                 |
//! | `transaction_hash` | dropped                           |
//! | `timestamp`        | cyclical `(sin, cos)` pair        |
//! | `from_address`     | label encoded                     |
//! | `to_address`       | label encoded                     |
//! | `token_name`       | label encoded                     |
//! | `token_symbol`     | label encoded                     |
//! | `token_value`      | robust scaled (median / IQR)      |
//! | `gas_price`        | robust scaled (median / IQR)      |
//!
//! The assembled matrix always uses the column order of [`FEATURE_COLUMNS`]
//! (minus `block_number` when [`PreprocessConfig::drop_block_number`] is set).

mod synth;

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::TAU;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{FeatureMatrix, MatrixError};

pub use synth::{planted_groups, synth_transactions, SynthProfile, ValueDistribution};

/// The nine attribute names a transaction file must carry.
pub const REQUIRED_COLUMNS: [&str; 9] = [
    "block_number",
    "transaction_hash",
    "timestamp",
    "from_address",
    "to_address",
    "token_name",
    "token_symbol",
    "token_value",
    "gas_price",
];

/// Output columns of [`assemble_features`], in order.
pub const FEATURE_COLUMNS: [&str; 9] = [
    "block_number",
    "timestamp_sin",
    "timestamp_cos",
    "from_address",
    "to_address",
    "token_name",
    "token_symbol",
    "token_value",
    "gas_price",
];

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("empty input: no header or no data rows")]
    EmptyInput,
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse {value:?}")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: {reason}")]
    Invalid {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("robust scaling needs at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("cyclical period must be positive, got {0}")]
    NonPositivePeriod(f64),
    #[error("transaction table is empty")]
    EmptyTable,
    #[error("synthetic generator needs n >= 1")]
    ZeroRecords,
    #[error("unknown synthetic profile `{0}`")]
    UnknownProfile(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub block_number: u64,
    pub transaction_hash: String,
    pub timestamp: i64,
    pub from_address: String,
    pub to_address: String,
    pub token_name: String,
    pub token_symbol: String,
    pub token_value: f64,
    pub gas_price: f64,
}

/// Ordered transaction records. Row `i` of every derived matrix is record `i`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransactionTable {
    pub records: Vec<TransactionRecord>,
}

impl TransactionTable {
    pub fn new(records: Vec<TransactionRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Writes the table with the canonical header order.
    pub fn write_csv<W: Write>(&self, writer: W, delimiter: u8) -> Result<(), IngestError> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(writer);
        w.write_record(REQUIRED_COLUMNS)?;
        for r in &self.records {
            w.write_record([
                r.block_number.to_string(),
                r.transaction_hash.clone(),
                r.timestamp.to_string(),
                r.from_address.clone(),
                r.to_address.clone(),
                r.token_name.clone(),
                r.token_symbol.clone(),
                format!("{:?}", r.token_value),
                format!("{:?}", r.gas_price),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Delimited-text descriptor for [`parse_transactions`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextFormat {
    pub delimiter: u8,
}

impl Default for TextFormat {
    fn default() -> Self {
        Self { delimiter: b',' }
    }
}

/// Parses delimited text with a header row naming all nine attributes, in any order.
///
/// Row indices in errors count data rows from 0.
pub fn parse_transactions<R: Read>(
    source: R,
    format: TextFormat,
) -> Result<TransactionTable, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(true)
        .from_reader(source);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(IngestError::EmptyInput);
    }
    let index: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim(), i))
        .collect();
    let mut cols = [0usize; 9];
    for (slot, name) in cols.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = *index
            .get(name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_owned()))?;
    }

    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| -> &str { rec.get(cols[c]).unwrap_or("").trim() };
        let record = TransactionRecord {
            block_number: parse_field(row, REQUIRED_COLUMNS[0], field(0))?,
            transaction_hash: field(1).to_owned(),
            timestamp: parse_field(row, REQUIRED_COLUMNS[2], field(2))?,
            from_address: field(3).to_owned(),
            to_address: field(4).to_owned(),
            token_name: field(5).to_owned(),
            token_symbol: field(6).to_owned(),
            token_value: parse_field(row, REQUIRED_COLUMNS[7], field(7))?,
            gas_price: parse_field(row, REQUIRED_COLUMNS[8], field(8))?,
        };
        validate_record(row, &record)?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    Ok(TransactionTable { records })
}

fn parse_field<T: std::str::FromStr>(row: usize, column: &str, raw: &str) -> Result<T, IngestError> {
    raw.parse().map_err(|_| IngestError::Parse {
        row,
        column: column.to_owned(),
        value: raw.to_owned(),
    })
}

fn validate_record(row: usize, r: &TransactionRecord) -> Result<(), IngestError> {
    let invalid = |column: &str, reason: &str| IngestError::Invalid {
        row,
        column: column.to_owned(),
        reason: reason.to_owned(),
    };
    if r.transaction_hash.is_empty() {
        return Err(invalid("transaction_hash", "must be non-empty"));
    }
    if r.timestamp < 0 {
        return Err(invalid("timestamp", "must be non-negative"));
    }
    for (name, v) in [("token_value", r.token_value), ("gas_price", r.gas_price)] {
        if !v.is_finite() || v < 0.0 {
            return Err(invalid(name, "must be a finite non-negative number"));
        }
    }
    Ok(())
}

/// Label encoding with codes assigned in sorted lexicographic order of the distinct values.
pub fn label_encode<S: AsRef<str>>(values: &[S]) -> (Vec<usize>, BTreeMap<String, usize>) {
    let mut mapping: BTreeMap<String, usize> = values
        .iter()
        .map(|v| (v.as_ref().to_owned(), 0))
        .collect();
    for (code, slot) in mapping.values_mut().enumerate() {
        *slot = code;
    }
    let codes = values.iter().map(|v| mapping[v.as_ref()]).collect();
    (codes, mapping)
}

/// Quantile of sorted data using linear interpolation between order statistics.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `(x - median) / IQR`, with the divisor replaced by 1 when the IQR is zero.
pub fn robust_scale(values: &[f64]) -> Result<Vec<f64>, IngestError> {
    if values.len() < 2 {
        return Err(IngestError::TooFewValues(values.len()));
    }
    Ok(robust_scale_unchecked(values))
}

// A single value centers to zero.
fn robust_scale_unchecked(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = quantile_sorted(&sorted, 0.5);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let divisor = if iqr > 0.0 { iqr } else { 1.0 };
    values.iter().map(|v| (v - median) / divisor).collect()
}

/// Maps a timestamp to `(sin φ, cos φ)` with `φ = 2π·(t mod period)/period`.
pub fn cyclical_encode(timestamp: f64, period: f64) -> Result<(f64, f64), IngestError> {
    if !(period > 0.0) {
        return Err(IngestError::NonPositivePeriod(period));
    }
    let phase = TAU * timestamp.rem_euclid(period) / period;
    Ok(phase.sin_cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Cycle length for the timestamp encoding, in seconds.
    pub period_secs: f64,
    /// Omit the raw `block_number` column.
    pub drop_block_number: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            period_secs: SECONDS_PER_DAY,
            drop_block_number: false,
        }
    }
}

pub fn assemble_features(
    table: &TransactionTable,
    config: &PreprocessConfig,
) -> Result<FeatureMatrix, IngestError> {
    if table.is_empty() {
        return Err(IngestError::EmptyTable);
    }
    let recs = &table.records;
    let n = recs.len();
    let encode = |f: fn(&TransactionRecord) -> &str| -> Vec<f64> {
        let raw: Vec<&str> = recs.iter().map(f).collect();
        label_encode(&raw).0.into_iter().map(|c| c as f64).collect()
    };
    let from = encode(|r| &r.from_address);
    let to = encode(|r| &r.to_address);
    let name = encode(|r| &r.token_name);
    let symbol = encode(|r| &r.token_symbol);
    let value = robust_scale_unchecked(&recs.iter().map(|r| r.token_value).collect::<Vec<_>>());
    let gas = robust_scale_unchecked(&recs.iter().map(|r| r.gas_price).collect::<Vec<_>>());

    let skip = usize::from(config.drop_block_number);
    let names: Vec<String> = FEATURE_COLUMNS[skip..].iter().map(|s| s.to_string()).collect();
    let mut values = Vec::with_capacity(n * names.len());
    for (i, r) in recs.iter().enumerate() {
        let (sin, cos) = cyclical_encode(r.timestamp as f64, config.period_secs)?;
        if !config.drop_block_number {
            values.push(r.block_number as f64);
        }
        values.extend_from_slice(&[sin, cos, from[i], to[i], name[i], symbol[i], value[i], gas[i]]);
    }
    Ok(FeatureMatrix::new(n, names.len(), values, names)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const HEADER: &str = "block_number,transaction_hash,timestamp,from_address,to_address,token_name,token_symbol,token_value,gas_price";

    fn record(i: u64, from: &str, value: f64) -> TransactionRecord {
        TransactionRecord {
            block_number: 100 + i,
            transaction_hash: format!("0xhash{i}"),
            timestamp: (i as i64) * 3_600,
            from_address: from.to_owned(),
            to_address: format!("0xto{}", i % 2),
            token_name: "Moss Carbon Credit".into(),
            token_symbol: "MCO2".into(),
            token_value: value,
            gas_price: 1e9 * (i as f64 + 1.0),
        }
    }

    #[test]
    fn parses_single_row() {
        let text = format!("{HEADER}\n7,0xabc,1600000000,0xa,0xb,Moss,MCO2,12.5,20000000000\n");
        let t = parse_transactions(text.as_bytes(), TextFormat::default()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.records[0].block_number, 7);
        assert_eq!(t.records[0].token_value, 12.5);
    }

    #[test]
    fn parses_any_column_order_and_delimiter() {
        let text = "gas_price;token_value;token_symbol;token_name;to_address;from_address;timestamp;transaction_hash;block_number\n1;2;S;N;0xb;0xa;3;0xh;4\n";
        let t = parse_transactions(text.as_bytes(), TextFormat { delimiter: b';' }).unwrap();
        let r = &t.records[0];
        assert_eq!((r.block_number, r.timestamp, r.gas_price, r.token_value), (4, 3, 1.0, 2.0));
    }

    #[test]
    fn missing_column_is_named() {
        let text = "block_number,transaction_hash,timestamp,from_address,to_address,token_name,token_symbol,token_value\n1,h,1,a,b,n,s,1\n";
        let err = parse_transactions(text.as_bytes(), TextFormat::default()).unwrap_err();
        assert!(matches!(&err, IngestError::MissingColumn(c) if c == "gas_price"));
        assert!(err.to_string().contains("gas_price"));
    }

    #[test]
    fn unparseable_value_reports_row_and_column() {
        let text = format!("{HEADER}\n1,h1,1,a,b,n,s,1,1\n2,h2,1,a,b,n,s,abc,1\n");
        let err = parse_transactions(text.as_bytes(), TextFormat::default()).unwrap_err();
        match err {
            IngestError::Parse { row, column, value } => {
                assert_eq!((row, column.as_str(), value.as_str()), (1, "token_value", "abc"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(
            parse_transactions("".as_bytes(), TextFormat::default()),
            Err(IngestError::EmptyInput)
        ));
        assert!(matches!(
            parse_transactions(format!("{HEADER}\n").as_bytes(), TextFormat::default()),
            Err(IngestError::EmptyInput)
        ));
    }

    #[test]
    fn negative_value_and_empty_hash_are_rejected() {
        let neg = format!("{HEADER}\n1,h,1,a,b,n,s,-1,1\n");
        assert!(matches!(
            parse_transactions(neg.as_bytes(), TextFormat::default()),
            Err(IngestError::Invalid { .. })
        ));
        let nohash = format!("{HEADER}\n1,,1,a,b,n,s,1,1\n");
        assert!(matches!(
            parse_transactions(nohash.as_bytes(), TextFormat::default()),
            Err(IngestError::Invalid { .. })
        ));
    }

    #[test]
    fn label_encoding_uses_sorted_order() {
        let (codes, map) = label_encode(&["b", "a", "b"]);
        assert_eq!(codes, vec![1, 0, 1]);
        assert_eq!(map, BTreeMap::from([("a".to_owned(), 0), ("b".to_owned(), 1)]));
        assert_eq!(label_encode(&["x"]).0, vec![0]);
        assert_eq!(label_encode(&["c", "a", "b", "a"]).0, vec![2, 0, 1, 0]);
        assert_eq!(label_encode(&["", "z"]).0, vec![0, 1]);
    }

    #[test]
    fn robust_scale_examples() {
        let out = robust_scale(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(out[2], 0.0);
        assert_abs_diff_eq!(out[4], 48.5, epsilon = 1e-12);
        assert_eq!(robust_scale(&[5.0, 5.0, 5.0]).unwrap(), vec![0.0; 3]);
        assert!(matches!(robust_scale(&[1.0]), Err(IngestError::TooFewValues(1))));
    }

    #[test]
    fn quantiles_interpolate_between_order_statistics() {
        let s = [1.0, 2.0, 4.0, 8.0];
        // pos = 0.75 * 3 = 2.25 -> 4 + 0.25 * 4
        assert_abs_diff_eq!(quantile_sorted(&s, 0.75), 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(quantile_sorted(&s, 0.5), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn cyclical_examples() {
        let p = 86_400.0;
        let (s, c) = cyclical_encode(2.0 * p, p).unwrap();
        assert_abs_diff_eq!(s, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c, 1.0, epsilon = 1e-12);
        let (s, c) = cyclical_encode(p / 4.0, p).unwrap();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c, 0.0, epsilon = 1e-12);
        let (s, c) = cyclical_encode(p / 2.0, p).unwrap();
        assert_abs_diff_eq!(s, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c, -1.0, epsilon = 1e-12);
        assert!(cyclical_encode(1.0, 0.0).is_err());
        assert!(cyclical_encode(1.0, -5.0).is_err());
    }

    #[test]
    fn single_record_gives_nine_columns() {
        let t = TransactionTable::new(vec![record(0, "0xa", 1.0)]);
        let m = assemble_features(&t, &PreprocessConfig::default()).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 9));
        assert_eq!(m.column_names(), FEATURE_COLUMNS.map(String::from));
    }

    #[test]
    fn shared_sender_encodes_to_zero() {
        let t = TransactionTable::new((0..4).map(|i| record(i, "0xsame", i as f64)).collect());
        let m = assemble_features(&t, &PreprocessConfig::default()).unwrap();
        assert_eq!(m.column(3), vec![0.0; 4]);
    }

    #[test]
    fn drop_block_number_removes_first_column() {
        let t = TransactionTable::new(vec![record(0, "a", 1.0), record(1, "b", 2.0)]);
        let cfg = PreprocessConfig {
            drop_block_number: true,
            ..Default::default()
        };
        let m = assemble_features(&t, &cfg).unwrap();
        assert_eq!(m.cols(), 8);
        assert_eq!(m.column_names()[0], "timestamp_sin");
    }

    #[test]
    fn empty_table_is_rejected() {
        assert!(matches!(
            assemble_features(&TransactionTable::default(), &PreprocessConfig::default()),
            Err(IngestError::EmptyTable)
        ));
    }

    #[test]
    fn five_records_match_column_wise_composition() {
        let senders = ["0xc", "0xa", "0xb", "0xa", "0xc"];
        let values = [10.0, 0.5, 3.0, 7.0, 1000.0];
        let t = TransactionTable::new(
            (0..5)
                .map(|i| record(i as u64, senders[i], values[i]))
                .collect(),
        );
        let m = assemble_features(&t, &PreprocessConfig::default()).unwrap();

        let from = label_encode(&senders).0;
        let to: Vec<String> = t.records.iter().map(|r| r.to_address.clone()).collect();
        let to = label_encode(&to).0;
        let value = robust_scale(&values).unwrap();
        let gas: Vec<f64> = t.records.iter().map(|r| r.gas_price).collect();
        let gas = robust_scale(&gas).unwrap();
        for (i, r) in t.records.iter().enumerate() {
            let (s, c) = cyclical_encode(r.timestamp as f64, SECONDS_PER_DAY).unwrap();
            let expected = [
                r.block_number as f64,
                s,
                c,
                from[i] as f64,
                to[i] as f64,
                0.0,
                0.0,
                value[i],
                gas[i],
            ];
            assert_eq!(m.row(i), &expected);
        }
    }

    proptest! {
        #[test]
        fn robust_scale_is_translation_equivariant(
            xs in prop::collection::vec(-1e3f64..1e3, 2..40),
            c in -1e3f64..1e3,
        ) {
            let base = robust_scale(&xs).unwrap();
            let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
            let moved = robust_scale(&shifted).unwrap();
            for (a, b) in base.iter().zip(&moved) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
            }
        }

        #[test]
        fn cyclical_pair_is_on_unit_circle(t in 0i64..4_000_000_000, period in 1.0f64..1e7) {
            let (s, c) = cyclical_encode(t as f64, period).unwrap();
            prop_assert!((s * s + c * c - 1.0).abs() < 1e-12);
        }

        #[test]
        fn label_codes_ignore_input_order(mut vals in prop::collection::vec("[a-d]{0,2}", 1..20)) {
            let (_, m1) = label_encode(&vals);
            vals.reverse();
            let (codes, m2) = label_encode(&vals);
            prop_assert_eq!(&m1, &m2);
            let inverse: BTreeMap<usize, &String> = m2.iter().map(|(k, v)| (*v, k)).collect();
            for (code, v) in codes.iter().zip(&vals) {
                prop_assert_eq!(inverse[code], v);
            }
        }

        #[test]
        fn features_are_finite_and_rows_depend_on_own_record(
            seed in 0u64..500,
            n in 1usize..30,
        ) {
            let t = synth_transactions(seed, n, &SynthProfile::default()).unwrap();
            let m = assemble_features(&t, &PreprocessConfig::default()).unwrap();
            prop_assert!(m.values().iter().all(|v| v.is_finite()));
            // Permuting records permutes rows: column statistics are order-free.
            let mut rev = t.clone();
            rev.records.reverse();
            let mr = assemble_features(&rev, &PreprocessConfig::default()).unwrap();
            for i in 0..n {
                prop_assert_eq!(m.row(i), mr.row(n - 1 - i));
            }
        }
    }
}
