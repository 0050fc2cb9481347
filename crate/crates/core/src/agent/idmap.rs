use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::ingest::{TransactionRecord, TransactionTable};

/// A transaction table whose hash, address and token strings have been replaced by
/// compact tokens. Numeric fields are untouched.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompactTable {
    pub records: Vec<TransactionRecord>,
}

impl CompactTable {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// One-to-one map between opaque strings and short tokens (`TX-3`, `ADDR-7`, `TOK-1`).
///
/// Numbering is 1-based per prefix in first-occurrence order. A string whose token
/// would not be shorter than itself maps to itself, and no token is ever equal to a
/// string present in the source table, so decoding is unambiguous.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<(String, String)>", into = "Vec<(String, String)>")]
pub struct IdMap {
    entries: Vec<(String, String)>,
    forward: HashMap<String, String>,
    inverse: HashMap<String, String>,
}

impl From<Vec<(String, String)>> for IdMap {
    fn from(entries: Vec<(String, String)>) -> Self {
        let forward = entries.iter().cloned().collect();
        let inverse = entries.iter().map(|(a, b)| (b.clone(), a.clone())).collect();
        Self {
            entries,
            forward,
            inverse,
        }
    }
}

impl From<IdMap> for Vec<(String, String)> {
    fn from(map: IdMap) -> Self {
        map.entries
    }
}

impl IdMap {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(original, compact)` pairs in assignment order.
    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn encode(&self, original: &str) -> Option<&str> {
        self.forward.get(original).map(String::as_str)
    }

    pub fn decode(&self, compact: &str) -> Option<&str> {
        self.inverse.get(compact).map(String::as_str)
    }

    pub fn decode_table(&self, table: &CompactTable) -> Result<TransactionTable, AgentError> {
        let back = |s: &str| {
            self.decode(s)
                .map(str::to_string)
                .ok_or_else(|| AgentError::UnknownToken(s.to_string()))
        };
        let records = table
            .records
            .iter()
            .map(|r| {
                Ok(TransactionRecord {
                    transaction_hash: back(&r.transaction_hash)?,
                    from_address: back(&r.from_address)?,
                    to_address: back(&r.to_address)?,
                    token_name: back(&r.token_name)?,
                    token_symbol: back(&r.token_symbol)?,
                    ..r.clone()
                })
            })
            .collect::<Result<Vec<_>, AgentError>>()?;
        Ok(TransactionTable::new(records))
    }
}

struct Encoder<'a> {
    raw: HashSet<&'a str>,
    counters: HashMap<&'static str, usize>,
    map: IdMap,
}

impl<'a> Encoder<'a> {
    fn encode(&mut self, value: &str, prefix: &'static str) -> String {
        if let Some(t) = self.map.forward.get(value) {
            return t.clone();
        }
        let counter = self.counters.entry(prefix).or_insert(0);
        let token = loop {
            *counter += 1;
            let candidate = format!("{prefix}-{counter}");
            if !self.raw.contains(candidate.as_str()) {
                break candidate;
            }
        };
        let compact = if token.len() < value.len() {
            token
        } else {
            *counter -= 1;
            value.to_string()
        };
        self.map.entries.push((value.to_string(), compact.clone()));
        self.map.forward.insert(value.to_string(), compact.clone());
        self.map.inverse.insert(compact.clone(), value.to_string());
        compact
    }
}

/// Replaces every hash, address and token string with its compact token.
pub fn reencode_identifiers(table: &TransactionTable) -> (CompactTable, IdMap) {
    let raw: HashSet<&str> = table
        .records
        .iter()
        .flat_map(|r| {
            [
                r.transaction_hash.as_str(),
                r.from_address.as_str(),
                r.to_address.as_str(),
                r.token_name.as_str(),
                r.token_symbol.as_str(),
            ]
        })
        .collect();
    let mut enc = Encoder {
        raw,
        counters: HashMap::new(),
        map: IdMap::default(),
    };
    let records = table
        .records
        .iter()
        .map(|r| TransactionRecord {
            transaction_hash: enc.encode(&r.transaction_hash, "TX"),
            from_address: enc.encode(&r.from_address, "ADDR"),
            to_address: enc.encode(&r.to_address, "ADDR"),
            token_name: enc.encode(&r.token_name, "TOK"),
            token_symbol: enc.encode(&r.token_symbol, "TOK"),
            ..r.clone()
        })
        .collect();
    (CompactTable { records }, enc.map)
}
