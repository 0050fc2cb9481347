use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AgentError, CompactTable, EpochKey};
use crate::cluster::CellResult;
use crate::ingest::TransactionRecord;
use crate::quantum::{Provenance, Strategy};

/// One clustering of the records: `clusters[c]` lists the member row indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochPartition {
    pub provenance: Provenance,
    pub silhouette: f64,
    pub clusters: Vec<Vec<usize>>,
}

/// The nested depth → epoch → cluster structure for one strategy at one k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteredInfoBase {
    pub strategy: Strategy,
    pub k: usize,
    pub depths: BTreeMap<usize, BTreeMap<usize, EpochPartition>>,
}

impl ClusteredInfoBase {
    /// Every partition with its key, depths then epochs ascending.
    pub fn partitions(&self) -> impl Iterator<Item = (EpochKey, &EpochPartition)> {
        self.depths.iter().flat_map(move |(&depth, epochs)| {
            epochs.iter().map(move |(&epoch, p)| {
                (
                    EpochKey {
                        strategy: self.strategy,
                        k: self.k,
                        depth,
                        epoch,
                    },
                    p,
                )
            })
        })
    }

    pub fn members<'a>(&self, table: &'a CompactTable, depth: usize, epoch: usize, cluster: usize) -> Vec<&'a TransactionRecord> {
        self.depths
            .get(&depth)
            .and_then(|e| e.get(&epoch))
            .and_then(|p| p.clusters.get(cluster))
            .map(|rows| rows.iter().map(|&i| &table.records[i]).collect())
            .unwrap_or_default()
    }
}

/// Picks the cells stage 2 analyses for one strategy at one k.
///
/// By default this is the highest-silhouette cell per depth. With `all_epochs`
/// every epoch is kept; when several prototype counts share a (depth, epoch), the
/// highest-silhouette one is kept. Ties go to the earliest cell.
pub fn select_cells(cells: &[CellResult], strategy: Strategy, k: usize, all_epochs: bool) -> Vec<&CellResult> {
    let mut best: BTreeMap<(usize, usize), &CellResult> = BTreeMap::new();
    for c in cells.iter().filter(|c| c.k == k && c.provenance.strategy == strategy) {
        let key = (c.provenance.depth, if all_epochs { c.provenance.epoch } else { 0 });
        match best.get(&key) {
            Some(b) if b.scores.silhouette >= c.scores.silhouette => {}
            _ => {
                best.insert(key, c);
            }
        }
    }
    best.into_values().collect()
}

pub fn build_info_base(
    strategy: Strategy,
    k: usize,
    cells: &[&CellResult],
    table: &CompactTable,
) -> Result<ClusteredInfoBase, AgentError> {
    let mut depths: BTreeMap<usize, BTreeMap<usize, EpochPartition>> = BTreeMap::new();
    for cell in cells {
        let p = &cell.provenance;
        let key = EpochKey {
            strategy,
            k,
            depth: p.depth,
            epoch: p.epoch,
        };
        if p.strategy != strategy || cell.k != k {
            return Err(AgentError::KeyMismatch(format!(
                "{} k={} in info base for {key}",
                p.strategy, cell.k
            )));
        }
        let labels = &cell.assignment.labels;
        if labels.len() != table.len() {
            return Err(AgentError::LabelLength {
                labels: labels.len(),
                records: table.len(),
            });
        }
        let mut clusters = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(AgentError::KeyMismatch(format!("label {l} at row {i} for {key}")));
            }
            clusters[l].push(i);
        }
        if let Some(c) = clusters.iter().position(Vec::is_empty) {
            return Err(AgentError::EmptyCluster(key.cluster(c)));
        }
        let partition = EpochPartition {
            provenance: p.clone(),
            silhouette: cell.scores.silhouette,
            clusters,
        };
        if depths.entry(p.depth).or_default().insert(p.epoch, partition).is_some() {
            return Err(AgentError::Duplicate(key.to_string()));
        }
    }
    Ok(ClusteredInfoBase { strategy, k, depths })
}
