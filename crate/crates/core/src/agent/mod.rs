//! Qualitative analysis of clustering results: identifier re-encoding, the nested
//! depth → epoch → cluster information base, text generation and the knowledge base.

mod analysis;
mod backend;
mod idmap;
mod infobase;
mod kb;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantum::Strategy;

pub use analysis::{
    cluster_meaning, global_strategy_analysis, inter_strategy_compare, intra_epoch_compare, run_analysis,
    AgentConfig, ClusterInfo, ClusterStats, Difference, EpochComparisonRecord, GlobalSynthesis, InterStrategyRecord,
    KScore, PairContrast, StrategyKnowledge, StrategyRecord,
};
pub use backend::{Aspect, BackendError, ClusterBrief, RemoteConfig, TextBackend, TextContext, CONTEXT_VERSION};
pub use idmap::{reencode_identifiers, CompactTable, IdMap};
pub use infobase::{build_info_base, select_cells, ClusteredInfoBase, EpochPartition};
pub use kb::KnowledgeBase;

/// Identifies one cluster of one partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClusterKey {
    pub strategy: Strategy,
    pub k: usize,
    pub depth: usize,
    pub epoch: usize,
    pub cluster: usize,
}

/// Identifies one partition: a strategy's clustering at (k, depth, epoch).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EpochKey {
    pub strategy: Strategy,
    pub k: usize,
    pub depth: usize,
    pub epoch: usize,
}

impl EpochKey {
    pub fn cluster(&self, cluster: usize) -> ClusterKey {
        ClusterKey {
            strategy: self.strategy,
            k: self.k,
            depth: self.depth,
            epoch: self.epoch,
            cluster,
        }
    }
}

impl ClusterKey {
    pub fn epoch_key(&self) -> EpochKey {
        EpochKey {
            strategy: self.strategy,
            k: self.k,
            depth: self.depth,
            epoch: self.epoch,
        }
    }
}

impl std::fmt::Display for EpochKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} k={} depth={} epoch={}", self.strategy, self.k, self.depth, self.epoch)
    }
}

impl std::fmt::Display for ClusterKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} cluster={}", self.epoch_key(), self.cluster)
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("{labels} labels for {records} records")]
    LabelLength { labels: usize, records: usize },
    #[error("empty cluster at {0}")]
    EmptyCluster(ClusterKey),
    #[error("duplicate entry {0}")]
    Duplicate(String),
    #[error("records disagree on key: {0}")]
    KeyMismatch(String),
    #[error("epoch comparison needs at least two clusters, got {0}")]
    TooFewClusters(usize),
    #[error("cannot compare {qnn} with {qf}: coordinates differ")]
    CoordinateMismatch { qnn: EpochKey, qf: EpochKey },
    #[error("no inter-strategy records for k={0}")]
    MissingK(usize),
    #[error("unknown compact token {0:?}")]
    UnknownToken(String),
    #[error("text generation failed for {key}: {source}")]
    Backend {
        key: String,
        #[source]
        source: BackendError,
    },
    #[error("knowledge base integrity: {0}")]
    Integrity(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}
