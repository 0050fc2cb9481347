use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backend::{Aspect, ClusterBrief, TextBackend, TextContext};
use super::infobase::{build_info_base, select_cells, ClusteredInfoBase};
use super::{reencode_identifiers, AgentError, ClusterKey, CompactTable, EpochKey, KnowledgeBase};
use crate::cluster::CellResult;
use crate::ingest::{TransactionRecord, TransactionTable};
use crate::quantum::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Share of records one sender must cover to be named the dominant sender.
    pub dominant_sender_threshold: f64,
    /// Representative records passed to the backend per cluster.
    pub representatives: usize,
    /// Analyse every epoch instead of the best one per (strategy, depth, k).
    pub all_epochs: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            dominant_sender_threshold: 0.8,
            representatives: 10,
            all_epochs: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub size: usize,
    pub singleton: bool,
    /// Set when the most frequent sender reaches the configured share.
    pub dominant_sender: Option<String>,
    pub dominant_sender_share: f64,
    /// Plurality token symbol; ties go to the lexicographically smallest.
    pub dominant_token: String,
    pub dominant_token_share: f64,
    pub value_min: f64,
    pub value_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterInfo {
    pub key: ClusterKey,
    pub stats: ClusterStats,
    pub representatives: Vec<TransactionRecord>,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairContrast {
    pub a: usize,
    pub b: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochComparisonRecord {
    pub key: EpochKey,
    pub silhouette: f64,
    pub clusters: Vec<ClusterBrief>,
    pub singleton_count: usize,
    pub contrasts: Vec<PairContrast>,
    pub indistinct: bool,
    pub rationale: String,
}

/// One structural way two partitions differ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "feature", rename_all = "snake_case")]
pub enum Difference {
    SingletonCount { qnn: usize, qf: usize },
    Silhouette { qnn: f64, qf: f64 },
    SizeProfile { qnn: Vec<usize>, qf: Vec<usize> },
    DominantTokens { qnn: Vec<String>, qf: Vec<String> },
    DominantSenders { qnn: Vec<String>, qf: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterStrategyRecord {
    pub qnn: EpochKey,
    pub qf: EpochKey,
    pub differences: Vec<Difference>,
    /// QNN singleton clusters minus QF singleton clusters.
    pub singleton_delta: i64,
    pub narrative: String,
}

/// Aggregate over the analysed partitions of one strategy (or both) at one k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    pub partitions: usize,
    pub singletons: usize,
    pub mean_silhouette: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRecord {
    pub k: usize,
    pub qnn: KScore,
    pub qf: KScore,
    pub comparisons: Vec<(EpochKey, EpochKey)>,
    pub qnn_characteristics: String,
    pub qf_characteristics: String,
    pub recommendation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSynthesis {
    /// Fewest singleton clusters, then highest mean silhouette, then smallest k.
    pub recommended_k: usize,
    pub scores: Vec<KScore>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyKnowledge {
    pub records: Vec<StrategyRecord>,
    pub global: GlobalSynthesis,
}

fn generate(backend: &TextBackend, key: impl ToString, ctx: &TextContext) -> Result<String, AgentError> {
    backend.generate_text(ctx).map_err(|source| AgentError::Backend {
        key: key.to_string(),
        source,
    })
}

/// Plurality value and its count; ties go to the smallest value.
fn plurality<'a>(values: impl Iterator<Item = &'a str>) -> (String, usize) {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    let mut best = ("", 0);
    for (v, c) in counts {
        if c > best.1 {
            best = (v, c);
        }
    }
    (best.0.to_string(), best.1)
}

fn cluster_stats(members: &[&TransactionRecord], config: &AgentConfig) -> ClusterStats {
    let n = members.len() as f64;
    let (sender, sender_count) = plurality(members.iter().map(|r| r.from_address.as_str()));
    let (token, token_count) = plurality(members.iter().map(|r| r.token_symbol.as_str()));
    let share = sender_count as f64 / n;
    ClusterStats {
        size: members.len(),
        singleton: members.len() == 1,
        dominant_sender: (share >= config.dominant_sender_threshold).then_some(sender),
        dominant_sender_share: share,
        dominant_token: token,
        dominant_token_share: token_count as f64 / n,
        value_min: members.iter().map(|r| r.token_value).fold(f64::INFINITY, f64::min),
        value_max: members.iter().map(|r| r.token_value).fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Statistics plus backend summary for one cluster. Representatives are the records
/// with the largest value, earliest timestamp first among equal values.
pub fn cluster_meaning(
    key: ClusterKey,
    members: &[&TransactionRecord],
    backend: &TextBackend,
    config: &AgentConfig,
) -> Result<ClusterInfo, AgentError> {
    if members.is_empty() {
        return Err(AgentError::EmptyCluster(key));
    }
    let stats = cluster_stats(members, config);
    let mut reps: Vec<&TransactionRecord> = members.to_vec();
    reps.sort_by(|a, b| b.token_value.total_cmp(&a.token_value).then(a.timestamp.cmp(&b.timestamp)));
    let representatives: Vec<TransactionRecord> =
        reps.into_iter().take(config.representatives).cloned().collect();
    let ctx = TextContext::ClusterMeaning {
        key,
        stats: stats.clone(),
        representatives: representatives.clone(),
    };
    let summary = generate(backend, key, &ctx)?;
    Ok(ClusterInfo {
        key,
        stats,
        representatives,
        summary,
    })
}

/// Pairwise contrasts in cluster-index order plus a rationale for the whole partition.
pub fn intra_epoch_compare(
    infos: &[ClusterInfo],
    silhouette: f64,
    backend: &TextBackend,
) -> Result<EpochComparisonRecord, AgentError> {
    if infos.len() < 2 {
        return Err(AgentError::TooFewClusters(infos.len()));
    }
    let key = infos[0].key.epoch_key();
    if let Some(other) = infos.iter().find(|i| i.key.epoch_key() != key) {
        return Err(AgentError::KeyMismatch(format!("{} alongside {}", other.key, infos[0].key)));
    }
    let mut clusters: Vec<ClusterBrief> = infos
        .iter()
        .map(|i| ClusterBrief {
            cluster: i.key.cluster,
            stats: i.stats.clone(),
        })
        .collect();
    clusters.sort_by_key(|c| c.cluster);
    if clusters.windows(2).any(|w| w[0].cluster == w[1].cluster) {
        return Err(AgentError::Duplicate(format!("cluster in {key}")));
    }
    let mut contrasts = Vec::new();
    for (i, a) in clusters.iter().enumerate() {
        for b in &clusters[i + 1..] {
            let ctx = TextContext::PairContrast {
                key,
                a: a.clone(),
                b: b.clone(),
            };
            contrasts.push(PairContrast {
                a: a.cluster,
                b: b.cluster,
                text: generate(backend, key, &ctx)?,
            });
        }
    }
    let indistinct = clusters.iter().all(|c| c.stats == clusters[0].stats);
    let ctx = TextContext::PartitionRationale {
        key,
        clusters: clusters.clone(),
        silhouette,
        indistinct,
    };
    let rationale = generate(backend, key, &ctx)?;
    Ok(EpochComparisonRecord {
        key,
        silhouette,
        singleton_count: clusters.iter().filter(|c| c.stats.singleton).count(),
        clusters,
        contrasts,
        indistinct,
        rationale,
    })
}

fn sorted_unique(values: impl Iterator<Item = String>) -> Vec<String> {
    values.collect::<BTreeSet<_>>().into_iter().collect()
}

/// Structured differences between a QNN and a QF partition at the same (k, depth).
pub fn inter_strategy_compare(
    qnn: &EpochComparisonRecord,
    qf: &EpochComparisonRecord,
    backend: &TextBackend,
) -> Result<InterStrategyRecord, AgentError> {
    let (a, b) = (qnn.key, qf.key);
    if a.strategy != Strategy::Qnn || b.strategy != Strategy::Qf || a.k != b.k || a.depth != b.depth {
        return Err(AgentError::CoordinateMismatch { qnn: a, qf: b });
    }
    let mut differences = Vec::new();
    if qnn.singleton_count != qf.singleton_count {
        differences.push(Difference::SingletonCount {
            qnn: qnn.singleton_count,
            qf: qf.singleton_count,
        });
    }
    if qnn.silhouette != qf.silhouette {
        differences.push(Difference::Silhouette {
            qnn: qnn.silhouette,
            qf: qf.silhouette,
        });
    }
    let sizes = |r: &EpochComparisonRecord| {
        let mut s: Vec<usize> = r.clusters.iter().map(|c| c.stats.size).collect();
        s.sort_unstable_by(|x, y| y.cmp(x));
        s
    };
    let (sa, sb) = (sizes(qnn), sizes(qf));
    if sa != sb {
        differences.push(Difference::SizeProfile { qnn: sa, qf: sb });
    }
    let tokens = |r: &EpochComparisonRecord| sorted_unique(r.clusters.iter().map(|c| c.stats.dominant_token.clone()));
    let (ta, tb) = (tokens(qnn), tokens(qf));
    if ta != tb {
        differences.push(Difference::DominantTokens { qnn: ta, qf: tb });
    }
    let senders =
        |r: &EpochComparisonRecord| sorted_unique(r.clusters.iter().filter_map(|c| c.stats.dominant_sender.clone()));
    let (da, db) = (senders(qnn), senders(qf));
    if da != db {
        differences.push(Difference::DominantSenders { qnn: da, qf: db });
    }
    let ctx = TextContext::InterStrategy {
        qnn: a,
        qf: b,
        qnn_singletons: qnn.singleton_count,
        qf_singletons: qf.singleton_count,
        differences: differences.clone(),
    };
    let narrative = generate(backend, format!("{a} vs {b}"), &ctx)?;
    Ok(InterStrategyRecord {
        qnn: a,
        qf: b,
        differences,
        singleton_delta: qnn.singleton_count as i64 - qf.singleton_count as i64,
        narrative,
    })
}

fn k_score<'a>(k: usize, records: impl Iterator<Item = &'a EpochComparisonRecord>) -> KScore {
    let mut partitions = 0;
    let mut singletons = 0;
    let mut total = 0.0;
    for r in records {
        partitions += 1;
        singletons += r.singleton_count;
        total += r.silhouette;
    }
    KScore {
        k,
        partitions,
        singletons,
        mean_silhouette: if partitions > 0 { total / partitions as f64 } else { 0.0 },
    }
}

/// Per-k QNN/QF characteristics and recommendation, plus the k chosen by fewest
/// singleton clusters, then highest mean silhouette, then smallest k.
pub fn global_strategy_analysis(
    kb: &KnowledgeBase,
    k_range: &[usize],
    backend: &TextBackend,
) -> Result<StrategyKnowledge, AgentError> {
    let mut records = Vec::new();
    let mut combined = Vec::new();
    for &k in k_range {
        let comparisons: Vec<(EpochKey, EpochKey)> =
            kb.inter_strategy().filter(|r| r.qnn.k == k).map(|r| (r.qnn, r.qf)).collect();
        if comparisons.is_empty() {
            return Err(AgentError::MissingK(k));
        }
        let at = |s: Strategy| kb.epoch_comparisons().filter(move |r| r.key.k == k && r.key.strategy == s);
        let qnn = k_score(k, at(Strategy::Qnn));
        let qf = k_score(k, at(Strategy::Qf));
        let aspect = |aspect| {
            let ctx = TextContext::StrategyAspect {
                aspect,
                k,
                qnn,
                qf,
                differences: kb
                    .inter_strategy()
                    .filter(|r| r.qnn.k == k)
                    .map(|r| r.differences.len())
                    .sum(),
            };
            generate(backend, format!("strategy k={k}"), &ctx)
        };
        records.push(StrategyRecord {
            k,
            qnn,
            qf,
            comparisons,
            qnn_characteristics: aspect(Aspect::QnnCharacteristics)?,
            qf_characteristics: aspect(Aspect::QfCharacteristics)?,
            recommendation: aspect(Aspect::Recommendation)?,
        });
        combined.push(k_score(k, kb.epoch_comparisons().filter(|r| r.key.k == k)));
    }
    let best = combined
        .iter()
        .min_by(|a, b| {
            a.singletons
                .cmp(&b.singletons)
                .then(b.mean_silhouette.total_cmp(&a.mean_silhouette))
                .then(a.k.cmp(&b.k))
        })
        .ok_or(AgentError::MissingK(0))?;
    let recommended_k = best.k;
    let ctx = TextContext::GlobalSynthesis {
        recommended_k,
        scores: combined.clone(),
    };
    let text = generate(backend, "global synthesis", &ctx)?;
    Ok(StrategyKnowledge {
        records,
        global: GlobalSynthesis {
            recommended_k,
            scores: combined,
            text,
        },
    })
}

fn analyse_base(
    base: &ClusteredInfoBase,
    table: &CompactTable,
    backend: &TextBackend,
    config: &AgentConfig,
) -> Result<Vec<(Vec<ClusterInfo>, EpochComparisonRecord)>, AgentError> {
    let partitions: Vec<_> = base.partitions().collect();
    partitions
        .par_iter()
        .map(|(key, p)| {
            let infos = p
                .clusters
                .par_iter()
                .enumerate()
                .map(|(c, rows)| {
                    let members: Vec<&TransactionRecord> = rows.iter().map(|&i| &table.records[i]).collect();
                    cluster_meaning(key.cluster(c), &members, backend, config)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let record = intra_epoch_compare(&infos, p.silhouette, backend)?;
            Ok((infos, record))
        })
        .collect()
}

/// The full analysis pass over a clustering sweep, returning the populated knowledge base.
///
/// QNN and QF partitions are paired per (k, depth). In the default mode each side
/// contributes its single selected epoch; with `all_epochs` equal epoch indices are
/// paired and unmatched epochs are left unpaired.
pub fn run_analysis(
    table: &TransactionTable,
    cells: &[CellResult],
    k_range: &[usize],
    config: &AgentConfig,
    backend: &TextBackend,
) -> Result<KnowledgeBase, AgentError> {
    let (compact, idmap) = reencode_identifiers(table);
    let mut kb = KnowledgeBase::new(idmap);
    for &k in k_range {
        let mut bases = BTreeMap::new();
        for strategy in [Strategy::Qnn, Strategy::Qf] {
            let picked = select_cells(cells, strategy, k, config.all_epochs);
            let base = build_info_base(strategy, k, &picked, &compact)?;
            for (infos, record) in analyse_base(&base, &compact, backend, config)? {
                for info in infos {
                    kb.insert_cluster_info(info)?;
                }
                kb.insert_epoch_comparison(record)?;
            }
            bases.insert(strategy, base);
        }
        let (qnn, qf) = (&bases[&Strategy::Qnn], &bases[&Strategy::Qf]);
        let mut pairs = Vec::new();
        for (depth, qnn_epochs) in &qnn.depths {
            let Some(qf_epochs) = qf.depths.get(depth) else { continue };
            if config.all_epochs {
                for epoch in qnn_epochs.keys().filter(|e| qf_epochs.contains_key(e)) {
                    pairs.push((*depth, *epoch, *epoch));
                }
            } else if let (Some(a), Some(b)) = (qnn_epochs.keys().next(), qf_epochs.keys().next()) {
                pairs.push((*depth, *a, *b));
            }
        }
        let records = pairs
            .par_iter()
            .map(|&(depth, ea, eb)| {
                let key = |strategy, epoch| EpochKey { strategy, k, depth, epoch };
                let a = kb.epoch_comparison(&key(Strategy::Qnn, ea)).expect("analysed above");
                let b = kb.epoch_comparison(&key(Strategy::Qf, eb)).expect("analysed above");
                inter_strategy_compare(a, b, backend)
            })
            .collect::<Result<Vec<_>, _>>()?;
        for r in records {
            kb.insert_inter_strategy(r)?;
        }
    }
    let knowledge = global_strategy_analysis(&kb, k_range, backend)?;
    kb.set_strategy(knowledge);
    kb.validate()?;
    Ok(kb)
}
