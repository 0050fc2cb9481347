use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::analysis::{ClusterInfo, EpochComparisonRecord, InterStrategyRecord, StrategyKnowledge, StrategyRecord, GlobalSynthesis};
use super::{AgentError, ClusterKey, EpochKey, IdMap};

/// Three-level store: per-cluster summaries, per-epoch comparisons (with the
/// inter-strategy differences attached to epoch pairs) and per-k strategy records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeBase {
    idmap: IdMap,
    cluster_info: BTreeMap<ClusterKey, ClusterInfo>,
    epoch_comparisons: BTreeMap<EpochKey, EpochComparisonRecord>,
    inter_strategy: BTreeMap<(EpochKey, EpochKey), InterStrategyRecord>,
    strategy: Option<StrategyKnowledge>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AgentError + '_ {
    move |source| AgentError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), AgentError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|source| AgentError::Json {
        path: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, AgentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| AgentError::Json {
        path: path.display().to_string(),
        source,
    })
}

/// All `.json` files below `dir`, sorted; a missing directory yields nothing.
fn json_files(dir: &Path) -> Result<Vec<PathBuf>, AgentError> {
    let mut out = Vec::new();
    if !dir.exists() {
        return Ok(out);
    }
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(io_err(&d))? {
            let path = entry.map_err(io_err(&d))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "json") {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

impl KnowledgeBase {
    pub fn new(idmap: IdMap) -> Self {
        Self {
            idmap,
            ..Self::default()
        }
    }

    pub fn idmap(&self) -> &IdMap {
        &self.idmap
    }

    pub fn cluster_info(&self) -> impl Iterator<Item = &ClusterInfo> {
        self.cluster_info.values()
    }

    pub fn epoch_comparisons(&self) -> impl Iterator<Item = &EpochComparisonRecord> {
        self.epoch_comparisons.values()
    }

    pub fn epoch_comparison(&self, key: &EpochKey) -> Option<&EpochComparisonRecord> {
        self.epoch_comparisons.get(key)
    }

    pub fn inter_strategy(&self) -> impl Iterator<Item = &InterStrategyRecord> {
        self.inter_strategy.values()
    }

    pub fn strategy(&self) -> Option<&StrategyKnowledge> {
        self.strategy.as_ref()
    }

    pub fn insert_cluster_info(&mut self, info: ClusterInfo) -> Result<(), AgentError> {
        if self.cluster_info.contains_key(&info.key) {
            return Err(AgentError::Duplicate(info.key.to_string()));
        }
        self.cluster_info.insert(info.key, info);
        Ok(())
    }

    pub fn insert_epoch_comparison(&mut self, record: EpochComparisonRecord) -> Result<(), AgentError> {
        if self.epoch_comparisons.contains_key(&record.key) {
            return Err(AgentError::Duplicate(record.key.to_string()));
        }
        self.epoch_comparisons.insert(record.key, record);
        Ok(())
    }

    pub fn insert_inter_strategy(&mut self, record: InterStrategyRecord) -> Result<(), AgentError> {
        let key = (record.qnn, record.qf);
        if self.inter_strategy.contains_key(&key) {
            return Err(AgentError::Duplicate(format!("{} vs {}", key.0, key.1)));
        }
        self.inter_strategy.insert(key, record);
        Ok(())
    }

    pub fn set_strategy(&mut self, knowledge: StrategyKnowledge) {
        self.strategy = Some(knowledge);
    }

    /// Checks completeness and that every record only references existing keys.
    pub fn validate(&self) -> Result<(), AgentError> {
        let fail = |msg: String| Err(AgentError::Integrity(msg));
        let mut per_epoch: BTreeMap<EpochKey, BTreeSet<usize>> = BTreeMap::new();
        for key in self.cluster_info.keys() {
            per_epoch.entry(key.epoch_key()).or_default().insert(key.cluster);
        }
        for (key, clusters) in &per_epoch {
            if clusters.len() != key.k || clusters.iter().any(|&c| c >= key.k) {
                return fail(format!("{key} has clusters {clusters:?}"));
            }
            if key.k >= 2 && !self.epoch_comparisons.contains_key(key) {
                return fail(format!("no epoch comparison for {key}"));
            }
        }
        for (key, record) in &self.epoch_comparisons {
            if record.key != *key {
                return fail(format!("record {} stored under {key}", record.key));
            }
            for brief in &record.clusters {
                if !self.cluster_info.contains_key(&key.cluster(brief.cluster)) {
                    return fail(format!("{key} references missing cluster {}", brief.cluster));
                }
            }
            if per_epoch.get(key).map(BTreeSet::len) != Some(record.clusters.len()) {
                return fail(format!("{key} covers {} clusters", record.clusters.len()));
            }
            for c in &record.contrasts {
                if !per_epoch[key].contains(&c.a) || !per_epoch[key].contains(&c.b) {
                    return fail(format!("{key} contrasts missing clusters {} and {}", c.a, c.b));
                }
            }
        }
        for (qnn, qf) in self.inter_strategy.keys() {
            for k in [qnn, qf] {
                if !self.epoch_comparisons.contains_key(k) {
                    return fail(format!("inter-strategy record references missing {k}"));
                }
            }
        }
        if let Some(s) = &self.strategy {
            let mut seen = BTreeSet::new();
            for r in &s.records {
                if !seen.insert(r.k) {
                    return fail(format!("two strategy records for k={}", r.k));
                }
                for pair in &r.comparisons {
                    if !self.inter_strategy.contains_key(pair) {
                        return fail(format!("strategy k={} references missing {} vs {}", r.k, pair.0, pair.1));
                    }
                }
            }
            if !seen.contains(&s.global.recommended_k) {
                return fail(format!("global synthesis recommends unknown k={}", s.global.recommended_k));
            }
        }
        Ok(())
    }

    fn cluster_path(key: &ClusterKey) -> PathBuf {
        PathBuf::from(format!(
            "cluster_info/{}/k{}/{}/{}/{}.json",
            key.strategy, key.k, key.depth, key.epoch, key.cluster
        ))
    }

    fn epoch_path(key: &EpochKey) -> PathBuf {
        PathBuf::from(format!(
            "epoch_comparison/{}/k{}/{}/{}.json",
            key.strategy, key.k, key.depth, key.epoch
        ))
    }

    fn inter_path(qnn: &EpochKey, qf: &EpochKey) -> PathBuf {
        PathBuf::from(format!(
            "inter_strategy/k{}/{}/qnn{}_qf{}.json",
            qnn.k, qnn.depth, qnn.epoch, qf.epoch
        ))
    }

    /// Writes one JSON document per record below `dir`; returns the relative paths
    /// written, sorted.
    pub fn persist(&self, dir: &Path) -> Result<Vec<PathBuf>, AgentError> {
        let mut written = Vec::new();
        let mut put = |rel: PathBuf, value: &dyn erased::Json| -> Result<(), AgentError> {
            value.write(&dir.join(&rel))?;
            written.push(rel);
            Ok(())
        };
        put(PathBuf::from("idmap.json"), &self.idmap)?;
        for (key, info) in &self.cluster_info {
            put(Self::cluster_path(key), info)?;
        }
        for (key, record) in &self.epoch_comparisons {
            put(Self::epoch_path(key), record)?;
        }
        for ((qnn, qf), record) in &self.inter_strategy {
            put(Self::inter_path(qnn, qf), record)?;
        }
        if let Some(s) = &self.strategy {
            for r in &s.records {
                put(PathBuf::from(format!("strategy/{}.json", r.k)), r)?;
            }
            put(PathBuf::from("strategy/global.json"), &s.global)?;
        }
        written.sort();
        Ok(written)
    }

    /// Reads a tree written by [`KnowledgeBase::persist`] and validates it.
    pub fn load(dir: &Path) -> Result<Self, AgentError> {
        let mut kb = KnowledgeBase::new(read_json(&dir.join("idmap.json"))?);
        for path in json_files(&dir.join("cluster_info"))? {
            kb.insert_cluster_info(read_json(&path)?)?;
        }
        for path in json_files(&dir.join("epoch_comparison"))? {
            kb.insert_epoch_comparison(read_json(&path)?)?;
        }
        for path in json_files(&dir.join("inter_strategy"))? {
            kb.insert_inter_strategy(read_json(&path)?)?;
        }
        let strategy_dir = dir.join("strategy");
        if strategy_dir.exists() {
            let mut records: Vec<StrategyRecord> = Vec::new();
            for path in json_files(&strategy_dir)? {
                if path.file_stem().is_some_and(|s| s != "global") {
                    records.push(read_json(&path)?);
                }
            }
            records.sort_by_key(|r| r.k);
            let global: GlobalSynthesis = read_json(&strategy_dir.join("global.json"))?;
            kb.set_strategy(StrategyKnowledge { records, global });
        }
        kb.validate()?;
        Ok(kb)
    }
}

mod erased {
    use super::*;

    /// Object-safe serialization so `persist` can take heterogeneous records.
    pub trait Json {
        fn write(&self, path: &Path) -> Result<(), AgentError>;
    }

    impl<T: Serialize> Json for T {
        fn write(&self, path: &Path) -> Result<(), AgentError> {
            write_json(path, self)
        }
    }
}
