use std::path::PathBuf;

use qcluster_core::agent::TextBackend;
use qcluster_core::ingest::{PreprocessConfig, SynthProfile};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSource {
    Csv { path: PathBuf, delimiter: u8 },
    Synthetic { profile: SynthProfile, n: usize },
}

/// Training and clustering settings without a dedicated flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub noise_sigma: f64,
    pub temperature: f64,
    pub smoothing: f64,
    pub output_dim: usize,
    pub weight_scale: f64,
    pub kmeans_restarts: usize,
    pub kmeans_max_iter: usize,
    pub dominant_sender_threshold: f64,
    pub representatives: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1e-2,
            clip_norm: 1.0,
            noise_sigma: 0.05,
            temperature: 0.1,
            smoothing: 0.01,
            output_dim: 3,
            weight_scale: 1.0,
            kmeans_restarts: 10,
            kmeans_max_iter: 300,
            dominant_sender_threshold: 0.8,
            representatives: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: InputSource,
    pub k_range: Vec<usize>,
    pub depth_range: Vec<usize>,
    pub prototype_range: Vec<usize>,
    pub num_epochs: usize,
    pub qf_runs: usize,
    pub seed: u64,
    pub backend: TextBackend,
    pub all_epochs: bool,
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub hyper: Hyperparameters,
    /// Not echoed into the manifest, so identical runs produce identical trees
    /// regardless of where they are written.
    #[serde(skip)]
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: InputSource::Synthetic {
                profile: SynthProfile::three_blobs(),
                n: 90,
            },
            k_range: (2..=6).collect(),
            depth_range: vec![1],
            prototype_range: vec![3],
            num_epochs: 10,
            qf_runs: 20,
            seed: 0,
            backend: TextBackend::Mock,
            all_epochs: false,
            preprocess: PreprocessConfig::default(),
            hyper: Hyperparameters::default(),
            out_dir: PathBuf::from("qcluster-out"),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        let nonempty = |name: &str, v: &[usize]| {
            if v.is_empty() {
                Err(format!("{name} is empty"))
            } else {
                Ok(())
            }
        };
        nonempty("k range", &self.k_range)?;
        nonempty("depth range", &self.depth_range)?;
        nonempty("prototype list", &self.prototype_range)?;
        if let Some(k) = self.k_range.iter().find(|&&k| k < 2) {
            return Err(format!("k={k} is below 2"));
        }
        if self.depth_range.contains(&0) {
            return Err("depth 0 has no trainable angles".into());
        }
        if let Some(p) = self.prototype_range.iter().find(|&&p| p < 2) {
            return Err(format!("{p} prototypes: need at least 2"));
        }
        if self.num_epochs == 0 {
            return Err("epochs must be positive".into());
        }
        if self.qf_runs == 0 {
            return Err("qf-runs must be positive".into());
        }
        if let InputSource::Synthetic { n: 0, .. } = self.input {
            return Err("synthetic row count must be positive".into());
        }
        Ok(())
    }
}

/// Parses `A..B` (inclusive), `A..=B`, a single value, or a comma list.
pub fn parse_range(s: &str) -> Result<Vec<usize>, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("not a count: {t:?}"));
    let values = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(format!("empty range {s:?}"));
        }
        (a..=b).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    let mut sorted = values.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != values.len() || sorted != values {
        return Err(format!("values in {s:?} must be strictly increasing"));
    }
    Ok(values)
}
