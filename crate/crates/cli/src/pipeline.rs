use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use qcluster_core::agent::{run_analysis, AgentConfig};
use qcluster_core::cluster::{evaluate_sweep, KMeansOptions, SweepOptions};
use qcluster_core::ingest::{assemble_features, parse_transactions, synth_transactions, TextFormat, TransactionTable};
use qcluster_core::quantum::{random_quantum_features, ExtractorOptions, QuantumFeatures, DEFAULT_MAX_QUBITS};
use qcluster_core::seed::mix_seed;
use qcluster_core::swav::{train_sweep, GradientMethod, TrainConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{InputSource, PipelineConfig};
use crate::report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Ingest,
    Features,
    Training,
    Clustering,
    Agent,
    Report,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::Ingest => 10,
            Stage::Features => 11,
            Stage::Training => 12,
            Stage::Clustering => 13,
            Stage::Agent => 14,
            Stage::Report => 15,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Features => "features",
            Stage::Training => "training",
            Stage::Clustering => "clustering",
            Stage::Agent => "agent",
            Stage::Report => "report",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, message: impl ToString) -> Self {
        Self {
            stage,
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Failed { stage: Stage, message: String },
}

/// Every seed the run derived from the base seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub base: u64,
    pub data: u64,
    /// `(depth, seed)` for the random-feature runs at each depth.
    pub qf: Vec<(usize, u64)>,
    pub training: u64,
    /// `(num_prototypes, depth, seed)` of each trained cell.
    pub models: Vec<(usize, usize, u64)>,
    pub kmeans: u64,
}

impl SeedRecord {
    fn derive(config: &PipelineConfig) -> Self {
        let base = config.seed;
        let training = mix_seed(base, &[3]);
        Self {
            base,
            data: mix_seed(base, &[1]),
            qf: config.depth_range.iter().map(|&d| (d, mix_seed(base, &[2, d as u64]))).collect(),
            training,
            models: config
                .prototype_range
                .iter()
                .flat_map(|&p| config.depth_range.iter().map(move |&d| (p, d, mix_seed(training, &[p as u64, d as u64]))))
                .collect(),
            kmeans: mix_seed(base, &[4]),
        }
    }
}

/// Everything needed to re-run a pipeline bit-identically with the mock backend.
///
/// Stage timings are printed but not persisted so that repeated runs write
/// identical trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: PipelineConfig,
    pub seeds: SeedRecord,
    /// Paths relative to the output directory, sorted.
    pub artifacts: Vec<String>,
    pub status: RunStatus,
    #[serde(skip)]
    pub timings: Vec<(Stage, Duration)>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

struct Writer {
    root: PathBuf,
    artifacts: Vec<String>,
}

impl Writer {
    fn path(&self, rel: &str) -> Result<PathBuf, std::io::Error> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(path)
    }

    fn text(&mut self, stage: Stage, rel: &str, content: &str) -> Result<(), PipelineError> {
        let path = self.path(rel).map_err(|e| PipelineError::new(stage, format!("{rel}: {e}")))?;
        fs::write(&path, content).map_err(|e| PipelineError::new(stage, format!("{rel}: {e}")))?;
        self.artifacts.push(rel.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, stage: Stage, rel: &str, value: &T) -> Result<(), PipelineError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| PipelineError::new(stage, e))?;
        s.push('\n');
        self.text(stage, rel, &s)
    }

    fn features(&mut self, stage: Stage, stem: &str, q: &QuantumFeatures) -> Result<(), PipelineError> {
        let rel = format!("{stem}.qcfm");
        let path = self.path(&rel).map_err(|e| PipelineError::new(stage, format!("{rel}: {e}")))?;
        q.matrix.write_binary(&path).map_err(|e| PipelineError::new(stage, format!("{rel}: {e}")))?;
        self.artifacts.push(rel);
        #[derive(Serialize)]
        struct Sidecar<'a> {
            provenance: &'a qcluster_core::quantum::Provenance,
            theta: &'a [f64],
            columns: &'a [String],
        }
        self.json(
            stage,
            &format!("{stem}.json"),
            &Sidecar {
                provenance: &q.provenance,
                theta: &q.theta,
                columns: q.matrix.column_names(),
            },
        )
    }
}

pub fn train_config(config: &PipelineConfig, seed: u64) -> TrainConfig {
    let h = &config.hyper;
    TrainConfig {
        num_epochs: config.num_epochs,
        batch_size: h.batch_size,
        learning_rate: h.learning_rate,
        clip_norm: h.clip_norm,
        noise_sigma: h.noise_sigma,
        seed,
        temperature: h.temperature,
        smoothing: h.smoothing,
        output_dim: h.output_dim,
        weight_scale: h.weight_scale,
        gradient: GradientMethod::ParameterShift,
        fd_step: 1e-4,
        max_qubits: DEFAULT_MAX_QUBITS,
        depth_range: config.depth_range.clone(),
        prototype_range: config.prototype_range.clone(),
    }
}

pub fn load_table(config: &PipelineConfig, seed: u64) -> Result<TransactionTable, PipelineError> {
    let err = |e: &dyn std::fmt::Display| PipelineError::new(Stage::Ingest, e);
    match &config.input {
        InputSource::Csv { path, delimiter } => {
            let file = fs::File::open(path).map_err(|e| err(&format!("{}: {e}", path.display())))?;
            parse_transactions(std::io::BufReader::new(file), TextFormat { delimiter: *delimiter }).map_err(|e| err(&e))
        }
        InputSource::Synthetic { profile, n } => synth_transactions(seed, *n, profile).map_err(|e| err(&e)),
    }
}

/// Runs every stage and writes the output tree. On failure the manifest is still
/// written, marked failed with the stage and the artifacts produced so far.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    config.validate().map_err(|m| PipelineError::new(Stage::Config, m))?;
    fs::create_dir_all(&config.out_dir)
        .map_err(|e| PipelineError::new(Stage::Config, format!("{}: {e}", config.out_dir.display())))?;
    let mut manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        seeds: SeedRecord::derive(config),
        artifacts: Vec::new(),
        status: RunStatus::Complete,
        timings: Vec::new(),
    };
    let mut out = Writer {
        root: config.out_dir.clone(),
        artifacts: Vec::new(),
    };
    let result = stages(config, &manifest.seeds, &mut out, &mut manifest.timings);
    if let Err(e) = &result {
        manifest.status = RunStatus::Failed {
            stage: e.stage,
            message: e.message.clone(),
        };
    }
    out.artifacts.push(MANIFEST_FILE.to_string());
    out.artifacts.sort();
    manifest.artifacts = out.artifacts.clone();
    let written = out.json(Stage::Report, MANIFEST_FILE, &manifest);
    for (stage, t) in &manifest.timings {
        eprintln!("{stage:>10}: {:.3}s", t.as_secs_f64());
    }
    result?;
    written?;
    Ok(manifest)
}

fn stages(
    config: &PipelineConfig,
    seeds: &SeedRecord,
    out: &mut Writer,
    timings: &mut Vec<(Stage, Duration)>,
) -> Result<(), PipelineError> {
    let mut clock = Instant::now();
    let mut lap = |stage: Stage, timings: &mut Vec<(Stage, Duration)>| {
        timings.push((stage, clock.elapsed()));
        clock = Instant::now();
    };

    let table = load_table(config, seeds.data)?;
    if matches!(config.input, InputSource::Synthetic { .. }) {
        let mut buf = Vec::new();
        table.write_csv(&mut buf, b',').map_err(|e| PipelineError::new(Stage::Ingest, e))?;
        out.text(Stage::Ingest, "data/transactions.csv", &String::from_utf8_lossy(&buf))?;
    }
    let classical = assemble_features(&table, &config.preprocess).map_err(|e| PipelineError::new(Stage::Ingest, e))?;
    let mut buf = Vec::new();
    classical.write_csv(&mut buf, b',').map_err(|e| PipelineError::new(Stage::Ingest, e))?;
    out.text(Stage::Ingest, "features/classical.csv", &String::from_utf8_lossy(&buf))?;
    lap(Stage::Ingest, timings);

    let scaled = classical.standardized();
    let options = ExtractorOptions {
        output_dim: config.hyper.output_dim,
        scale: config.hyper.weight_scale,
    };
    let mut qf = Vec::new();
    for &(depth, seed) in &seeds.qf {
        let runs = random_quantum_features(&scaled, depth, config.qf_runs, seed, &options)
            .map_err(|e| PipelineError::new(Stage::Features, format!("depth {depth}: {e}")))?;
        for q in &runs {
            out.features(Stage::Features, &format!("features/qf/depth{depth}/run{:03}", q.provenance.epoch), q)?;
        }
        qf.extend(runs);
    }
    lap(Stage::Features, timings);

    let train = train_config(config, seeds.training);
    let models = train_sweep(&scaled, &train).map_err(|e| PipelineError::new(Stage::Training, e))?;
    let mut qnn = Vec::new();
    for m in models {
        let p = m.bank.num_prototypes();
        let d = m.model.circuit.depth();
        out.json(Stage::Training, &format!("models/qnn_p{p}_depth{d}.json"), &m.record(&train))?;
        for q in &m.snapshots {
            out.features(
                Stage::Training,
                &format!("features/qnn/p{p}/depth{d}/epoch{:03}", q.provenance.epoch),
                q,
            )?;
        }
        qnn.extend(m.snapshots);
    }
    lap(Stage::Training, timings);

    let sweep_options = SweepOptions {
        kmeans: KMeansOptions {
            restarts: config.hyper.kmeans_restarts,
            max_iter: config.hyper.kmeans_max_iter,
        },
        seed: seeds.kmeans,
    };
    let sweep = evaluate_sweep(&classical, &qf, &qnn, &config.k_range, &sweep_options)
        .map_err(|e| PipelineError::new(Stage::Clustering, e))?;
    lap(Stage::Clustering, timings);

    let agent = AgentConfig {
        dominant_sender_threshold: config.hyper.dominant_sender_threshold,
        representatives: config.hyper.representatives,
        all_epochs: config.all_epochs,
    };
    let kb = run_analysis(&table, &sweep.cells, &config.k_range, &agent, &config.backend)
        .map_err(|e| PipelineError::new(Stage::Agent, e))?;
    let kb_dir = out.root.join("kb");
    let written = kb.persist(&kb_dir).map_err(|e| PipelineError::new(Stage::Agent, e))?;
    out.artifacts
        .extend(written.iter().map(|p| format!("kb/{}", p.to_string_lossy().replace('\\', "/"))));
    lap(Stage::Agent, timings);

    let r = |e: csv::Error| PipelineError::new(Stage::Report, e);
    out.text(Stage::Report, "metrics.txt", &report::metrics_text(&sweep.rows))?;
    out.text(Stage::Report, "metrics.csv", &report::metrics_csv(&sweep.rows).map_err(r)?)?;
    out.text(Stage::Report, "metrics.json", &report::metrics_json(&sweep.rows))?;
    out.text(Stage::Report, "metrics_cells.csv", &report::cells_csv(&sweep.cells).map_err(r)?)?;
    let knowledge = kb.strategy().expect("analysis sets strategy knowledge");
    out.text(Stage::Report, "strategy_summary.txt", &report::strategy_text(knowledge))?;
    out.text(Stage::Report, "strategy_summary.csv", &report::strategy_csv(knowledge).map_err(r)?)?;
    lap(Stage::Report, timings);
    Ok(())
}

/// Reads a manifest and runs its configuration again into `out_dir`.
pub fn rerun(manifest_path: &Path, out_dir: &Path) -> Result<RunManifest, PipelineError> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| PipelineError::new(Stage::Config, format!("{}: {e}", manifest_path.display())))?;
    let previous: RunManifest = serde_json::from_str(&text)
        .map_err(|e| PipelineError::new(Stage::Config, format!("{}: {e}", manifest_path.display())))?;
    let config = PipelineConfig {
        out_dir: out_dir.to_path_buf(),
        ..previous.config
    };
    run_pipeline(&config)
}
