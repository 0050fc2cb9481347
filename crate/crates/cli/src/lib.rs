//! Orchestration of the full clustering sweep: ingest, quantum features, training,
//! K-means evaluation, knowledge-base analysis and reports.

pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{parse_range, Hyperparameters, InputSource, PipelineConfig};
pub use pipeline::{rerun, run_pipeline, PipelineError, RunManifest, RunStatus, SeedRecord, Stage, MANIFEST_FILE};
