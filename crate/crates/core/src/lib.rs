pub mod agent;
pub mod cluster;
pub mod ingest;
pub mod matrix;
pub mod quantum;
pub mod seed;
pub mod swav;

pub use matrix::{assemble_hybrid, FeatureMatrix};
