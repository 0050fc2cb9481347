//! Fixtures shared by the criterion benches.

use qcluster_core::ingest::{assemble_features, synth_transactions, PreprocessConfig, SynthProfile};
use qcluster_core::FeatureMatrix;

/// Preprocessed classical features of the planted three-group profile.
pub fn blob_features(n: usize, seed: u64) -> FeatureMatrix {
    let table = synth_transactions(seed, n, &SynthProfile::three_blobs()).expect("n > 0");
    assemble_features(&table, &PreprocessConfig::default()).expect("non-empty table")
}
