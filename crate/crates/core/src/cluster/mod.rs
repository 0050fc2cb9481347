//! K-means, internal validity indices and the K × depth × epoch sweep.

mod kmeans;
mod metrics;
mod sweep;

use thiserror::Error;

use crate::matrix::MatrixError;

pub use kmeans::{kmeans, ClusterAssignment, KMeansOptions};
pub use metrics::{calinski_harabasz, davies_bouldin, silhouette};
pub use sweep::{evaluate_sweep, CellResult, Method, MetricsRow, Scores, SweepOptions, SweepResult};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("invalid cluster count k={k} for {n} rows")]
    InvalidK { k: usize, n: usize },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("{labels} labels for {rows} rows")]
    LabelLength { labels: usize, rows: usize },
    #[error("metric needs at least two clusters")]
    SingleCluster,
    #[error("clusters {a} and {b} share a centroid but have nonzero scatter")]
    CoincidentCentroids { a: usize, b: usize },
    #[error("empty k range")]
    EmptyKRange,
    #[error("no quantum features to evaluate")]
    NoStrategies,
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
