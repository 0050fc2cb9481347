use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{calinski_harabasz, davies_bouldin, kmeans, silhouette, ClusterAssignment, ClusterError, KMeansOptions};
use crate::matrix::{assemble_hybrid, FeatureMatrix};
use crate::quantum::{Provenance, QuantumFeatures, Strategy};
use crate::seed::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "Quantum Features (Worst Run)")]
    QfWorst,
    #[serde(rename = "Quantum Features (Average)")]
    QfAverage,
    #[serde(rename = "Quantum Features (Best Run)")]
    QfBest,
    #[serde(rename = "QNN")]
    Qnn,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::QfWorst => "Quantum Features (Worst Run)",
            Method::QfAverage => "Quantum Features (Average)",
            Method::QfBest => "Quantum Features (Best Run)",
            Method::Qnn => "QNN",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub silhouette: f64,
    pub davies_bouldin: f64,
    #[serde(with = "non_finite")]
    pub calinski_harabasz: f64,
}

/// One line of the results table. Column names follow the published table headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "Method")]
    pub method: Method,
    #[serde(rename = "Depth")]
    pub depth: Option<usize>,
    #[serde(rename = "Epoch")]
    pub epoch: Option<usize>,
    #[serde(rename = "Silhouette Score")]
    pub silhouette: f64,
    #[serde(rename = "Davies-Bouldin", with = "non_finite")]
    pub davies_bouldin: f64,
    #[serde(rename = "Calinski-Harabasz", with = "non_finite")]
    pub calinski_harabasz: f64,
}

impl MetricsRow {
    pub const HEADERS: [&'static str; 7] = [
        "K",
        "Method",
        "Depth",
        "Epoch",
        "Silhouette Score",
        "Davies-Bouldin",
        "Calinski-Harabasz",
    ];

    fn from_scores(k: usize, method: Method, depth: Option<usize>, epoch: Option<usize>, s: Scores) -> Self {
        Self {
            k,
            method,
            depth,
            epoch,
            silhouette: s.silhouette,
            davies_bouldin: s.davies_bouldin,
            calinski_harabasz: s.calinski_harabasz,
        }
    }
}

/// Clustering of one hybrid feature set at one k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub k: usize,
    pub provenance: Provenance,
    pub assignment: ClusterAssignment,
    pub scores: Scores,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub kmeans: KMeansOptions,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<MetricsRow>,
    /// Every (feature set, k) cell, ordered by k, then by input order (QF first).
    pub cells: Vec<CellResult>,
}

/// Clusters `classical ++ quantum` for every quantum feature set and every k, then
/// condenses the cells into table rows.
///
/// Per k: QF worst/best are the runs with the lowest/highest silhouette, the average
/// row is the per-metric mean over all runs, and the QNN row is the snapshot with the
/// highest silhouette. Ties keep the earliest cell.
pub fn evaluate_sweep(
    classical: &FeatureMatrix,
    qf_runs: &[QuantumFeatures],
    qnn_snapshots: &[QuantumFeatures],
    k_range: &[usize],
    options: &SweepOptions,
) -> Result<SweepResult, ClusterError> {
    if k_range.is_empty() {
        return Err(ClusterError::EmptyKRange);
    }
    if qf_runs.is_empty() && qnn_snapshots.is_empty() {
        return Err(ClusterError::NoStrategies);
    }
    let n = classical.rows();
    if let Some(&k) = k_range.iter().find(|&&k| k < 2 || k > n) {
        return Err(ClusterError::InvalidK { k, n });
    }
    let sources: Vec<&QuantumFeatures> = qf_runs.iter().chain(qnn_snapshots).collect();
    let hybrids = sources
        .iter()
        .map(|q| assemble_hybrid(classical, &q.matrix))
        .collect::<Result<Vec<_>, _>>()?;

    let jobs: Vec<(usize, usize)> = k_range
        .iter()
        .flat_map(|&k| (0..sources.len()).map(move |s| (k, s)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(k, s)| {
            let x = &hybrids[s];
            let assignment = kmeans(
                x,
                k,
                options.kmeans.restarts,
                options.kmeans.max_iter,
                mix_seed(options.seed, &[k as u64]),
            )?;
            let scores = score(x, &assignment.labels)?;
            Ok(CellResult {
                k,
                provenance: sources[s].provenance.clone(),
                assignment,
                scores,
            })
        })
        .collect::<Result<Vec<_>, ClusterError>>()?;

    let mut rows = Vec::new();
    for &k in k_range {
        let at_k: Vec<&CellResult> = cells.iter().filter(|c| c.k == k).collect();
        let qf: Vec<&CellResult> = at_k.iter().copied().filter(|c| c.provenance.strategy == Strategy::Qf).collect();
        let qnn: Vec<&CellResult> = at_k.iter().copied().filter(|c| c.provenance.strategy == Strategy::Qnn).collect();
        if !qf.is_empty() {
            let worst = extreme(&qf, |a, b| a < b);
            let best = extreme(&qf, |a, b| a > b);
            let m = qf.len() as f64;
            let mean = Scores {
                silhouette: qf.iter().map(|c| c.scores.silhouette).sum::<f64>() / m,
                davies_bouldin: qf.iter().map(|c| c.scores.davies_bouldin).sum::<f64>() / m,
                calinski_harabasz: qf.iter().map(|c| c.scores.calinski_harabasz).sum::<f64>() / m,
            };
            let first_depth = qf[0].provenance.depth;
            let common_depth = qf.iter().all(|c| c.provenance.depth == first_depth).then_some(first_depth);
            rows.push(MetricsRow::from_scores(k, Method::QfWorst, Some(worst.provenance.depth), None, worst.scores));
            rows.push(MetricsRow::from_scores(k, Method::QfAverage, common_depth, None, mean));
            rows.push(MetricsRow::from_scores(k, Method::QfBest, Some(best.provenance.depth), None, best.scores));
        }
        if !qnn.is_empty() {
            let best = extreme(&qnn, |a, b| a > b);
            rows.push(MetricsRow::from_scores(
                k,
                Method::Qnn,
                Some(best.provenance.depth),
                Some(best.provenance.epoch),
                best.scores,
            ));
        }
    }
    Ok(SweepResult { rows, cells })
}

fn score(x: &FeatureMatrix, labels: &[usize]) -> Result<Scores, ClusterError> {
    Ok(Scores {
        silhouette: silhouette(x, labels)?,
        davies_bouldin: davies_bouldin(x, labels)?,
        calinski_harabasz: calinski_harabasz(x, labels)?,
    })
}

/// First cell whose silhouette beats every earlier one under `better`.
fn extreme<'a>(cells: &[&'a CellResult], better: impl Fn(f64, f64) -> bool) -> &'a CellResult {
    let mut pick = cells[0];
    for c in &cells[1..] {
        if better(c.scores.silhouette, pick.scores.silhouette) {
            pick = c;
        }
    }
    pick
}

/// Finite values as JSON numbers, infinities and NaN as the strings `"inf"`, `"-inf"`, `"nan"`.
mod non_finite {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("expected a number, got {other:?}"))),
            },
        }
    }
}
