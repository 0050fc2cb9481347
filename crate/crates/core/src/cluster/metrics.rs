//! Internal validity indices. All distances are Euclidean.

use std::collections::BTreeMap;

use super::{sq_dist, ClusterError};
use crate::matrix::FeatureMatrix;

/// Row indices grouped by label, in ascending label order.
fn groups(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        out.entry(l).or_default().push(i);
    }
    out
}

fn check(features: &FeatureMatrix, labels: &[usize]) -> Result<BTreeMap<usize, Vec<usize>>, ClusterError> {
    if labels.len() != features.rows() {
        return Err(ClusterError::LabelLength {
            labels: labels.len(),
            rows: features.rows(),
        });
    }
    if features.rows() < 2 {
        return Err(ClusterError::TooFewPoints {
            needed: 2,
            got: features.rows(),
        });
    }
    let g = groups(labels);
    if g.len() < 2 {
        return Err(ClusterError::SingleCluster);
    }
    Ok(g)
}

fn centroid(features: &FeatureMatrix, members: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; features.cols()];
    for &i in members {
        for (s, x) in c.iter_mut().zip(features.row(i)) {
            *s += x;
        }
    }
    let m = members.len() as f64;
    c.iter_mut().for_each(|v| *v /= m);
    c
}

/// Mean silhouette width. Members of singleton clusters score 0, as do points
/// with `a = b = 0`.
pub fn silhouette(features: &FeatureMatrix, labels: &[usize]) -> Result<f64, ClusterError> {
    let groups = check(features, labels)?;
    let n = features.rows();
    let mut total = 0.0;
    for i in 0..n {
        let own = labels[i];
        if groups[&own].len() == 1 {
            continue;
        }
        let mut a = 0.0;
        let mut b = f64::INFINITY;
        for (&label, members) in &groups {
            let sum: f64 = members
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| sq_dist(features.row(i), features.row(j)).sqrt())
                .sum();
            if label == own {
                a = sum / (members.len() - 1) as f64;
            } else {
                b = b.min(sum / members.len() as f64);
            }
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Davies-Bouldin index. A pair of coincident centroids contributes 0 when both
/// clusters have zero scatter and is an error otherwise.
pub fn davies_bouldin(features: &FeatureMatrix, labels: &[usize]) -> Result<f64, ClusterError> {
    let groups = check(features, labels)?;
    let stats: Vec<(usize, Vec<f64>, f64)> = groups
        .iter()
        .map(|(&label, members)| {
            let c = centroid(features, members);
            let scatter = members
                .iter()
                .map(|&i| sq_dist(features.row(i), &c).sqrt())
                .sum::<f64>()
                / members.len() as f64;
            (label, c, scatter)
        })
        .collect();
    let mut total = 0.0;
    for (i, (li, ci, si)) in stats.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for (j, (lj, cj, sj)) in stats.iter().enumerate() {
            if i == j {
                continue;
            }
            let m = sq_dist(ci, cj).sqrt();
            let ratio = if m > 0.0 {
                (si + sj) / m
            } else if si + sj == 0.0 {
                0.0
            } else {
                return Err(ClusterError::CoincidentCentroids { a: *li, b: *lj });
            };
            worst = worst.max(ratio);
        }
        total += worst;
    }
    Ok(total / stats.len() as f64)
}

/// Calinski-Harabasz index `[B/(k−1)] / [W/(n−k)]`; `+∞` when `W = 0`.
pub fn calinski_harabasz(features: &FeatureMatrix, labels: &[usize]) -> Result<f64, ClusterError> {
    let groups = check(features, labels)?;
    let n = features.rows();
    let k = groups.len();
    if n <= k {
        return Err(ClusterError::TooFewPoints { needed: k + 1, got: n });
    }
    let all: Vec<usize> = (0..n).collect();
    let overall = centroid(features, &all);
    let mut between = 0.0;
    let mut within = 0.0;
    for members in groups.values() {
        let c = centroid(features, members);
        between += members.len() as f64 * sq_dist(&c, &overall);
        within += members.iter().map(|&i| sq_dist(features.row(i), &c)).sum::<f64>();
    }
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((between / (k - 1) as f64) / (within / (n - k) as f64))
}
