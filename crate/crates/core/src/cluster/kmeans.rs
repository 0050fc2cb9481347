use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sq_dist, ClusterError};
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
    pub k: usize,
}

impl ClusterAssignment {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == cluster).then_some(i))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 300,
        }
    }
}

/// k-means++ seeding followed by Lloyd iterations, best inertia over `restarts` runs.
///
/// All restarts draw from one seeded stream in sequence. A cluster that empties is
/// reseeded at the point farthest from its current centroid (taken from a cluster with
/// more than one member), so every label in `0..k` is always used.
pub fn kmeans(
    features: &FeatureMatrix,
    k: usize,
    restarts: usize,
    max_iter: usize,
    seed: u64,
) -> Result<ClusterAssignment, ClusterError> {
    let n = features.rows();
    if n == 0 {
        return Err(ClusterError::TooFewPoints { needed: 1, got: 0 });
    }
    if k == 0 || k > n {
        return Err(ClusterError::InvalidK { k, n });
    }
    let points = features.row_vecs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<ClusterAssignment> = None;
    for _ in 0..restarts.max(1) {
        let init = plus_plus_init(&points, k, &mut rng);
        let candidate = lloyd(&points, init, max_iter);
        if best.as_ref().is_none_or(|b| candidate.inertia < b.inertia) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // Guard against rounding landing on a zero-weight tail.
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = points[next].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

fn update_centroids(points: &[Vec<f64>], labels: &[usize], k: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            for v in s.iter_mut() {
                *v /= c as f64;
            }
        }
    }
    (sums, counts)
}

/// Moves, for each empty cluster, the point farthest from its centroid into it.
fn repair_empty(points: &[Vec<f64>], labels: &mut [usize], centroids: &mut [Vec<f64>], counts: &mut [usize]) {
    for empty in 0..centroids.len() {
        if counts[empty] > 0 {
            continue;
        }
        let donor = (0..points.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| {
                sq_dist(&points[a], &centroids[labels[a]])
                    .total_cmp(&sq_dist(&points[b], &centroids[labels[b]]))
                    .then(b.cmp(&a))
            });
        let Some(i) = donor else { continue };
        let from = labels[i];
        counts[from] -= 1;
        labels[i] = empty;
        counts[empty] = 1;
        centroids[empty] = points[i].clone();
        let members: Vec<&Vec<f64>> = points
            .iter()
            .zip(labels.iter())
            .filter_map(|(p, &l)| (l == from).then_some(p))
            .collect();
        let m = members.len() as f64;
        centroids[from] = (0..points[i].len())
            .map(|d| members.iter().map(|p| p[d]).sum::<f64>() / m)
            .collect();
    }
}

fn inertia(points: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum()
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> ClusterAssignment {
    let k = centroids.len();
    let dim = points[0].len();
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    let (c, mut counts) = update_centroids(points, &labels, k, dim);
    centroids = c;
    repair_empty(points, &mut labels, &mut centroids, &mut counts);
    let mut current = inertia(points, &labels, &centroids);

    for _ in 0..max_iter {
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if next == labels {
            break;
        }
        labels = next;
        let (c, mut counts) = update_centroids(points, &labels, k, dim);
        centroids = c;
        repair_empty(points, &mut labels, &mut centroids, &mut counts);
        let updated = inertia(points, &labels, &centroids);
        debug_assert!(
            updated <= current * (1.0 + 1e-9) + 1e-12,
            "inertia increased from {current} to {updated}"
        );
        current = updated;
    }
    ClusterAssignment {
        labels,
        centroids,
        inertia: current,
        k,
    }
}
