use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 300;
pub const RELATIVE_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Stop once the relative inertia decrease drops below this.
    pub tolerance: f64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iterations: MAX_ITERATIONS,
            tolerance: RELATIVE_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    /// Inertia after every assignment step, starting with the seeding.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + (x - y) * (x - y))
}

/// Nearest centroid (lowest index on ties) and squared distance.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means++ seeding: first centroid uniform, then proportional to the
/// squared distance to the closest chosen centroid.
fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut closest: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();

    while centroids.len() < k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in closest.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total weight")
        } else {
            // every point coincides with a centroid already
            chosen.iter().position(|&c| !c).expect("k <= n")
        };
        chosen[pick] = true;
        for (d, p) in closest.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[pick]));
        }
        centroids.push(points[pick].clone());
    }
    centroids
}

/// Moves each empty cluster's centroid onto the point farthest from its own
/// centroid, taken from clusters that can spare one.
fn repair_empty(points: &[Vec<f64>], centroids: &mut [Vec<f64>], labels: &mut [usize], dists: &mut [f64]) {
    let k = centroids.len();
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let donor = (0..points.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if dists[b] >= dists[i] => Some(b),
                _ => Some(i),
            });
        let Some(i) = donor else { break };
        sizes[labels[i]] -= 1;
        sizes[empty] = 1;
        labels[i] = empty;
        dists[i] = 0.0;
        centroids[empty] = points[i].clone();
    }
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    points.iter().map(|p| nearest(p, centroids)).unzip()
}

fn means(points: &[Vec<f64>], labels: &[usize], previous: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; previous.len()];
    let mut counts = vec![0usize; previous.len()];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    sums.into_iter()
        .zip(counts)
        .zip(previous)
        .map(|((s, c), prev)| {
            if c == 0 {
                prev.clone()
            } else {
                s.into_iter().map(|v| v / c as f64).collect()
            }
        })
        .collect()
}

/// Lloyd's algorithm from a seeded k-means++ start. Deterministic given the
/// points and the seed.
pub fn kmeans_points(points: &[Vec<f64>], config: &KMeansConfig) -> Result<KMeansFit> {
    let n = points.len();
    let k = config.k;
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::KTooLarge { k, points: n });
    }
    let dim = points[0].len();
    for p in points {
        if p.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite descriptor value".into()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut centroids = plus_plus(points, k, &mut rng);
    let (mut labels, mut dists) = assign(points, &centroids);
    let mut inertia: f64 = dists.iter().sum();
    let mut history = vec![inertia];
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        repair_empty(points, &mut centroids, &mut labels, &mut dists);
        let next_centroids = means(points, &labels, &centroids);
        let (next_labels, next_dists) = assign(points, &next_centroids);
        let next: f64 = next_dists.iter().sum();
        if next > inertia {
            // rounding in the mean update can cost an ulp near convergence;
            // keep the better state
            break;
        }
        (centroids, labels, dists) = (next_centroids, next_labels, next_dists);
        history.push(next);
        let converged = inertia <= 0.0 || (inertia - next) / inertia < config.tolerance;
        inertia = next;
        if converged {
            break;
        }
    }
    repair_empty(points, &mut centroids, &mut labels, &mut dists);
    let final_inertia: f64 = dists.iter().sum();
    if final_inertia < inertia {
        inertia = final_inertia;
        history.push(inertia);
    }

    Ok(KMeansFit {
        centroids,
        labels,
        inertia,
        inertia_history: history,
        iterations,
    })
}
