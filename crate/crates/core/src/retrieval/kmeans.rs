//! Lloyd's k-means with k-means++ seeding.

use rand::Rng;

use super::RetrievalError;
use crate::seed::SeedKey;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster index per input point.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cluster)
            .map(|(i, _)| i)
    }

    pub fn non_empty_clusters(&self) -> usize {
        let mut seen = vec![false; self.k()];
        for &c in &self.assignments {
            seen[c] = true;
        }
        seen.iter().filter(|&&s| s).count()
    }
}

pub fn squared_distance(a: &[f32], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - y;
            d * d
        })
        .sum()
}

fn to_f64(point: &[f32]) -> Vec<f64> {
    point.iter().map(|&v| f64::from(v)).collect()
}

fn nearest(point: &[f32], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init<R: Rng>(points: &[&[f32]], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![to_f64(points[first])];
    let mut min_dist: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();

    while centroids.len() < k {
        let total: f64 = min_dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in min_dist.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                pick = Some(i);
                if target < d {
                    break;
                }
                target -= d;
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // Every remaining point coincides with a centroid.
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[next] = true;
        let centroid = to_f64(points[next]);
        for (i, p) in points.iter().enumerate() {
            min_dist[i] = min_dist[i].min(squared_distance(p, &centroid));
        }
        centroids.push(centroid);
    }
    centroids
}

/// Clusters `points` into `k` groups. Deterministic for a fixed `seed`.
///
/// Empty clusters are reseeded with the point farthest from its current
/// centroid.
pub fn kmeans(
    points: &[&[f32]],
    k: usize,
    iters: usize,
    seed: u64,
) -> Result<Clustering, RetrievalError> {
    let n = points.len();
    if k == 0 {
        return Err(RetrievalError::InvalidConfig("k-means needs k >= 1".into()));
    }
    if k > n {
        return Err(RetrievalError::TooManyClusters { k, rows: n });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(RetrievalError::DimMismatch(dim, 0));
    }

    let mut rng = SeedKey::new("kmeans")
        .with_u64(seed)
        .with_u64(k as u64)
        .with_u64(n as u64)
        .rng();
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..iters.max(1) {
        iterations += 1;
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
            dists[i] = d;
        }

        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            let c = assignments[i];
            counts[c] += 1;
            for (s, &v) in sums[c].iter_mut().zip(p.iter()) {
                *s += f64::from(v);
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .filter(|&i| !taken[i] && counts[assignments[i]] > 1)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
                if let Some(far) = far {
                    taken[far] = true;
                    let old = assignments[far];
                    counts[old] -= 1;
                    for (s, &v) in sums[old].iter_mut().zip(points[far].iter()) {
                        *s -= f64::from(v);
                    }
                    assignments[far] = c;
                    counts[c] = 1;
                    sums[c] = to_f64(points[far]);
                    dists[far] = 0.0;
                    changed = true;
                }
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }

    let inertia = points
        .iter()
        .zip(&assignments)
        .map(|(p, &c)| squared_distance(p, &centroids[c]))
        .sum();
    Ok(Clustering {
        assignments,
        centroids,
        inertia,
        iterations,
        converged,
    })
}
