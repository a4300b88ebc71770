//! Balanced k-means and exact nearest-centroid search.
//!
//! Assignment is capacity constrained: every centroid accepts at most
//! `ceil(n / k * balance_slack)` points per round. Points are placed in
//! decreasing order of the gap between their nearest and second-nearest
//! centroid, each going to the nearest centroid that still has room.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vector::{squared_l2, DistanceMetric};

/// Rows per rayon task in the assignment kernels.
const PAR_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansParams<T> {
    pub k: usize,
    /// Lloyd iterations. With zero iterations and explicit initial centroids
    /// only the capacity-constrained assignment is computed.
    pub iterations: usize,
    /// Row-major `k x dim` seed centroids; k-means++ seeding when absent.
    pub initial_centroids: Option<Vec<T>>,
    pub balance_slack: f64,
    pub seed: u64,
}

impl<T> KMeansParams<T> {
    pub fn new(k: usize, iterations: usize) -> Self {
        Self {
            k,
            iterations,
            initial_centroids: None,
            balance_slack: 1.25,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_slack(mut self, slack: f64) -> Self {
        self.balance_slack = slack;
        self
    }

    pub fn with_initial_centroids(mut self, centroids: Vec<T>) -> Self {
        self.initial_centroids = Some(centroids);
        self
    }
}

/// Output of [`balanced_kmeans`]. `assignments` and `distances` are aligned
/// with the input rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult<T> {
    pub dim: usize,
    /// Row-major `k x dim`.
    pub centroids: Vec<T>,
    pub assignments: Vec<usize>,
    /// Squared L2 distance of each row to its assigned centroid.
    pub distances: Vec<T>,
    /// Mean of `distances`.
    pub error: f64,
    /// Number of point-to-centroid distance evaluations performed.
    pub distance_evals: u64,
}

impl<T: Scalar> ClusteringResult<T> {
    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, c: usize) -> &[T] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Row indices grouped by cluster, each group in ascending row order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.k()];
        for (row, &a) in self.assignments.iter().enumerate() {
            groups[a].push(row);
        }
        groups
    }
}

/// Maximum points one centroid may take in an assignment round.
pub fn cluster_capacity(n: usize, k: usize, slack: f64) -> usize {
    let cap = (n as f64 / k as f64 * slack).ceil() as usize;
    cap.max(n.div_ceil(k))
}

#[inline]
fn cmp_scalar<T: Scalar>(a: T, b: T) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Cluster `data` (row-major, `dim` columns) into `params.k` groups.
pub fn balanced_kmeans<T: Scalar>(
    data: &[T],
    dim: usize,
    params: &KMeansParams<T>,
) -> Result<ClusteringResult<T>> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: data.len(),
        });
    }
    let n = data.len() / dim;
    let k = params.k;
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    if !(params.balance_slack >= 1.0) {
        return Err(Error::Spec("balance slack must be >= 1.0".into()));
    }
    let cap = cluster_capacity(n, k, params.balance_slack);
    let mut evals = 0u64;

    let mut centroids = match &params.initial_centroids {
        Some(init) => {
            if init.len() != k * dim {
                return Err(Error::Dimension {
                    expected: k * dim,
                    got: init.len(),
                });
            }
            init.clone()
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            kmeans_plus_plus(data, dim, k, &mut rng, &mut evals)
        }
    };
    let frozen_seeds = params.iterations == 0 && params.initial_centroids.is_some();

    for _ in 0..params.iterations {
        let (assign, _) = assign_balanced(data, dim, &mut centroids, cap, &mut evals);
        centroids = cluster_means(data, dim, k, &assign);
    }
    let (assignments, mut distances) =
        assign_balanced(data, dim, &mut centroids, cap, &mut evals);
    if !frozen_seeds {
        centroids = cluster_means(data, dim, k, &assignments);
        distances = data
            .par_chunks(dim)
            .zip(assignments.par_iter())
            .with_min_len(PAR_CHUNK)
            .map(|(row, &a)| squared_l2(row, &centroids[a * dim..(a + 1) * dim]))
            .collect();
        evals += n as u64;
    }
    let error = distances.iter().map(|d| d.as_f64()).sum::<f64>() / n as f64;
    Ok(ClusteringResult {
        dim,
        centroids,
        assignments,
        distances,
        error,
        distance_evals: evals,
    })
}

fn kmeans_plus_plus<T: Scalar>(
    data: &[T],
    dim: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
    evals: &mut u64,
) -> Vec<T> {
    let n = data.len() / dim;
    let mut centroids = Vec::with_capacity(k * dim);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centroids.extend_from_slice(&data[first * dim..(first + 1) * dim]);
    let mut nearest: Vec<f64> = data
        .par_chunks(dim)
        .with_min_len(PAR_CHUNK)
        .map(|row| squared_l2(row, &centroids[..dim]).as_f64())
        .collect();
    *evals += n as u64;
    for _ in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in nearest.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if target < w {
                    pick = Some(i);
                    break;
                }
                target -= w;
            }
            // rounding can leave `target` just past the last positive weight
            pick.unwrap_or_else(|| nearest.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        let c = data[pick * dim..(pick + 1) * dim].to_vec();
        nearest
            .par_iter_mut()
            .zip(data.par_chunks(dim))
            .with_min_len(PAR_CHUNK)
            .for_each(|(best, row)| {
                let d = squared_l2(row, &c).as_f64();
                if d < *best {
                    *best = d;
                }
            });
        *evals += n as u64;
        centroids.extend_from_slice(&c);
    }
    centroids
}

/// Capacity-constrained assignment. Clusters left empty are re-seeded from
/// the point farthest from its centroid, which moves that centroid.
fn assign_balanced<T: Scalar>(
    data: &[T],
    dim: usize,
    centroids: &mut [T],
    cap: usize,
    evals: &mut u64,
) -> (Vec<usize>, Vec<T>) {
    let n = data.len() / dim;
    let k = centroids.len() / dim;
    let cents: &[T] = centroids;
    let nearest_two: Vec<(usize, T, T)> = data
        .par_chunks(dim)
        .with_min_len(PAR_CHUNK / k.max(1) + 1)
        .map(|row| {
            let mut best = (0usize, T::infinity());
            let mut second = T::infinity();
            for (c, cent) in cents.chunks_exact(dim).enumerate() {
                let d = squared_l2(row, cent);
                if d < best.1 {
                    second = best.1;
                    best = (c, d);
                } else if d < second {
                    second = d;
                }
            }
            (best.0, best.1, second)
        })
        .collect();
    *evals += (n * k) as u64;

    let mut order: Vec<usize> = (0..n).collect();
    if k > 1 {
        order.sort_by(|&a, &b| {
            let ga = nearest_two[a].2 - nearest_two[a].1;
            let gb = nearest_two[b].2 - nearest_two[b].1;
            cmp_scalar(gb, ga).then(a.cmp(&b))
        });
    }

    let mut counts = vec![0usize; k];
    let mut assign = vec![0usize; n];
    let mut dists = vec![T::zero(); n];
    for &p in &order {
        let (best, d, _) = nearest_two[p];
        if counts[best] < cap {
            counts[best] += 1;
            assign[p] = best;
            dists[p] = d;
            continue;
        }
        let row = &data[p * dim..(p + 1) * dim];
        let mut choice = (usize::MAX, T::infinity());
        for (c, cent) in cents.chunks_exact(dim).enumerate() {
            if counts[c] >= cap {
                continue;
            }
            let d = squared_l2(row, cent);
            if choice.0 == usize::MAX || d < choice.1 {
                choice = (c, d);
            }
        }
        *evals += k as u64;
        counts[choice.0] += 1;
        assign[p] = choice.0;
        dists[p] = choice.1;
    }

    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let donor = (0..n)
            .filter(|&p| counts[assign[p]] > 1)
            .max_by(|&a, &b| cmp_scalar(dists[a], dists[b]).then(b.cmp(&a)))
            .expect("n >= k leaves a cluster with two or more points");
        counts[assign[donor]] -= 1;
        counts[c] = 1;
        assign[donor] = c;
        dists[donor] = T::zero();
        centroids[c * dim..(c + 1) * dim].copy_from_slice(&data[donor * dim..(donor + 1) * dim]);
    }
    (assign, dists)
}

/// Member means accumulated in `f64`. Clusters without members keep a zero row.
pub fn cluster_means<T: Scalar>(data: &[T], dim: usize, k: usize, assign: &[usize]) -> Vec<T> {
    let mut sums = vec![0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (row, &a) in data.chunks_exact(dim).zip(assign) {
        counts[a] += 1;
        for (s, x) in sums[a * dim..(a + 1) * dim].iter_mut().zip(row) {
            *s += x.as_f64();
        }
    }
    sums.chunks_exact(dim)
        .zip(&counts)
        .flat_map(|(s, &c)| {
            let inv = if c > 0 { 1.0 / c as f64 } else { 0.0 };
            s.iter().map(move |x| T::from_f64_lossy(x * inv))
        })
        .collect()
}

/// Exact top-`k` centroids for `query`, ascending by distance with ties
/// broken by lower index.
pub fn knn_centroids<T: Scalar>(
    query: &[T],
    centroids: &[T],
    dim: usize,
    k: usize,
    metric: DistanceMetric,
) -> Result<Vec<(usize, T)>> {
    if query.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: query.len(),
        });
    }
    let n = centroids.len().checked_div(dim).unwrap_or(0);
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let mut all: Vec<(usize, T)> = centroids
        .chunks_exact(dim)
        .map(|c| metric.eval(query, c))
        .enumerate()
        .collect();
    let by_dist = |a: &(usize, T), b: &(usize, T)| cmp_scalar(a.1, b.1).then(a.0.cmp(&b.0));
    if k < n {
        all.select_nth_unstable_by(k - 1, by_dist);
        all.truncate(k);
    }
    all.sort_by(by_dist);
    Ok(all)
}

/// Nearest centroid under squared L2, ties to the lower index.
#[inline]
pub fn nearest_centroid<T: Scalar>(v: &[T], centroids: &[T], dim: usize) -> (usize, T) {
    let mut best = (0usize, T::infinity());
    for (c, cent) in centroids.chunks_exact(dim).enumerate() {
        let d = squared_l2(v, cent);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}
