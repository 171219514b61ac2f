//! Lloyd and mini-batch k-means with k-means++ seeding, plus the silhouette
//! coefficient used to pick k.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{manhattan, squared_euclidean, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distance {
    Euclidean,
    Manhattan,
}

impl Distance {
    /// Per-point contribution to the clustering objective: squared Euclidean
    /// distance, or plain L1 distance for the Manhattan variant.
    #[inline]
    pub fn cost(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => squared_euclidean(a, b),
            Distance::Manhattan => manhattan(a, b),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Distance::Euclidean => "euclidean",
            Distance::Manhattan => "manhattan",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "euclidean" => Some(Distance::Euclidean),
            "manhattan" => Some(Distance::Manhattan),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOptions {
    pub max_iter: usize,
    /// Convergence threshold on the largest squared centroid shift, relative
    /// to the mean per-column variance of the data.
    pub tol: f64,
    pub seed: u64,
    /// Rows per mini-batch; `None` runs full-batch Lloyd iterations.
    pub minibatch_size: Option<usize>,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-6,
            seed: 0,
            minibatch_size: None,
        }
    }
}

pub const DEFAULT_MINIBATCH: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    pub centroids: Matrix,
    pub k: usize,
    pub distance: Distance,
    pub inertia: f64,
    pub iterations_run: usize,
    /// Full-batch objective after each assignment step (Lloyd mode only);
    /// the last entry equals `inertia`.
    pub objective_trace: Vec<f64>,
}

impl KMeansModel {
    /// Nearest centroid and its cost; ties go to the lower cluster index.
    #[inline]
    pub fn nearest(&self, row: &[f64]) -> (usize, f64) {
        nearest(&self.centroids, row, self.distance)
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        self.nearest(row).0
    }

    pub fn assign(&self, x: &Matrix) -> Vec<usize> {
        x.iter_rows().map(|r| self.predict(r)).collect()
    }

    pub fn objective(&self, x: &Matrix) -> f64 {
        x.iter_rows().map(|r| self.nearest(r).1).sum()
    }
}

#[inline]
fn nearest(centroids: &Matrix, row: &[f64], distance: Distance) -> (usize, f64) {
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for (j, c) in centroids.iter_rows().enumerate() {
        let d = distance.cost(row, c);
        if d < best_cost {
            best_cost = d;
            best = j;
        }
    }
    (best, best_cost)
}

fn mean_column_variance(x: &Matrix) -> f64 {
    let n = x.rows() as f64;
    let mut total = 0.0;
    for j in 0..x.cols() {
        let mean = (0..x.rows()).map(|i| x.get(i, j)).sum::<f64>() / n;
        total += (0..x.rows()).map(|i| (x.get(i, j) - mean).powi(2)).sum::<f64>() / n;
    }
    total / x.cols().max(1) as f64
}

/// k-means++ seeding over the given rows.
fn plus_plus_init(
    x: &Matrix,
    rows: &[usize],
    k: usize,
    distance: Distance,
    rng: &mut ChaCha8Rng,
) -> Matrix {
    let mut centroids = Matrix::zeros(0, x.cols());
    let first = rows[rng.gen_range(0..rows.len())];
    centroids.push_row(x.row(first)).expect("width");
    let mut d: Vec<f64> = rows
        .iter()
        .map(|&i| distance.cost(x.row(i), x.row(first)))
        .collect();
    while centroids.rows() < k {
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = d.len() - 1;
            for (p, &w) in d.iter().enumerate() {
                if target < w {
                    chosen = p;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.gen_range(0..rows.len())
        };
        let c = x.row(rows[pick]).to_vec();
        centroids.push_row(&c).expect("width");
        for (p, &i) in rows.iter().enumerate() {
            let dc = distance.cost(x.row(i), &c);
            if dc < d[p] {
                d[p] = dc;
            }
        }
    }
    centroids
}

fn coordinate_median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Moves each empty cluster onto the point that currently pays the highest
/// cost, provided that point's own cluster keeps at least one member.
fn reseed_empty(
    x: &Matrix,
    centroids: &mut Matrix,
    labels: &mut [usize],
    costs: &mut [f64],
    sizes: &mut [usize],
) {
    for e in 0..centroids.rows() {
        if sizes[e] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_cost = 0.0;
        for (i, &c) in costs.iter().enumerate() {
            if c > far_cost && sizes[labels[i]] > 1 {
                far_cost = c;
                far = Some(i);
            }
        }
        let Some(p) = far else { continue };
        centroids.row_mut(e).copy_from_slice(x.row(p));
        sizes[labels[p]] -= 1;
        sizes[e] = 1;
        labels[p] = e;
        costs[p] = 0.0;
    }
}

pub fn kmeans_fit(
    x: &Matrix,
    k: usize,
    distance: Distance,
    opts: &KMeansOptions,
) -> Result<KMeansModel> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > x.rows() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {} available rows",
            x.rows()
        )));
    }
    if !x.all_finite() {
        return Err(Error::Data("k-means input contains non-finite values".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    match opts.minibatch_size {
        Some(b) if b < x.rows() => minibatch(x, k, distance, opts, b, &mut rng),
        _ => lloyd(x, k, distance, opts, &mut rng),
    }
}

fn lloyd(
    x: &Matrix,
    k: usize,
    distance: Distance,
    opts: &KMeansOptions,
    rng: &mut ChaCha8Rng,
) -> Result<KMeansModel> {
    let n = x.rows();
    let f = x.cols();
    let all: Vec<usize> = (0..n).collect();
    let mut centroids = plus_plus_init(x, &all, k, distance, rng);
    let threshold = opts.tol * mean_column_variance(x).max(f64::MIN_POSITIVE);
    let mut labels = vec![0; n];
    let mut costs = vec![0.0; n];
    let mut trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..opts.max_iter.max(1) {
        let mut sizes = vec![0; k];
        for i in 0..n {
            let (j, c) = nearest(&centroids, x.row(i), distance);
            labels[i] = j;
            costs[i] = c;
            sizes[j] += 1;
        }
        reseed_empty(x, &mut centroids, &mut labels, &mut costs, &mut sizes);
        trace.push(costs.iter().sum());
        iterations += 1;

        let mut next = Matrix::zeros(k, f);
        match distance {
            Distance::Euclidean => {
                for i in 0..n {
                    let row = x.row(i);
                    for (c, v) in next.row_mut(labels[i]).iter_mut().zip(row) {
                        *c += v;
                    }
                }
                for j in 0..k {
                    if sizes[j] == 0 {
                        next.row_mut(j).copy_from_slice(centroids.row(j));
                    } else {
                        let inv = 1.0 / sizes[j] as f64;
                        next.row_mut(j).iter_mut().for_each(|c| *c *= inv);
                    }
                }
            }
            Distance::Manhattan => {
                let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
                for (i, &l) in labels.iter().enumerate() {
                    members[l].push(i);
                }
                let mut buf = Vec::new();
                for j in 0..k {
                    if members[j].is_empty() {
                        next.row_mut(j).copy_from_slice(centroids.row(j));
                        continue;
                    }
                    for col in 0..f {
                        buf.clear();
                        buf.extend(members[j].iter().map(|&i| x.get(i, col)));
                        next.set(j, col, coordinate_median(&mut buf));
                    }
                }
            }
        }
        let shift = (0..k)
            .map(|j| squared_euclidean(centroids.row(j), next.row(j)))
            .fold(0.0, f64::max);
        centroids = next;
        if shift <= threshold {
            break;
        }
    }

    let inertia: f64 = x.iter_rows().map(|r| nearest(&centroids, r, distance).1).sum();
    trace.push(inertia);
    Ok(KMeansModel {
        centroids,
        k,
        distance,
        inertia,
        iterations_run: iterations,
        objective_trace: trace,
    })
}

fn minibatch(
    x: &Matrix,
    k: usize,
    distance: Distance,
    opts: &KMeansOptions,
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<KMeansModel> {
    let n = x.rows();
    let init_rows: Vec<usize> = if n > 3 * batch {
        let mut v = sample(rng, n, (3 * batch).max(k)).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..n).collect()
    };
    let mut centroids = plus_plus_init(x, &init_rows, k, distance, rng);
    let threshold = opts.tol * mean_column_variance(x).max(f64::MIN_POSITIVE);
    let mut counts = vec![0usize; k];
    let mut iterations = 0;
    let mut batch_labels = vec![0; batch];

    for _ in 0..opts.max_iter.max(1) {
        let idx: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..n)).collect();
        for (slot, &i) in batch_labels.iter_mut().zip(&idx) {
            *slot = nearest(&centroids, x.row(i), distance).0;
        }
        let before = centroids.clone();
        for (&i, &j) in idx.iter().zip(&batch_labels) {
            counts[j] += 1;
            let eta = 1.0 / counts[j] as f64;
            for (c, v) in centroids.row_mut(j).iter_mut().zip(x.row(i)) {
                *c += eta * (v - *c);
            }
        }
        iterations += 1;
        let shift = (0..k)
            .map(|j| squared_euclidean(before.row(j), centroids.row(j)))
            .fold(0.0, f64::max);
        if shift <= threshold {
            break;
        }
    }

    let mut labels = vec![0; n];
    let mut costs = vec![0.0; n];
    let mut sizes = vec![0; k];
    for i in 0..n {
        let (j, c) = nearest(&centroids, x.row(i), distance);
        labels[i] = j;
        costs[i] = c;
        sizes[j] += 1;
    }
    reseed_empty(x, &mut centroids, &mut labels, &mut costs, &mut sizes);
    let inertia: f64 = x.iter_rows().map(|r| nearest(&centroids, r, distance).1).sum();
    Ok(KMeansModel {
        centroids,
        k,
        distance,
        inertia,
        iterations_run: iterations,
        objective_trace: vec![inertia],
    })
}

/// Mean silhouette coefficient with Euclidean distances.
///
/// Samples alone in their cluster score 0, as do samples with `a = b = 0`.
pub fn silhouette(x: &Matrix, assignments: &[usize]) -> Result<f64> {
    if x.rows() != assignments.len() {
        return Err(Error::WidthMismatch {
            context: "silhouette assignments",
            expected: x.rows(),
            actual: assignments.len(),
        });
    }
    let k = assignments.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    let clusters: Vec<usize> = (0..k).filter(|&c| sizes[c] > 0).collect();
    if clusters.len() < 2 {
        return Err(Error::Data(
            "silhouette needs at least two non-empty clusters".into(),
        ));
    }
    let n = x.rows();
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        let xi = x.row(i);
        for j in 0..n {
            if j != i {
                sums[assignments[j]] += squared_euclidean(xi, x.row(j)).sqrt();
            }
        }
        let own = assignments[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = clusters
            .iter()
            .filter(|&&c| c != own)
            .map(|&c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Matrix {
        Matrix::column_vector(v)
    }

    fn sorted_centroids(m: &KMeansModel) -> Vec<f64> {
        let mut c = m.centroids.column(0);
        c.sort_by(f64::total_cmp);
        c
    }

    #[test]
    fn two_points_two_clusters() {
        let m = kmeans_fit(&col(&[0.0, 10.0]), 2, Distance::Euclidean, &KMeansOptions::default())
            .unwrap();
        assert_eq!(sorted_centroids(&m), vec![0.0, 10.0]);
        assert_eq!(m.inertia, 0.0);
    }

    /// Brute force over every 2-partition of {0, 2, 10, 12}.
    #[test]
    fn four_points_matches_enumeration() {
        let pts = [0.0, 2.0, 10.0, 12.0];
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << pts.len()) - 1 {
            let mut cost = 0.0;
            for side in [true, false] {
                let members: Vec<f64> = (0..pts.len())
                    .filter(|&i| ((mask >> i) & 1 == 1) == side)
                    .map(|i| pts[i])
                    .collect();
                let mean = members.iter().sum::<f64>() / members.len() as f64;
                cost += members.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
            }
            best = best.min(cost);
        }
        assert_eq!(best, 4.0);
        for seed in 0..5 {
            let opts = KMeansOptions {
                seed,
                ..KMeansOptions::default()
            };
            let m = kmeans_fit(&col(&pts), 2, Distance::Euclidean, &opts).unwrap();
            assert_eq!(sorted_centroids(&m), vec![1.0, 11.0]);
            assert!((m.inertia - best).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicate_data_has_zero_inertia() {
        let x = col(&[3.0; 6]);
        for k in 1..=4 {
            for d in [Distance::Euclidean, Distance::Manhattan] {
                let m = kmeans_fit(&x, k, d, &KMeansOptions::default()).unwrap();
                assert_eq!(m.inertia, 0.0);
                assert!(m.centroids.all_finite());
            }
        }
    }

    #[test]
    fn invalid_k() {
        let x = col(&[1.0, 2.0]);
        assert!(kmeans_fit(&x, 0, Distance::Euclidean, &KMeansOptions::default()).is_err());
        assert!(kmeans_fit(&x, 3, Distance::Euclidean, &KMeansOptions::default()).is_err());
    }

    #[test]
    fn manhattan_uses_medians() {
        let x = col(&[0.0, 1.0, 100.0, 200.0, 201.0, 202.0]);
        let m = kmeans_fit(&x, 2, Distance::Manhattan, &KMeansOptions::default()).unwrap();
        let t = &m.objective_trace;
        assert!(t.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        assert!((m.inertia - m.objective(&x)).abs() < 1e-9);
    }

    #[test]
    fn minibatch_finds_separated_blobs() {
        let mut rows = Vec::new();
        for i in 0..3000 {
            let base = (i % 3) as f64 * 50.0;
            rows.push([base + (i % 7) as f64 * 0.1, base - (i % 5) as f64 * 0.1]);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let opts = KMeansOptions {
            minibatch_size: Some(256),
            seed: 4,
            ..KMeansOptions::default()
        };
        let m = kmeans_fit(&x, 3, Distance::Euclidean, &opts).unwrap();
        let labels = m.assign(&x);
        for i in 3..3000 {
            assert_eq!(labels[i], labels[i % 3]);
        }
    }

    #[test]
    fn silhouette_examples() {
        let s = silhouette(&col(&[0.0, 0.0, 10.0, 10.0]), &[0, 0, 1, 1]).unwrap();
        assert_eq!(s, 1.0);
        let s = silhouette(&col(&[5.0; 4]), &[0, 1, 0, 1]).unwrap();
        assert_eq!(s, 0.0);
        // per point: 9.5/10.5, 8.5/9.5, 8.5/9.5, 9.5/10.5
        let expected = (2.0 * (9.5 / 10.5) + 2.0 * (8.5 / 9.5)) / 4.0;
        let s = silhouette(&col(&[0.0, 1.0, 10.0, 11.0]), &[0, 0, 1, 1]).unwrap();
        assert!((s - expected).abs() < 1e-12);
        assert!((s - 0.899749).abs() < 1e-6);
    }

    #[test]
    fn silhouette_single_cluster_fatal() {
        assert!(silhouette(&col(&[1.0, 2.0]), &[0, 0]).is_err());
    }

    #[test]
    fn silhouette_singleton_scores_zero() {
        // the lone point at 100 contributes 0; the pair scores (b-a)/b each
        let s = silhouette(&col(&[0.0, 1.0, 100.0]), &[0, 0, 1]).unwrap();
        let p0 = (100.0 - 1.0) / 100.0;
        let p1 = (99.0 - 1.0) / 99.0;
        assert!((s - (p0 + p1) / 3.0).abs() < 1e-12);
    }
}
