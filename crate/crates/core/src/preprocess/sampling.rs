//! Choosing k by silhouette and drawing a fixed share of every cluster.

use std::collections::HashMap;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kmeans::{kmeans_fit, silhouette, Distance, KMeansModel, KMeansOptions};
use crate::error::{Error, Result};
use crate::hpo::{bo_gp_optimize_with, get_int, GpOptions, SearchSpace};
use crate::ingest::LabeledDataset;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct TuneKOptions {
    pub k_min: usize,
    pub k_max: usize,
    pub budget: usize,
    pub seed: u64,
    /// Rows in the fixed subsample on which silhouette is scored.
    pub eval_rows: usize,
    pub distance: Distance,
    pub kmeans: KMeansOptions,
}

impl Default for TuneKOptions {
    fn default() -> Self {
        Self {
            k_min: 2,
            k_max: 20,
            budget: 20,
            seed: 0,
            eval_rows: 2000,
            distance: Distance::Euclidean,
            kmeans: KMeansOptions::default(),
        }
    }
}

/// Chooses k by maximizing silhouette with the GP optimizer; returns the
/// winning k and its fitted model.
pub fn tune_k(x: &Matrix, opts: &TuneKOptions) -> Result<(usize, KMeansModel)> {
    if opts.k_min < 2 || opts.k_min > opts.k_max || opts.k_max > x.rows() {
        return Err(Error::InvalidArgument(format!(
            "k range [{}, {}] must lie within [2, {}]",
            opts.k_min,
            opts.k_max,
            x.rows()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed_5a3f);
    let eval_idx: Vec<usize> = if x.rows() > opts.eval_rows {
        let mut v = index::sample(&mut rng, x.rows(), opts.eval_rows).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..x.rows()).collect()
    };
    let eval = x.select_rows(&eval_idx);
    let log = opts.k_max >= 16 * opts.k_min;
    let space = SearchSpace::default().int("k", opts.k_min as i64, opts.k_max as i64, log)?;
    let mut models: HashMap<usize, KMeansModel> = HashMap::new();
    let outcome = bo_gp_optimize_with(
        |a| {
            let k = get_int(a, "k").expect("k is always active") as usize;
            let model = kmeans_fit(
                x,
                k,
                opts.distance,
                &KMeansOptions {
                    seed: opts.seed,
                    ..opts.kmeans.clone()
                },
            )?;
            let s = silhouette(&eval, &model.assign(&eval))?;
            log::debug!("tune_k: k={k} silhouette={s:.6}");
            models.insert(k, model);
            Ok(-s)
        },
        &space,
        &GpOptions {
            budget: opts.budget,
            seed: opts.seed,
            ..GpOptions::default()
        },
    )?;
    let k = get_int(&outcome.best.assignment, "k").expect("k is always active") as usize;
    let model = models
        .remove(&k)
        .ok_or_else(|| Error::Invariant("best k has no fitted model".into()))?;
    Ok((k, model))
}

/// Draws `ceil(fraction·|cluster|)` rows uniformly from every cluster of
/// `model`. Kept rows stay in their original order.
pub fn cluster_sample(
    d: &LabeledDataset,
    model: &KMeansModel,
    fraction: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    Ok(d.subset(&cluster_sample_indices(&d.features, model, fraction, seed)?))
}

/// Sorted row indices chosen by [`cluster_sample`], with clusters assigned
/// on `x` (which may be a transformed copy of the dataset's features).
pub fn cluster_sample_indices(x: &Matrix, model: &KMeansModel, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if x.rows() == 0 {
        return Err(Error::Data("cannot sample an empty dataset".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sampling fraction {fraction} outside (0, 1]"
        )));
    }
    if model.centroids.cols() != x.cols() {
        return Err(Error::WidthMismatch {
            context: "cluster sampling",
            expected: model.centroids.cols(),
            actual: x.cols(),
        });
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); model.k];
    for (i, row) in x.iter_rows().enumerate() {
        members[model.predict(row)].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for m in members.iter_mut() {
        let take = ((fraction * m.len() as f64).ceil() as usize).min(m.len());
        m.shuffle(&mut rng);
        keep.extend_from_slice(&m[..take]);
    }
    keep.sort_unstable();
    Ok(keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Box-Muller standard normal draw.
    fn gauss<R: Rng>(rng: &mut R) -> f64 {
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        let v: f64 = rng.gen();
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }

    fn blobs(centers: &[(f64, f64)], per: usize, sd: f64, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for &(cx, cy) in centers {
            for _ in 0..per {
                rows.push(vec![
                    cx + sd * gauss(&mut rng),
                    cy + sd * gauss(&mut rng),
                ]);
            }
        }
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn two_blobs_pick_two() {
        let x = blobs(&[(0.0, 0.0), (20.0, 20.0)], 60, 1.0, 3);
        let opts = TuneKOptions {
            k_min: 2,
            k_max: 10,
            budget: 9,
            ..TuneKOptions::default()
        };
        let (k, model) = tune_k(&x, &opts).unwrap();
        // exhaustive sweep oracle
        let best = (2..=10)
            .max_by(|&a, &b| {
                let s = |k| {
                    let m = kmeans_fit(&x, k, Distance::Euclidean, &KMeansOptions::default())
                        .unwrap();
                    silhouette(&x, &m.assign(&x)).unwrap()
                };
                s(a).total_cmp(&s(b)).then(b.cmp(&a))
            })
            .unwrap();
        assert_eq!(best, 2);
        assert_eq!(k, 2);
        assert_eq!(model.k, 2);
    }

    #[test]
    fn degenerate_ranges_and_budgets() {
        let x = blobs(&[(0.0, 0.0), (9.0, 0.0), (0.0, 9.0)], 20, 0.5, 1);
        let (k, _) = tune_k(
            &x,
            &TuneKOptions {
                k_min: 2,
                k_max: 2,
                ..TuneKOptions::default()
            },
        )
        .unwrap();
        assert_eq!(k, 2);
        let (k, m) = tune_k(
            &x,
            &TuneKOptions {
                k_min: 2,
                k_max: 8,
                budget: 1,
                ..TuneKOptions::default()
            },
        )
        .unwrap();
        assert_eq!(m.k, k);
        assert!(tune_k(
            &x,
            &TuneKOptions {
                k_min: 1,
                ..TuneKOptions::default()
            }
        )
        .is_err());
    }

    fn clustered_dataset() -> (LabeledDataset, KMeansModel) {
        let centers: Vec<(f64, f64)> = (0..10).map(|i| (100.0 * i as f64, 0.0)).collect();
        let x = blobs(&centers, 100, 1.0, 8);
        let labels: Vec<String> = (0..1000)
            .map(|i| if i % 7 == 0 { "DoS" } else { "Normal" }.to_string())
            .collect();
        let d = LabeledDataset::from_string_labels(x, &labels, vec!["a".into(), "b".into()])
            .unwrap();
        let model = KMeansModel {
            centroids: Matrix::from_rows(
                &centers.iter().map(|&(a, b)| vec![a, b]).collect::<Vec<_>>(),
            )
            .unwrap(),
            k: 10,
            distance: Distance::Euclidean,
            inertia: 0.0,
            iterations_run: 0,
            objective_trace: vec![],
        };
        (d, model)
    }

    #[test]
    fn ten_per_cluster() {
        let (d, model) = clustered_dataset();
        let s = cluster_sample(&d, &model, 0.1, 4).unwrap();
        assert_eq!(s.n_rows(), 100);
        let mut per = [0usize; 10];
        for row in s.features.iter_rows() {
            per[model.predict(row)] += 1;
        }
        assert_eq!(per, [10; 10]);
        assert_eq!(s, cluster_sample(&d, &model, 0.1, 4).unwrap());
    }

    #[test]
    fn full_fraction_keeps_everything() {
        let (d, model) = clustered_dataset();
        let s = cluster_sample(&d, &model, 1.0, 0).unwrap();
        assert_eq!(s, d);
        assert!(cluster_sample(&d, &model, 0.0, 0).is_err());
    }

    #[test]
    fn uneven_clusters_round_up() {
        let (d, model) = clustered_dataset();
        let keep: Vec<usize> = (0..1000).filter(|i| i % 100 < 13 + i / 100).collect();
        let uneven = d.subset(&keep);
        let s = cluster_sample(&uneven, &model, 0.1, 2).unwrap();
        let mut sizes = [0usize; 10];
        for row in uneven.features.iter_rows() {
            sizes[model.predict(row)] += 1;
        }
        let mut per = [0usize; 10];
        for row in s.features.iter_rows() {
            per[model.predict(row)] += 1;
        }
        for c in 0..10 {
            let exact = 0.1 * sizes[c] as f64;
            assert!((per[c] as f64 - exact).abs() <= 1.0);
            assert_eq!(per[c], exact.ceil() as usize);
        }
    }
}
