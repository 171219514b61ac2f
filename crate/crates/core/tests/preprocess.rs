//! Scaling, oversampling and cluster sampling through the public API.

use hybrid_ids::ingest::LabeledDataset;
use hybrid_ids::preprocess::{
    cluster_sample, kmeans_fit, smote, tune_k, zscore_apply, zscore_fit_apply, Distance, KMeansOptions,
    SmoteConfig, TuneKOptions,
};
use hybrid_ids::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gaussian-ish blobs around `centers`, `per` rows each, labeled by blob.
fn blobs(centers: &[[f64; 2]], per: &[usize], spread: f64, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, (center, &n)) in centers.iter().zip(per).enumerate() {
        for _ in 0..n {
            rows.push(vec![
                center[0] + spread * (rng.gen::<f64>() - 0.5),
                center[1] + spread * (rng.gen::<f64>() - 0.5),
            ]);
            labels.push(c);
        }
    }
    let names = (0..centers.len())
        .map(|c| if c == 0 { "Normal".to_string() } else { format!("A{c}") })
        .collect();
    LabeledDataset::new(Matrix::from_rows(&rows).unwrap(), labels, vec!["x".into(), "y".into()], names).unwrap()
}

#[test]
fn zscore_matches_column_moments() {
    let d = blobs(&[[0.0, 10.0], [5.0, -3.0]], &[300, 200], 4.0, 1);
    let (scaler, z) = zscore_fit_apply(&d.features).unwrap();
    for j in 0..2 {
        let col = z.column(j);
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-9);
    }
    assert_eq!(zscore_apply(&scaler, &d.features).unwrap(), z);
}

#[test]
fn smote_raises_minorities_inside_their_hull() {
    let d = blobs(&[[0.0, 0.0], [20.0, 20.0], [-20.0, 5.0]], &[500, 40, 7], 2.0, 2);
    let cfg = SmoteConfig { k_neighbors: 5, target_count: 300, seed: 9 };
    let (out, report) = smote(&d, &cfg).unwrap();
    assert_eq!(out.class_counts(), vec![500, 300, 300]);
    assert_eq!(report.synthesized.iter().map(|s| s.1).sum::<usize>(), 553);
    // originals stay in place; synthetic rows fall in the class bounding box
    assert_eq!(out.features.select_rows(&(0..d.n_rows()).collect::<Vec<_>>()), d.features);
    for c in 1..3 {
        let members: Vec<&[f64]> = (0..d.n_rows()).filter(|&i| d.labels[i] == c).map(|i| d.features.row(i)).collect();
        for i in d.n_rows()..out.n_rows() {
            if out.labels[i] != c {
                continue;
            }
            for j in 0..2 {
                let lo = members.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
                let hi = members.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
                let v = out.features.get(i, j);
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }
}

#[test]
fn tuned_k_finds_separated_blobs_and_sampling_keeps_every_cluster() {
    let d = blobs(&[[0.0, 0.0], [50.0, 0.0], [0.0, 50.0]], &[400, 300, 200], 3.0, 3);
    let opts = TuneKOptions { k_min: 2, k_max: 8, budget: 7, seed: 1, ..TuneKOptions::default() };
    let (k, model) = tune_k(&d.features, &opts).unwrap();
    assert_eq!(k, 3);
    let sample = cluster_sample(&d, &model, 0.1, 4).unwrap();
    assert_eq!(sample.class_counts(), vec![40, 30, 20]);
}

#[test]
fn lloyd_objective_never_increases() {
    let d = blobs(&[[0.0, 0.0], [4.0, 1.0], [1.0, 5.0], [6.0, 6.0]], &[200; 4], 6.0, 5);
    for distance in [Distance::Euclidean, Distance::Manhattan] {
        let m = kmeans_fit(&d.features, 4, distance, &KMeansOptions { seed: 2, ..KMeansOptions::default() }).unwrap();
        assert!(m.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{distance:?}");
        assert_eq!(*m.objective_trace.last().unwrap(), m.inertia);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn smote_reaches_target_for_any_counts(a in 2usize..30, b in 2usize..30, target in 30usize..80, seed in 0u64..1000) {
        let d = blobs(&[[0.0, 0.0], [9.0, 9.0], [-9.0, 9.0]], &[100, a, b], 3.0, seed);
        let (out, _) = smote(&d, &SmoteConfig { k_neighbors: 3, target_count: target, seed }).unwrap();
        prop_assert_eq!(out.class_counts(), vec![100.max(target), target, target]);
        prop_assert!(out.features.all_finite());
    }
}
