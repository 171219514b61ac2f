//! Synthetic minority oversampling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::ingest::LabeledDataset;
use crate::matrix::{squared_euclidean, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    /// Every class with fewer rows is raised to this count.
    pub target_count: usize,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            target_count: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SmoteReport {
    /// (class, synthesized rows, neighbors used)
    pub synthesized: Vec<(usize, usize, usize)>,
    /// Classes left untouched because they hold a single row.
    pub skipped_singletons: Vec<usize>,
}

/// Indices (into `members`) of the `k` nearest other members of `members[p]`.
/// Ties resolve to the lower position.
fn nearest_members(x: &Matrix, members: &[usize], p: usize, k: usize) -> Vec<usize> {
    let origin = x.row(members[p]);
    let mut d: Vec<(f64, usize)> = members
        .iter()
        .enumerate()
        .filter(|&(q, _)| q != p)
        .map(|(q, &i)| (squared_euclidean(origin, x.row(i)), q))
        .collect();
    let k = k.min(d.len());
    if k < d.len() {
        d.select_nth_unstable_by(k, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.truncate(k);
    }
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().map(|(_, q)| q).collect()
}

/// The point `base + r * (neighbor - base)`.
pub fn interpolate(base: &[f64], neighbor: &[f64], r: f64) -> Vec<f64> {
    base.iter()
        .zip(neighbor)
        .map(|(b, n)| b + r * (n - b))
        .collect()
}

/// Appends synthetic rows until every class reaches `target_count`.
///
/// Base rows are visited round-robin in a shuffled order; each synthetic row
/// sits at a uniform `r` in `[0, 1)` between its base and one of the base's
/// nearest same-class neighbors. Originals are kept.
pub fn smote(d: &LabeledDataset, cfg: &SmoteConfig) -> Result<(LabeledDataset, SmoteReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = SmoteReport::default();
    let mut features = d.features.clone();
    let mut labels = d.labels.clone();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); d.n_classes()];
    for (i, &l) in d.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for (class, members) in by_class.iter().enumerate() {
        let have = members.len();
        if have == 0 || have >= cfg.target_count {
            continue;
        }
        if have == 1 {
            log::error!(
                "SMOTE: class {:?} has a single row and cannot be oversampled",
                d.class_names[class]
            );
            report.skipped_singletons.push(class);
            continue;
        }
        let k = cfg.k_neighbors.max(1);
        let k = if have < k + 1 {
            log::warn!(
                "SMOTE: class {:?} has {have} rows; using {} neighbors instead of {k}",
                d.class_names[class],
                have - 1
            );
            have - 1
        } else {
            k
        };
        let need = cfg.target_count - have;
        let mut order: Vec<usize> = (0..have).collect();
        order.shuffle(&mut rng);
        let mut cache: Vec<Option<Vec<usize>>> = vec![None; have];
        for s in 0..need {
            let p = order[s % have];
            let neigh = cache[p].get_or_insert_with(|| nearest_members(&d.features, members, p, k));
            let q = neigh[rng.gen_range(0..neigh.len())];
            let r: f64 = rng.gen();
            let row = interpolate(d.features.row(members[p]), d.features.row(members[q]), r);
            features.push_row(&row)?;
            labels.push(class);
        }
        report.synthesized.push((class, need, k));
    }
    let out = LabeledDataset {
        features,
        labels,
        feature_names: d.feature_names.clone(),
        class_names: d.class_names.clone(),
        attack_classes: d.attack_classes.clone(),
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_endpoints() {
        assert_eq!(interpolate(&[0.0, 0.0], &[2.0, 2.0], 0.5), vec![1.0, 1.0]);
        assert_eq!(interpolate(&[3.0, -1.0], &[7.0, 9.0], 0.0), vec![3.0, -1.0]);
    }

    fn toy() -> LabeledDataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            rows.push(vec![i as f64, (i * i % 7) as f64]);
            labels.push("Normal".to_string());
        }
        for i in 0..4 {
            rows.push(vec![100.0 + i as f64, 50.0 - i as f64]);
            labels.push("Bot".to_string());
        }
        rows.push(vec![-5.0, -5.0]);
        labels.push("Heartbleed".to_string());
        LabeledDataset::from_string_labels(
            Matrix::from_rows(&rows).unwrap(),
            &labels,
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    #[test]
    fn raises_minorities_and_reports() {
        let d = toy();
        let cfg = SmoteConfig {
            k_neighbors: 5,
            target_count: 20,
            seed: 1,
        };
        let (out, report) = smote(&d, &cfg).unwrap();
        let counts = out.class_counts();
        let bot = d.class_index("Bot").unwrap();
        let hb = d.class_index("Heartbleed").unwrap();
        assert_eq!(counts[bot], 20);
        assert_eq!(counts[hb], 1);
        assert_eq!(counts[d.class_index("Normal").unwrap()], 40);
        assert_eq!(report.skipped_singletons, vec![hb]);
        // 4 rows cannot supply 5 neighbors
        assert_eq!(report.synthesized, vec![(bot, 16, 3)]);
        // originals preserved as a prefix
        assert_eq!(out.features.select_rows(&(0..45).collect::<Vec<_>>()), d.features);
    }

    #[test]
    fn deterministic() {
        let d = toy();
        let cfg = SmoteConfig {
            k_neighbors: 2,
            target_count: 30,
            seed: 9,
        };
        assert_eq!(smote(&d, &cfg).unwrap().0, smote(&d, &cfg).unwrap().0);
    }
}
