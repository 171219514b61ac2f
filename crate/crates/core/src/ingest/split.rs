//! Deterministic hold-out and k-fold partitions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::dataset::LabeledDataset;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            seed: 0,
            stratified: true,
        }
    }
}

/// Per-class training counts for a stratified split.
///
/// The overall training size is `round(fraction * n)`; each class first gets
/// `floor(fraction * n_c)` and the leftover rows go to the classes with the
/// largest fractional remainders (lower class index first on ties). Classes
/// with at least two rows keep one row on each side.
pub fn stratified_train_counts(class_counts: &[usize], fraction: f64) -> Vec<usize> {
    let n: usize = class_counts.iter().sum();
    let target = (fraction * n as f64).round() as usize;
    let mut counts: Vec<usize> = class_counts
        .iter()
        .map(|&c| (fraction * c as f64).floor() as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..class_counts.len()).collect();
    let remainder = |c: usize| fraction * class_counts[c] as f64 - counts[c] as f64;
    let rems: Vec<f64> = order.iter().map(|&c| remainder(c)).collect();
    order.sort_by(|&a, &b| rems[b].total_cmp(&rems[a]).then(a.cmp(&b)));
    let mut leftover = target.saturating_sub(assigned);
    for &c in &order {
        if leftover == 0 {
            break;
        }
        if counts[c] < class_counts[c] {
            counts[c] += 1;
            leftover -= 1;
        }
    }
    for (c, &total) in class_counts.iter().enumerate() {
        if total >= 2 {
            counts[c] = counts[c].clamp(1, total - 1);
        }
    }
    counts
}

/// Row indices (ascending) of the training and test partitions.
pub fn split_indices(
    labels: &[usize],
    n_classes: usize,
    spec: &SplitSpec,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {} must lie strictly inside (0, 1)",
            spec.train_fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    if spec.stratified {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
        for (i, &l) in labels.iter().enumerate() {
            by_class[l].push(i);
        }
        let singles: Vec<usize> = (0..n_classes).filter(|&c| by_class[c].len() == 1).collect();
        if !singles.is_empty() {
            return Err(Error::Data(format!(
                "stratified split needs at least 2 rows per class; classes {singles:?} have 1"
            )));
        }
        let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
        let train_counts = stratified_train_counts(&counts, spec.train_fraction);
        for (members, &k) in by_class.iter_mut().zip(&train_counts) {
            members.shuffle(&mut rng);
            train.extend_from_slice(&members[..k]);
            test.extend_from_slice(&members[k..]);
        }
    } else {
        let n = labels.len();
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        let k = ((spec.train_fraction * n as f64).round() as usize).clamp(1.min(n), n.saturating_sub(1).max(1));
        train.extend_from_slice(&all[..k.min(n)]);
        test.extend_from_slice(&all[k.min(n)..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split_holdout(
    d: &LabeledDataset,
    spec: &SplitSpec,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = split_indices(&d.labels, d.n_classes(), spec).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{msg} ({})", class_list(d))),
        other => other,
    })?;
    Ok((d.subset(&train), d.subset(&test)))
}

fn class_list(d: &LabeledDataset) -> String {
    d.class_counts()
        .iter()
        .enumerate()
        .map(|(c, n)| format!("{}={n}", d.class_names[c]))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Stratified fold index per row. Each class is shuffled and dealt
/// round-robin across folds, so per-class fold sizes differ by at most one.
pub fn stratified_folds(labels: &[usize], n_classes: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut fold_of = vec![0; labels.len()];
    // continue dealing where the previous class stopped to balance totals
    let mut next = 0;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            fold_of[i] = next % folds;
            next += 1;
        }
    }
    fold_of
}

/// Largest usable fold count: no class may have fewer rows than folds.
pub fn feasible_folds(labels: &[usize], n_classes: usize, requested: usize) -> usize {
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let smallest = counts.iter().copied().filter(|&c| c > 0).min().unwrap_or(0);
    requested.min(smallest).max(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn ten_rows_two_classes() {
        let labels = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let spec = SplitSpec {
            train_fraction: 0.7,
            seed: 3,
            stratified: true,
        };
        let (train, test) = split_indices(&labels, 2, &spec).unwrap();
        assert_eq!(train.len(), 7);
        assert_eq!(test.len(), 3);
        let per_class: Vec<usize> = (0..2)
            .map(|c| train.iter().filter(|&&i| labels[i] == c).count())
            .collect();
        // floor(3.5) = 3 each, the single leftover row goes to class 0
        assert_eq!(per_class, vec![4, 3]);
    }

    #[test]
    fn table_three_training_column() {
        let original = [14_037_293, 587_521, 491_847, 654_897, 597_252];
        let expected = [9_826_105, 411_265, 344_293, 458_428, 418_076];
        assert_eq!(stratified_train_counts(&original, 0.7), expected);
    }

    #[test]
    fn table_four_benign_split() {
        let train = stratified_train_counts(&[2_273_097], 0.7);
        assert_eq!(train, vec![1_591_168]);
        assert_eq!(2_273_097 - train[0], 681_929);
    }

    #[test]
    fn deterministic_and_disjoint() {
        let labels: Vec<usize> = (0..101).map(|i| i % 3).collect();
        let spec = SplitSpec {
            train_fraction: 0.7,
            seed: 11,
            stratified: true,
        };
        let a = split_indices(&labels, 3, &spec).unwrap();
        let b = split_indices(&labels, 3, &spec).unwrap();
        assert_eq!(a, b);
        let tr: BTreeSet<_> = a.0.iter().collect();
        let te: BTreeSet<_> = a.1.iter().collect();
        assert!(tr.is_disjoint(&te));
        assert_eq!(tr.len() + te.len(), 101);
    }

    #[test]
    fn singleton_class_rejected() {
        let labels = vec![0, 0, 0, 1];
        let err = split_indices(&labels, 2, &SplitSpec::default()).unwrap_err();
        assert!(err.to_string().contains("[1]"));
    }

    #[test]
    fn fraction_bounds() {
        let labels = vec![0, 0, 1, 1];
        for f in [0.0, 1.0, -0.2, 1.5] {
            let spec = SplitSpec {
                train_fraction: f,
                ..SplitSpec::default()
            };
            assert!(split_indices(&labels, 2, &spec).is_err());
        }
    }

    #[test]
    fn two_folds_balanced() {
        let labels = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let f = stratified_folds(&labels, 2, 2, 9);
        for fold in 0..2 {
            for class in 0..2 {
                let n = (0..10).filter(|&i| f[i] == fold && labels[i] == class).count();
                assert!(n == 2 || n == 3);
            }
            let total = f.iter().filter(|&&x| x == fold).count();
            assert_eq!(total, 5);
        }
        assert_eq!(f, stratified_folds(&labels, 2, 2, 9));
    }
}
