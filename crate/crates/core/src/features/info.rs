//! Discretization and information-theoretic scores.

use std::collections::HashMap;

/// How continuous columns are discretized before entropy estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinningRule {
    pub bins: usize,
}

impl Default for BinningRule {
    fn default() -> Self {
        Self { bins: 20 }
    }
}

/// Maps a column to bin codes. Columns with at most `bins` distinct values
/// keep one code per value; others get quantile bins (cut points shared by
/// tied values are merged, so bins may be fewer).
pub fn discretize(x: &[f64], rule: BinningRule) -> Vec<usize> {
    let bins = rule.bins.max(2);
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= bins {
        return x
            .iter()
            .map(|v| distinct.partition_point(|d| d.total_cmp(v).is_lt()))
            .collect();
    }
    let n = sorted.len();
    let mut cuts: Vec<f64> = (1..bins).map(|j| sorted[j * n / bins]).collect();
    cuts.dedup();
    x.iter()
        .map(|v| cuts.partition_point(|c| c.total_cmp(v).is_le()))
        .collect()
}

fn entropy_of_counts<I: IntoIterator<Item = usize>>(counts: I, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

fn counts(codes: &[usize]) -> Vec<usize> {
    let width = codes.iter().max().map_or(0, |m| m + 1);
    let mut c = vec![0usize; width];
    for &v in codes {
        c[v] += 1;
    }
    c
}

/// Entropy in bits of a discrete variable.
pub fn entropy(codes: &[usize]) -> f64 {
    entropy_of_counts(counts(codes), codes.len())
}

/// Joint entropy H(A, B) in bits.
pub fn joint_entropy(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "joint entropy needs equal lengths");
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
    }
    // sorted so the sum does not depend on hash order or argument order
    let mut cells: Vec<usize> = table.into_values().collect();
    cells.sort_unstable();
    entropy_of_counts(cells, a.len())
}

/// H(T) − H(T|X) for discrete codes, clamped at zero against rounding.
pub fn information_gain_discrete(x: &[usize], t: &[usize]) -> f64 {
    let h_t = entropy(t);
    let h_cond = joint_entropy(x, t) - entropy(x);
    (h_t - h_cond).max(0.0)
}

/// Information gain of labels `y` from a continuous column `x`.
pub fn information_gain(x: &[f64], y: &[usize], binning: BinningRule) -> f64 {
    information_gain_discrete(&discretize(x, binning), y)
}

/// 2·IG / (H(a) + H(b)) on discrete codes; 0 when both are constant.
pub fn symmetrical_uncertainty_discrete(a: &[usize], b: &[usize]) -> f64 {
    let ha = entropy(a);
    let hb = entropy(b);
    let denom = ha + hb;
    if denom <= 0.0 {
        return 0.0;
    }
    // mutual information written symmetrically so SU(a,b) == SU(b,a) exactly
    let mi = (ha + hb - joint_entropy(a, b)).max(0.0);
    (2.0 * mi / denom).clamp(0.0, 1.0)
}

pub fn symmetrical_uncertainty(x1: &[f64], x2: &[f64], binning: BinningRule) -> f64 {
    symmetrical_uncertainty_discrete(&discretize(x1, binning), &discretize(x2, binning))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfectly_informative_feature() {
        let y = [0, 1, 0, 1, 1, 0];
        let x: Vec<f64> = y.iter().map(|&v| v as f64 * 3.0).collect();
        let ig = information_gain(&x, &y, BinningRule::default());
        assert!((ig - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_feature_is_uninformative() {
        let y = [0, 1, 0, 1];
        assert_eq!(information_gain(&[7.0; 4], &y, BinningRule::default()), 0.0);
    }

    #[test]
    fn hand_computed_conditional_entropy() {
        // H(T)=1; X=A covers {0,0,1} with H=0.918296, X=B is pure
        let ig = information_gain_discrete(&[0, 0, 0, 1], &[0, 0, 1, 1]);
        let h3 = -(2.0 / 3.0f64) * (2.0 / 3.0f64).log2() - (1.0 / 3.0f64) * (1.0 / 3.0f64).log2();
        assert!((ig - (1.0 - 0.75 * h3)).abs() < 1e-12);
        assert!((ig - 0.311278).abs() < 1e-6);
    }

    #[test]
    fn su_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 1.0];
        assert!((symmetrical_uncertainty(&x, &x, BinningRule::default()) - 1.0).abs() < 1e-12);
        assert_eq!(symmetrical_uncertainty_discrete(&[0, 0, 1, 1], &[0, 1, 0, 1]), 0.0);
        assert_eq!(symmetrical_uncertainty_discrete(&[0, 0, 0], &[1, 1, 1]), 0.0);
    }

    #[test]
    fn quantile_bins_are_balanced() {
        let x: Vec<f64> = (0..1000).map(|i| (i as f64).sqrt()).collect();
        let codes = discretize(&x, BinningRule { bins: 20 });
        let c = counts(&codes);
        assert_eq!(c.len(), 20);
        assert!(c.iter().all(|&n| n == 50));
        let few = discretize(&[3.0, -1.0, 3.0, 8.0], BinningRule::default());
        assert_eq!(few, vec![1, 0, 1, 2]);
    }

    proptest! {
        #[test]
        fn ig_bounded_by_entropies(x in prop::collection::vec(-50.0f64..50.0, 1..80),
                                   seed in 0usize..7) {
            let y: Vec<usize> = (0..x.len()).map(|i| (i * 7 + seed) % 3).collect();
            let xc = discretize(&x, BinningRule::default());
            let ig = information_gain_discrete(&xc, &y);
            prop_assert!(ig >= 0.0);
            prop_assert!(ig <= entropy(&y).min(entropy(&xc)) + 1e-12);
        }

        #[test]
        fn su_symmetric(a in prop::collection::vec(0usize..5, 1..60), shift in 0usize..4) {
            let b: Vec<usize> = a.iter().enumerate().map(|(i, v)| (v * (i % 3) + shift) % 4).collect();
            let s1 = symmetrical_uncertainty_discrete(&a, &b);
            let s2 = symmetrical_uncertainty_discrete(&b, &a);
            prop_assert_eq!(s1, s2);
            prop_assert!((0.0..=1.0).contains(&s1));
        }
    }
}
