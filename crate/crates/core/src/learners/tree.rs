//! Flat binary trees and the best-first grower shared by every learner.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::index;
use rand::Rng;

use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    /// Offset into `Tree::values`; the leaf holds `leaf_width` values.
    Leaf { offset: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub values: Vec<f64>,
    pub leaf_width: usize,
}

impl Tree {
    /// Leaf payload reached by `row`.
    #[inline]
    pub fn leaf(&self, row: &[f64]) -> &[f64] {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
                Node::Leaf { offset } => {
                    let o = offset as usize;
                    return &self.values[o..o + self.leaf_width];
                }
            }
        }
    }

    /// Number of nodes visited from root to the leaf reached by `row`.
    pub fn path_length(&self, row: &[f64]) -> usize {
        let mut i = 0usize;
        let mut visited = 1;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
        } = self.nodes[i]
        {
            i = if row[feature as usize] <= threshold {
                left as usize
            } else {
                right as usize
            };
            visited += 1;
        }
        visited
    }

    /// Depth of the deepest leaf (a lone leaf has depth 0).
    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Split { left, right, .. } => {
                    1 + walk(t, left as usize).max(walk(t, right as usize))
                }
                Node::Leaf { .. } => 0,
            }
        }
        walk(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

/// Column-major copy of a feature matrix for cache-friendly split search.
pub(crate) struct Columns {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Columns {
    pub fn from_matrix(x: &Matrix) -> Self {
        let (rows, cols) = (x.rows(), x.cols());
        let mut data = vec![0.0; rows * cols];
        for (i, row) in x.iter_rows().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                data[j * rows + i] = v;
            }
        }
        Self { data, rows, cols }
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

/// Node statistics and split scoring for one training target.
pub(crate) trait Target: Sync {
    type Stats: Clone;

    fn stats(&self, idx: &[u32]) -> Self::Stats;
    fn is_pure(&self, s: &Self::Stats) -> bool;
    fn leaf(&self, s: &Self::Stats, out: &mut Vec<f64>);
    /// Minimum gain a split must exceed to be used.
    fn min_gain(&self) -> f64;
    /// Best threshold over the sorted `(value, row)` pairs of one feature.
    fn best_sorted(&self, pairs: &[(f64, u32)], parent: &Self::Stats, min_leaf: usize)
        -> Option<(f64, f64)>;
    /// Gain of a fixed threshold.
    fn gain_at(
        &self,
        x: &Columns,
        feature: usize,
        idx: &[u32],
        threshold: f64,
        parent: &Self::Stats,
        min_leaf: usize,
    ) -> Option<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Candidate features per split.
    pub max_features: usize,
    pub max_leaf_nodes: Option<usize>,
    /// Draw one uniform threshold per candidate feature instead of searching.
    pub random_thresholds: bool,
}

/// Threshold between two adjacent distinct sorted values.
#[inline]
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) * 0.5;
    if m >= hi || m < lo {
        lo
    } else {
        m
    }
}

pub(crate) struct Pending<S> {
    pub gain: f64,
    pub seq: usize,
    pub node: usize,
    pub start: usize,
    pub end: usize,
    pub depth: usize,
    pub feature: usize,
    pub threshold: f64,
    pub stats: S,
}

impl<S> PartialEq for Pending<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<S> Eq for Pending<S> {}
impl<S> PartialOrd for Pending<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<S> Ord for Pending<S> {
    /// Larger gain first, then earlier creation.
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then(other.seq.cmp(&self.seq))
    }
}

/// Grows one tree best-first over the rows in `idx` (duplicates allowed).
pub(crate) fn grow<T: Target, R: Rng>(
    x: &Columns,
    target: &T,
    mut idx: Vec<u32>,
    p: &GrowParams,
    rng: &mut R,
) -> Tree {
    let f = x.cols();
    let k = p.max_features.clamp(1, f.max(1));
    let mut nodes = vec![Node::Leaf { offset: 0 }];
    let mut values = Vec::new();
    let mut leaf_width = 0;
    let mut heap: BinaryHeap<Pending<T::Stats>> = BinaryHeap::new();
    let mut pairs: Vec<(f64, u32)> = Vec::new();
    let mut seq = 0usize;
    let mut leaves = 1usize;

    let mut make_leaf = |nodes: &mut Vec<Node>, values: &mut Vec<f64>, node: usize, s: &T::Stats| {
        let offset = values.len();
        target.leaf(s, values);
        leaf_width = values.len() - offset;
        nodes[node] = Node::Leaf {
            offset: offset as u32,
        };
    };

    // With most features searched at every node, each column is sorted once
    // by (value, row) and partitioned stably at every split; otherwise the
    // sampled columns are sorted per node.
    let total = idx.len();
    let presort = !p.random_thresholds && 4 * k >= f;
    let mut order: Vec<u32> = Vec::new();
    if presort {
        order.reserve(f * total);
        for j in 0..f {
            let c = x.col(j);
            let from = order.len();
            order.extend_from_slice(&idx);
            order[from..].sort_unstable_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
        }
    }
    let mut scratch: Vec<u32> = Vec::new();
    let mut goes_left = vec![false; x.rows()];

    // Finds the best split of a node or returns None when it must be a leaf.
    let mut find = |idx: &[u32], order: &[u32], (start, end): (usize, usize), depth: usize, s: &T::Stats, rng: &mut R| -> Option<(usize, f64, f64)> {
        let n = idx.len();
        if depth >= p.max_depth
            || n < p.min_samples_split.max(2)
            || n < 2 * p.min_samples_leaf.max(1)
            || target.is_pure(s)
        {
            return None;
        }
        let mut features: Vec<usize> = if k >= f {
            (0..f).collect()
        } else {
            index::sample(rng, f, k).into_vec()
        };
        features.sort_unstable();
        let mut best: Option<(usize, f64, f64)> = None;
        for &j in &features {
            let candidate = if p.random_thresholds {
                let c = x.col(j);
                let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = c[i as usize];
                    (lo.min(v), hi.max(v))
                });
                if lo >= hi {
                    None
                } else {
                    let t = rng.gen_range(lo..hi);
                    target
                        .gain_at(x, j, idx, t, s, p.min_samples_leaf.max(1))
                        .map(|g| (g, t))
                }
            } else {
                let c = x.col(j);
                pairs.clear();
                if presort {
                    let column = &order[j * total + start..j * total + end];
                    pairs.extend(column.iter().map(|&i| (c[i as usize], i)));
                } else {
                    pairs.extend(idx.iter().map(|&i| (c[i as usize], i)));
                    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                }
                target.best_sorted(&pairs, s, p.min_samples_leaf.max(1))
            };
            if let Some((g, t)) = candidate {
                if g > target.min_gain() && best.map_or(true, |(_, _, bg)| g > bg) {
                    best = Some((j, t, g));
                }
            }
        }
        best
    };

    let n = idx.len();
    let root_stats = target.stats(&idx);
    match find(&idx, &order, (0, n), 0, &root_stats, rng) {
        Some((feature, threshold, gain)) => heap.push(Pending {
            gain,
            seq,
            node: 0,
            start: 0,
            end: n,
            depth: 0,
            feature,
            threshold,
            stats: root_stats,
        }),
        None => make_leaf(&mut nodes, &mut values, 0, &root_stats),
    }
    seq += 1;

    while let Some(pd) = heap.pop() {
        if p.max_leaf_nodes.is_some_and(|cap| leaves >= cap) {
            make_leaf(&mut nodes, &mut values, pd.node, &pd.stats);
            continue;
        }
        let slice = &mut idx[pd.start..pd.end];
        let split_col = x.col(pd.feature);
        for &i in slice.iter() {
            goes_left[i as usize] = split_col[i as usize] <= pd.threshold;
        }
        let mut mid = 0;
        for i in 0..slice.len() {
            if goes_left[slice[i] as usize] {
                slice.swap(i, mid);
                mid += 1;
            }
        }
        // keep each child's rows in ascending order for reproducibility
        slice[..mid].sort_unstable();
        slice[mid..].sort_unstable();
        if !order.is_empty() {
            for j in 0..f {
                let seg = &mut order[j * total + pd.start..j * total + pd.end];
                scratch.clear();
                scratch.extend(seg.iter().copied().filter(|&i| !goes_left[i as usize]));
                let mut w = 0;
                for r in 0..seg.len() {
                    if goes_left[seg[r] as usize] {
                        seg[w] = seg[r];
                        w += 1;
                    }
                }
                seg[w..].copy_from_slice(&scratch);
            }
        }
        let left = nodes.len();
        nodes.push(Node::Leaf { offset: 0 });
        nodes.push(Node::Leaf { offset: 0 });
        nodes[pd.node] = Node::Split {
            feature: pd.feature as u32,
            threshold: pd.threshold,
            left: left as u32,
            right: left as u32 + 1,
        };
        leaves += 1;
        let bounds = [(pd.start, pd.start + mid), (pd.start + mid, pd.end)];
        for (c, (start, end)) in bounds.into_iter().enumerate() {
            let node = left + c;
            let rows = &idx[start..end];
            let s = target.stats(rows);
            match find(rows, &order, (start, end), pd.depth + 1, &s, rng) {
                Some((feature, threshold, gain)) => heap.push(Pending {
                    gain,
                    seq,
                    node,
                    start,
                    end,
                    depth: pd.depth + 1,
                    feature,
                    threshold,
                    stats: s,
                }),
                None => make_leaf(&mut nodes, &mut values, node, &s),
            }
            seq += 1;
        }
    }
    Tree {
        nodes,
        values,
        leaf_width,
    }
}

/// Gini target over class labels; leaves hold class distributions.
pub(crate) struct GiniTarget<'a> {
    pub y: &'a [usize],
    pub n_classes: usize,
}

impl Target for GiniTarget<'_> {
    type Stats = Vec<f64>;

    fn stats(&self, idx: &[u32]) -> Vec<f64> {
        let mut c = vec![0.0; self.n_classes];
        for &i in idx {
            c[self.y[i as usize]] += 1.0;
        }
        c
    }

    fn is_pure(&self, s: &Vec<f64>) -> bool {
        s.iter().filter(|&&c| c > 0.0).count() <= 1
    }

    fn leaf(&self, s: &Vec<f64>, out: &mut Vec<f64>) {
        let n: f64 = s.iter().sum();
        out.extend(s.iter().map(|c| if n > 0.0 { c / n } else { 0.0 }));
    }

    fn min_gain(&self) -> f64 {
        // impure nodes split even without immediate gain (XOR-style data)
        f64::NEG_INFINITY
    }

    fn best_sorted(
        &self,
        pairs: &[(f64, u32)],
        parent: &Vec<f64>,
        min_leaf: usize,
    ) -> Option<(f64, f64)> {
        let n = pairs.len();
        let mut left = vec![0.0; self.n_classes];
        let mut right = parent.clone();
        let mut sl = 0.0;
        let mut sr: f64 = parent.iter().map(|c| c * c).sum();
        let parent_term = sr / n as f64;
        let mut best: Option<(f64, f64)> = None;
        for i in 0..n - 1 {
            let c = self.y[pairs[i].1 as usize];
            sl += 2.0 * left[c] + 1.0;
            left[c] += 1.0;
            sr -= 2.0 * right[c] - 1.0;
            right[c] -= 1.0;
            let nl = i + 1;
            let nr = n - nl;
            if pairs[i].0 < pairs[i + 1].0 && nl >= min_leaf && nr >= min_leaf {
                let score = sl / nl as f64 + sr / nr as f64;
                if best.map_or(true, |(b, _)| score > b) {
                    best = Some((score, midpoint(pairs[i].0, pairs[i + 1].0)));
                }
            }
        }
        best.map(|(score, t)| (score - parent_term, t))
    }

    fn gain_at(
        &self,
        x: &Columns,
        feature: usize,
        idx: &[u32],
        threshold: f64,
        parent: &Vec<f64>,
        min_leaf: usize,
    ) -> Option<f64> {
        let mut left = vec![0.0; self.n_classes];
        let mut nl = 0usize;
        let c = x.col(feature);
        for &i in idx {
            if c[i as usize] <= threshold {
                left[self.y[i as usize]] += 1.0;
                nl += 1;
            }
        }
        let n = idx.len();
        let nr = n - nl;
        if nl < min_leaf || nr < min_leaf {
            return None;
        }
        let sl: f64 = left.iter().map(|c| c * c).sum();
        let sr: f64 = parent.iter().zip(&left).map(|(p, l)| (p - l) * (p - l)).sum();
        let sp: f64 = parent.iter().map(|c| c * c).sum();
        Some(sl / nl as f64 + sr / nr as f64 - sp / n as f64)
    }
}

/// Weighted Gini impurity `n·(1 − Σp²)` of a node with the given counts.
pub fn weighted_gini(counts: &[f64]) -> f64 {
    let n: f64 = counts.iter().sum();
    if n == 0.0 {
        return 0.0;
    }
    n - counts.iter().map(|c| c * c).sum::<f64>() / n
}

/// Exact-search second-order regression target; the oracle for histogram
/// boosting. Leaves hold `-G/(H+λ)`.
#[cfg(test)]
pub(crate) struct NewtonTarget<'a> {
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub lambda: f64,
}

#[cfg(test)]
impl NewtonTarget<'_> {
    #[inline]
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.lambda)
    }
}

#[cfg(test)]
impl Target for NewtonTarget<'_> {
    /// (sum of gradients, sum of hessians)
    type Stats = (f64, f64);

    fn stats(&self, idx: &[u32]) -> (f64, f64) {
        idx.iter().fold((0.0, 0.0), |(g, h), &i| {
            (g + self.grad[i as usize], h + self.hess[i as usize])
        })
    }

    fn is_pure(&self, _s: &(f64, f64)) -> bool {
        false
    }

    fn leaf(&self, s: &(f64, f64), out: &mut Vec<f64>) {
        out.push(-s.0 / (s.1 + self.lambda));
    }

    fn min_gain(&self) -> f64 {
        1e-12
    }

    fn best_sorted(
        &self,
        pairs: &[(f64, u32)],
        parent: &(f64, f64),
        min_leaf: usize,
    ) -> Option<(f64, f64)> {
        let n = pairs.len();
        let (gt, ht) = *parent;
        let base = self.score(gt, ht);
        let (mut gl, mut hl) = (0.0, 0.0);
        let mut best: Option<(f64, f64)> = None;
        for i in 0..n - 1 {
            let r = pairs[i].1 as usize;
            gl += self.grad[r];
            hl += self.hess[r];
            let nl = i + 1;
            if pairs[i].0 < pairs[i + 1].0 && nl >= min_leaf && n - nl >= min_leaf {
                let gain = 0.5 * (self.score(gl, hl) + self.score(gt - gl, ht - hl) - base);
                if best.map_or(true, |(b, _)| gain > b) {
                    best = Some((gain, midpoint(pairs[i].0, pairs[i + 1].0)));
                }
            }
        }
        best
    }

    fn gain_at(
        &self,
        x: &Columns,
        feature: usize,
        idx: &[u32],
        threshold: f64,
        parent: &(f64, f64),
        min_leaf: usize,
    ) -> Option<f64> {
        let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
        let c = x.col(feature);
        for &i in idx {
            if c[i as usize] <= threshold {
                gl += self.grad[i as usize];
                hl += self.hess[i as usize];
                nl += 1;
            }
        }
        if nl < min_leaf || idx.len() - nl < min_leaf {
            return None;
        }
        let (gt, ht) = *parent;
        Some(0.5 * (self.score(gl, hl) + self.score(gt - gl, ht - hl) - self.score(gt, ht)))
    }
}
