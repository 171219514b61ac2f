//! Histogram split search for boosted regression trees.
//!
//! Each feature is cut into at most `MAX_BINS` bins once per fit. Columns
//! with few distinct values get one bin per value, so their splits match an
//! exhaustive search. Thresholds are stored as real values, so fitted trees
//! predict on raw rows like any other tree.

use std::collections::BinaryHeap;

use rand::seq::index;
use rand::Rng;

use super::tree::{midpoint, Columns, GrowParams, Node, Pending, Tree};

pub(crate) const MAX_BINS: usize = 256;

pub(crate) struct BinnedColumns {
    /// Column-major bin codes.
    codes: Vec<u8>,
    rows: usize,
    cols: usize,
    /// `cuts[j][b]` separates bin `b` (≤ cut) from bin `b + 1`.
    cuts: Vec<Vec<f64>>,
}

impl BinnedColumns {
    pub fn new(x: &Columns) -> Self {
        let (rows, cols) = (x.rows(), x.cols());
        let mut codes = vec![0u8; rows * cols];
        let mut cuts = Vec::with_capacity(cols);
        for j in 0..cols {
            let col = x.col(j);
            let mut sorted = col.to_vec();
            sorted.sort_unstable_by(f64::total_cmp);
            let mut distinct = sorted.clone();
            distinct.dedup();
            let c: Vec<f64> = if distinct.len() <= MAX_BINS {
                distinct.windows(2).map(|w| midpoint(w[0], w[1])).collect()
            } else {
                // equal-frequency edges, each placed between two distinct values
                let mut c = Vec::with_capacity(MAX_BINS - 1);
                for b in 1..MAX_BINS {
                    let r = b * rows / MAX_BINS;
                    let hi_at = sorted.partition_point(|&v| v <= sorted[r - 1]);
                    if hi_at >= rows {
                        break;
                    }
                    let cut = midpoint(sorted[hi_at - 1], sorted[hi_at]);
                    if c.last().map_or(true, |&l| cut > l) {
                        c.push(cut);
                    }
                }
                c
            };
            let out = &mut codes[j * rows..(j + 1) * rows];
            for (o, &v) in out.iter_mut().zip(col) {
                *o = c.partition_point(|&t| t < v) as u8;
            }
            cuts.push(c);
        }
        Self { codes, rows, cols, cuts }
    }

    #[inline]
    fn col(&self, j: usize) -> &[u8] {
        &self.codes[j * self.rows..(j + 1) * self.rows]
    }
}

/// Gradient, hessian and count sums per (feature, bin).
#[derive(Clone)]
struct Histogram(Vec<[f64; 3]>);

impl Histogram {
    fn build(b: &BinnedColumns, idx: &[u32], grad: &[f64], hess: &[f64]) -> Self {
        let mut h = vec![[0.0; 3]; b.cols * MAX_BINS];
        for j in 0..b.cols {
            let codes = b.col(j);
            let slot = &mut h[j * MAX_BINS..(j + 1) * MAX_BINS];
            for &i in idx {
                let e = &mut slot[codes[i as usize] as usize];
                e[0] += grad[i as usize];
                e[1] += hess[i as usize];
                e[2] += 1.0;
            }
        }
        Self(h)
    }

    fn minus(&self, other: &Histogram) -> Self {
        Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| [a[0] - b[0], a[1] - b[1], a[2] - b[2]])
                .collect(),
        )
    }
}

struct NodeStats {
    grad: f64,
    hess: f64,
    hist: Histogram,
}

/// Grows one second-order regression tree best-first over all rows.
pub(crate) fn grow_hist<R: Rng>(
    b: &BinnedColumns,
    grad: &[f64],
    hess: &[f64],
    lambda: f64,
    p: &GrowParams,
    rng: &mut R,
) -> Tree {
    let f = b.cols;
    let k = p.max_features.clamp(1, f.max(1));
    let min_leaf = p.min_samples_leaf.max(1);
    let score = |g: f64, h: f64| g * g / (h + lambda);
    let mut idx: Vec<u32> = (0..b.rows as u32).collect();
    let mut nodes = vec![Node::Leaf { offset: 0 }];
    let mut values: Vec<f64> = Vec::new();
    let mut heap: BinaryHeap<Pending<NodeStats>> = BinaryHeap::new();
    let mut seq = 0usize;
    let mut leaves = 1usize;

    let leaf = |nodes: &mut Vec<Node>, values: &mut Vec<f64>, node: usize, g: f64, h: f64| {
        nodes[node] = Node::Leaf {
            offset: values.len() as u32,
        };
        values.push(-g / (h + lambda));
    };

    // Best (feature, bin, gain) of a node, or None when it must be a leaf.
    let find = |s: &NodeStats, n: usize, depth: usize, rng: &mut R| -> Option<(usize, usize, f64)> {
        if depth >= p.max_depth || n < p.min_samples_split.max(2) || n < 2 * min_leaf {
            return None;
        }
        let mut features: Vec<usize> = if k >= f { (0..f).collect() } else { index::sample(rng, f, k).into_vec() };
        features.sort_unstable();
        let base = score(s.grad, s.hess);
        let mut best: Option<(usize, usize, f64)> = None;
        for &j in &features {
            let bins = b.cuts[j].len() + 1;
            let slot = &s.hist.0[j * MAX_BINS..j * MAX_BINS + bins];
            let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0.0);
            for (bin, e) in slot[..bins - 1].iter().enumerate() {
                gl += e[0];
                hl += e[1];
                nl += e[2];
                if e[2] == 0.0 || (nl as usize) < min_leaf || n - (nl as usize) < min_leaf {
                    continue;
                }
                let gain = 0.5 * (score(gl, hl) + score(s.grad - gl, s.hess - hl) - base);
                if gain > 1e-12 && best.map_or(true, |(_, _, bg)| gain > bg) {
                    best = Some((j, bin, gain));
                }
            }
        }
        best
    };

    let (g0, h0) = idx.iter().fold((0.0, 0.0), |(g, h), &i| (g + grad[i as usize], h + hess[i as usize]));
    let root = NodeStats {
        grad: g0,
        hess: h0,
        hist: Histogram::build(b, &idx, grad, hess),
    };
    let n = idx.len();
    match find(&root, n, 0, rng) {
        Some((feature, bin, gain)) => heap.push(Pending {
            gain,
            seq,
            node: 0,
            start: 0,
            end: n,
            depth: 0,
            feature,
            threshold: bin as f64,
            stats: root,
        }),
        None => leaf(&mut nodes, &mut values, 0, root.grad, root.hess),
    }
    seq += 1;

    while let Some(pd) = heap.pop() {
        let s = pd.stats;
        if p.max_leaf_nodes.is_some_and(|cap| leaves >= cap) {
            leaf(&mut nodes, &mut values, pd.node, s.grad, s.hess);
            continue;
        }
        let bin = pd.threshold as usize;
        let codes = b.col(pd.feature);
        let slice = &mut idx[pd.start..pd.end];
        let mut mid = 0;
        for i in 0..slice.len() {
            if (codes[slice[i] as usize] as usize) <= bin {
                slice.swap(i, mid);
                mid += 1;
            }
        }
        slice[..mid].sort_unstable();
        slice[mid..].sort_unstable();
        let left = nodes.len();
        nodes.push(Node::Leaf { offset: 0 });
        nodes.push(Node::Leaf { offset: 0 });
        nodes[pd.node] = Node::Split {
            feature: pd.feature as u32,
            threshold: b.cuts[pd.feature][bin],
            left: left as u32,
            right: left as u32 + 1,
        };
        leaves += 1;
        let bounds = [(pd.start, pd.start + mid), (pd.start + mid, pd.end)];
        let child_depth = pd.depth + 1;
        let sums: Vec<(f64, f64)> = bounds
            .iter()
            .map(|&(a, z)| idx[a..z].iter().fold((0.0, 0.0), |(g, h), &i| (g + grad[i as usize], h + hess[i as usize])))
            .collect();
        let splittable = |len: usize| child_depth < p.max_depth && len >= p.min_samples_split.max(2) && len >= 2 * min_leaf;
        let lens = [mid, pd.end - pd.start - mid];
        let mut hists: [Option<Histogram>; 2] = [None, None];
        if splittable(lens[0]) || splittable(lens[1]) {
            // scan the smaller child, derive the larger one by subtraction
            let small = usize::from(lens[1] < lens[0]);
            let (a, z) = bounds[small];
            let h_small = Histogram::build(b, &idx[a..z], grad, hess);
            hists[1 - small] = Some(s.hist.minus(&h_small));
            hists[small] = Some(h_small);
        }
        for c in 0..2 {
            let node = left + c;
            let (g, h) = sums[c];
            match hists[c].take().filter(|_| splittable(lens[c])) {
                Some(hist) => {
                    let st = NodeStats { grad: g, hess: h, hist };
                    match find(&st, lens[c], child_depth, rng) {
                        Some((feature, bin, gain)) => heap.push(Pending {
                            gain,
                            seq,
                            node,
                            start: bounds[c].0,
                            end: bounds[c].1,
                            depth: child_depth,
                            feature,
                            threshold: bin as f64,
                            stats: st,
                        }),
                        None => leaf(&mut nodes, &mut values, node, g, h),
                    }
                }
                None => leaf(&mut nodes, &mut values, node, g, h),
            }
            seq += 1;
        }
    }
    Tree {
        nodes,
        values,
        leaf_width: 1,
    }
}
