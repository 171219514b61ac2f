use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::hist::{grow_hist, BinnedColumns};
use super::tree::{grow, Columns, GiniTarget, GrowParams, Tree};
use crate::error::{Error, Result};
use crate::ingest::LabeledDataset;
use crate::matrix::{argmax, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxFeatures {
    /// √f for forests, every feature otherwise.
    Auto,
    All,
    Sqrt,
    Log2,
    Fraction(f64),
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, f: usize, variant: Variant) -> usize {
        let f = f.max(1);
        let n = match self {
            MaxFeatures::Auto => match variant {
                Variant::Bagging | Variant::Extra => (f as f64).sqrt().round() as usize,
                _ => f,
            },
            MaxFeatures::All => f,
            MaxFeatures::Sqrt => (f as f64).sqrt().round() as usize,
            MaxFeatures::Log2 => (f as f64).log2().round() as usize,
            MaxFeatures::Fraction(r) => (r * f as f64).round() as usize,
            MaxFeatures::Count(c) => c,
        };
        n.clamp(1, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    /// Optional cap on leaves; growth is best-first so the cap keeps the
    /// highest-gain splits.
    pub max_leaf_nodes: Option<usize>,
    pub n_estimators: usize,
    /// Shrinkage for boosted trees, in (0, 1].
    pub learning_rate: f64,
    /// L2 penalty on boosted leaf weights.
    pub lambda: f64,
    /// Bootstrap rows per tree; `None` uses the variant default
    /// (on for bagging, off otherwise).
    pub bootstrap: Option<bool>,
    /// Fraction of rows drawn for each forest tree.
    pub subsample: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 64,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Auto,
            max_leaf_nodes: None,
            n_estimators: 100,
            learning_rate: 0.1,
            lambda: 1.0,
            bootstrap: None,
            subsample: 1.0,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.max_depth < 1 {
            return bad("max_depth must be ≥ 1");
        }
        if self.n_estimators < 1 {
            return bad("n_estimators must be ≥ 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must lie in (0, 1]");
        }
        if self.max_leaf_nodes.is_some_and(|c| c < 2) {
            return bad("max_leaf_nodes must be ≥ 2");
        }
        if self.lambda < 0.0 {
            return bad("lambda must be ≥ 0");
        }
        Ok(())
    }

    fn grow_params(&self, f: usize, variant: Variant) -> GrowParams {
        GrowParams {
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
            max_features: self.max_features.resolve(f, variant),
            max_leaf_nodes: self.max_leaf_nodes,
            random_thresholds: variant == Variant::Extra,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Single,
    Bagging,
    Extra,
    Boosted,
}

impl Variant {
    pub fn tag(self) -> u8 {
        match self {
            Variant::Single => 0,
            Variant::Bagging => 1,
            Variant::Extra => 2,
            Variant::Boosted => 3,
        }
    }

    pub fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(Variant::Single),
            1 => Some(Variant::Bagging),
            2 => Some(Variant::Extra),
            3 => Some(Variant::Boosted),
            _ => None,
        }
    }
}

/// The four base learners of the signature tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LearnerKind {
    DecisionTree,
    RandomForest,
    ExtraTrees,
    Gbdt,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 4] = [
        LearnerKind::DecisionTree,
        LearnerKind::RandomForest,
        LearnerKind::ExtraTrees,
        LearnerKind::Gbdt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::DecisionTree => "DT",
            LearnerKind::RandomForest => "RF",
            LearnerKind::ExtraTrees => "ET",
            LearnerKind::Gbdt => "GBDT",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DT" => Some(LearnerKind::DecisionTree),
            "RF" => Some(LearnerKind::RandomForest),
            "ET" => Some(LearnerKind::ExtraTrees),
            "GBDT" | "XGB" | "XGBOOST" => Some(LearnerKind::Gbdt),
            _ => None,
        }
    }

    pub fn variant(self) -> Variant {
        match self {
            LearnerKind::DecisionTree => Variant::Single,
            LearnerKind::RandomForest => Variant::Bagging,
            LearnerKind::ExtraTrees => Variant::Extra,
            LearnerKind::Gbdt => Variant::Boosted,
        }
    }

    /// Defaults used before tuning.
    pub fn default_params(self) -> TreeParams {
        match self {
            LearnerKind::Gbdt => TreeParams {
                max_depth: 6,
                ..TreeParams::default()
            },
            _ => TreeParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub variant: Variant,
    pub n_classes: usize,
    pub n_features: usize,
    /// Forests: one distribution tree each. Boosted: round-major, one score
    /// tree per class per round.
    pub trees: Vec<Tree>,
    /// Boosted initial log-prior per class (empty otherwise).
    pub init_scores: Vec<f64>,
    pub learning_rate: f64,
    /// Boosted training log-loss after each round.
    pub loss_trace: Vec<f64>,
}

impl EnsembleModel {
    /// Writes the class distribution of `row` into `out` (length C).
    pub fn predict_proba_into(&self, row: &[f64], out: &mut [f64]) {
        debug_assert_eq!(row.len(), self.n_features);
        match self.variant {
            Variant::Boosted => {
                out.copy_from_slice(&self.init_scores);
                let c = self.n_classes;
                for (t, tree) in self.trees.iter().enumerate() {
                    out[t % c] += self.learning_rate * tree.leaf(row)[0];
                }
                softmax_in_place(out);
            }
            _ => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for tree in &self.trees {
                    for (o, p) in out.iter_mut().zip(tree.leaf(row)) {
                        *o += p;
                    }
                }
                let t = self.trees.len() as f64;
                out.iter_mut().for_each(|o| *o /= t);
            }
        }
    }

    fn check_width(&self, w: usize) -> Result<()> {
        if w != self.n_features {
            return Err(Error::WidthMismatch {
                context: "learner input",
                expected: self.n_features,
                actual: w,
            });
        }
        Ok(())
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_width(row.len())?;
        let mut out = vec![0.0; self.n_classes];
        self.predict_proba_into(row, &mut out);
        Ok(out)
    }

    /// Argmax class; ties go to the lowest index.
    pub fn predict(&self, row: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(row)?))
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<usize>> {
        self.check_width(x.cols())?;
        Ok((0..x.rows())
            .into_par_iter()
            .map_init(
                || vec![0.0; self.n_classes],
                |buf, i| {
                    self.predict_proba_into(x.row(i), buf);
                    argmax(buf)
                },
            )
            .collect())
    }

    pub fn predict_proba_matrix(&self, x: &Matrix) -> Result<Matrix> {
        self.check_width(x.cols())?;
        let rows: Vec<Vec<f64>> = (0..x.rows())
            .into_par_iter()
            .map(|i| {
                let mut buf = vec![0.0; self.n_classes];
                self.predict_proba_into(x.row(i), &mut buf);
                buf
            })
            .collect();
        Matrix::from_rows(&rows)
    }

    /// Upper bound on nodes visited per row: tree depth plus one, summed.
    pub fn max_path_nodes(&self) -> usize {
        self.trees.iter().map(|t| t.depth() + 1).sum()
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    v.iter_mut().for_each(|x| *x /= s);
}

fn check_inputs(x: &Matrix, y: &[usize], n_classes: usize) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::Data("cannot train on zero rows".into()));
    }
    if x.rows() != y.len() {
        return Err(Error::Data(format!(
            "{} rows but {} labels",
            x.rows(),
            y.len()
        )));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::Data(format!(
            "label {bad} outside {n_classes} classes"
        )));
    }
    Ok(())
}

/// Seed for tree `t` of an ensemble, independent of thread scheduling.
fn tree_seed(seed: u64, t: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((t as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn tree_train(d: &LabeledDataset, hp: &TreeParams, seed: u64) -> Result<EnsembleModel> {
    fit(LearnerKind::DecisionTree, &d.features, &d.labels, d.n_classes(), hp, seed)
}

pub fn forest_train(
    d: &LabeledDataset,
    hp: &TreeParams,
    variant: Variant,
    seed: u64,
) -> Result<EnsembleModel> {
    let kind = match variant {
        Variant::Bagging => LearnerKind::RandomForest,
        Variant::Extra => LearnerKind::ExtraTrees,
        _ => {
            return Err(Error::InvalidArgument(
                "forest variant must be bagging or extra".into(),
            ))
        }
    };
    fit(kind, &d.features, &d.labels, d.n_classes(), hp, seed)
}

pub fn gbdt_train(d: &LabeledDataset, hp: &TreeParams, seed: u64) -> Result<EnsembleModel> {
    fit(LearnerKind::Gbdt, &d.features, &d.labels, d.n_classes(), hp, seed)
}

/// Trains `kind` on `x`/`y` with `n_classes` output classes.
pub fn fit(
    kind: LearnerKind,
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    hp: &TreeParams,
    seed: u64,
) -> Result<EnsembleModel> {
    hp.validate()?;
    check_inputs(x, y, n_classes)?;
    let variant = kind.variant();
    let cols = Columns::from_matrix(x);
    match variant {
        Variant::Boosted => boost(x, &cols, y, n_classes, hp, seed),
        Variant::Single => {
            let target = GiniTarget { y, n_classes };
            let gp = hp.grow_params(x.cols(), variant);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let idx: Vec<u32> = (0..x.rows() as u32).collect();
            Ok(EnsembleModel {
                variant,
                n_classes,
                n_features: x.cols(),
                trees: vec![grow(&cols, &target, idx, &gp, &mut rng)],
                init_scores: Vec::new(),
                learning_rate: 1.0,
                loss_trace: Vec::new(),
            })
        }
        Variant::Bagging | Variant::Extra => {
            let target = GiniTarget { y, n_classes };
            let gp = hp.grow_params(x.cols(), variant);
            let bootstrap = hp.bootstrap.unwrap_or(variant == Variant::Bagging);
            let n = x.rows();
            let draw = ((hp.subsample * n as f64).round() as usize).clamp(1, n);
            let trees = (0..hp.n_estimators)
                .into_par_iter()
                .map(|t| {
                    let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(seed, t));
                    let idx: Vec<u32> = if bootstrap {
                        let mut v: Vec<u32> =
                            (0..draw).map(|_| rng.gen_range(0..n as u32)).collect();
                        v.sort_unstable();
                        v
                    } else if draw < n {
                        let mut v: Vec<u32> = rand::seq::index::sample(&mut rng, n, draw)
                            .into_iter()
                            .map(|i| i as u32)
                            .collect();
                        v.sort_unstable();
                        v
                    } else {
                        (0..n as u32).collect()
                    };
                    grow(&cols, &target, idx, &gp, &mut rng)
                })
                .collect();
            Ok(EnsembleModel {
                variant,
                n_classes,
                n_features: x.cols(),
                trees,
                init_scores: Vec::new(),
                learning_rate: 1.0,
                loss_trace: Vec::new(),
            })
        }
    }
}

fn boost(
    x: &Matrix,
    cols: &Columns,
    y: &[usize],
    n_classes: usize,
    hp: &TreeParams,
    seed: u64,
) -> Result<EnsembleModel> {
    let n = x.rows();
    let c = n_classes;
    let mut counts = vec![0usize; c];
    for &l in y {
        counts[l] += 1;
    }
    let init: Vec<f64> = counts
        .iter()
        .map(|&k| (k as f64 / n as f64).max(1e-12).ln())
        .collect();
    let present = counts.iter().filter(|&&k| k > 0).count();
    let mut model = EnsembleModel {
        variant: Variant::Boosted,
        n_classes: c,
        n_features: x.cols(),
        trees: Vec::new(),
        init_scores: init.clone(),
        learning_rate: hp.learning_rate,
        loss_trace: Vec::new(),
    };
    if present <= 1 {
        return Ok(model);
    }
    let gp = hp.grow_params(x.cols(), Variant::Boosted);
    let binned = BinnedColumns::new(cols);
    let mut scores: Vec<f64> = (0..n).flat_map(|_| init.iter().copied()).collect();
    let mut prob = vec![0.0; n * c];
    for round in 0..hp.n_estimators {
        for i in 0..n {
            let p = &mut prob[i * c..(i + 1) * c];
            p.copy_from_slice(&scores[i * c..(i + 1) * c]);
            softmax_in_place(p);
        }
        let round_trees: Vec<Tree> = (0..c)
            .into_par_iter()
            .map(|k| {
                let grad: Vec<f64> = (0..n)
                    .map(|i| prob[i * c + k] - (y[i] == k) as u8 as f64)
                    .collect();
                let hess: Vec<f64> = (0..n)
                    .map(|i| (prob[i * c + k] * (1.0 - prob[i * c + k])).max(1e-16))
                    .collect();
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(seed, round * c + k));
                grow_hist(&binned, &grad, &hess, hp.lambda, &gp, &mut rng)
            })
            .collect();
        for (k, tree) in round_trees.iter().enumerate() {
            for i in 0..n {
                scores[i * c + k] += hp.learning_rate * tree.leaf(x.row(i))[0];
            }
        }
        model.trees.extend(round_trees);
        let mut loss = 0.0;
        for i in 0..n {
            let p = &mut prob[i * c..(i + 1) * c];
            p.copy_from_slice(&scores[i * c..(i + 1) * c]);
            softmax_in_place(p);
            loss -= p[y[i]].max(1e-300).ln();
        }
        model.loss_trace.push(loss / n as f64);
    }
    Ok(model)
}
