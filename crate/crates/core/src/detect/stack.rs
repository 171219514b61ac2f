//! Tiers one and two: four tuned tree learners combined by stacking.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::SignatureSettings;
use crate::error::{Error, Result};
use crate::evalcli::macro_f1;
use crate::hpo::{bo_tpe_optimize_with, HpoOutcome, TpeOptions};
use crate::ingest::{feasible_folds, stratified_folds, stratified_train_counts, LabeledDataset};
use crate::learners::{
    fit, learner_space, params_from_assignment, params_to_assignment, EnsembleModel, LearnerKind,
    TreeParams,
};
use crate::matrix::{argmax, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct StackedModel {
    /// One model per entry of `LearnerKind::ALL`, in that order.
    pub bases: Vec<EnsembleModel>,
    pub meta: EnsembleModel,
    pub best_base: LearnerKind,
    pub meta_probabilities: bool,
}

impl StackedModel {
    pub fn n_classes(&self) -> usize {
        self.meta.n_classes
    }

    pub fn input_width(&self) -> usize {
        self.bases[0].n_features
    }

    /// Meta features of one row: base labels, or base distributions when
    /// `meta_probabilities` is set. `scratch` holds one distribution.
    pub fn meta_features_into(&self, row: &[f64], scratch: &mut [f64], out: &mut Vec<f64>) {
        out.clear();
        for base in &self.bases {
            base.predict_proba_into(row, scratch);
            if self.meta_probabilities {
                out.extend_from_slice(scratch);
            } else {
                out.push(argmax(scratch) as f64);
            }
        }
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.input_width() {
            return Err(Error::WidthMismatch {
                context: "signature tier",
                expected: self.input_width(),
                actual: row.len(),
            });
        }
        let mut scratch = vec![0.0; self.n_classes()];
        let mut meta = Vec::with_capacity(self.meta.n_features);
        self.meta_features_into(row, &mut scratch, &mut meta);
        let mut out = vec![0.0; self.n_classes()];
        self.meta.predict_proba_into(&meta, &mut out);
        Ok(out)
    }

    pub fn predict(&self, row: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(row)?))
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<usize>> {
        x.iter_rows().map(|r| self.predict(r)).collect()
    }

    /// Upper bound on tree nodes visited per row.
    pub fn max_path_nodes(&self) -> usize {
        self.bases.iter().map(|b| b.max_path_nodes()).sum::<usize>() + self.meta.max_path_nodes()
    }
}

/// Which fold produced each out-of-fold prediction and which rows that fold's
/// models were trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct OofAudit {
    pub fold_of_row: Vec<usize>,
    pub fold_train_rows: Vec<Vec<usize>>,
}

impl OofAudit {
    /// Fails if any row's meta features came from a model trained on it.
    pub fn verify(&self) -> Result<()> {
        let n = self.fold_of_row.len();
        for (f, rows) in self.fold_train_rows.iter().enumerate() {
            let mut trained = vec![false; n];
            for &i in rows {
                trained[i] = true;
            }
            for (i, &fi) in self.fold_of_row.iter().enumerate() {
                if fi == f && trained[i] {
                    return Err(Error::Invariant(format!(
                        "meta features of row {i} come from fold {f}, which trained on it"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BaseReport {
    pub kind: LearnerKind,
    pub params: TreeParams,
    /// Tuning objective (CV macro-F1) of the chosen and default parameters;
    /// NaN when tuning was off or failed.
    pub tuned_cv_macro_f1: f64,
    pub default_cv_macro_f1: f64,
    pub oof_macro_f1: f64,
    pub outcome: Option<HpoOutcome>,
}

#[derive(Debug, Clone)]
pub struct SignatureReport {
    pub bases: Vec<BaseReport>,
    pub audit: OofAudit,
    /// Out-of-fold meta feature matrix the meta learner was trained on.
    pub meta_features: Matrix,
}

/// Up to `cap` rows, stratified by largest remainder, with at least
/// `min_per_class` rows from each class that has them. Sorted.
pub fn capped_rows(
    labels: &[usize],
    n_classes: usize,
    cap: usize,
    min_per_class: usize,
    seed: u64,
) -> Vec<usize> {
    let n = labels.len();
    if n <= cap {
        return (0..n).collect();
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let keep = stratified_train_counts(&counts, cap as f64 / n as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cap);
    for (members, &k) in by_class.iter_mut().zip(&keep) {
        let k = k.max(min_per_class.min(members.len()));
        members.shuffle(&mut rng);
        out.extend_from_slice(&members[..k]);
    }
    out.sort_unstable();
    out
}

/// Rows of `fold_of` outside fold `f` (training) and inside it (validation).
fn fold_partition(fold_of: &[usize], f: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for (i, &fi) in fold_of.iter().enumerate() {
        if fi == f {
            valid.push(i);
        } else {
            train.push(i);
        }
    }
    (train, valid)
}

/// Mean macro-F1 of `kind` over stratified folds.
pub fn cv_macro_f1(
    kind: LearnerKind,
    params: &TreeParams,
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    folds: usize,
    seed: u64,
) -> Result<f64> {
    let folds = feasible_folds(y, n_classes, folds);
    let fold_of = stratified_folds(y, n_classes, folds, seed);
    let mut total = 0.0;
    for f in 0..folds {
        let (train, valid) = fold_partition(&fold_of, f);
        if train.is_empty() || valid.is_empty() {
            return Err(Error::Data("a cross-validation fold is empty".into()));
        }
        let ty: Vec<usize> = train.iter().map(|&i| y[i]).collect();
        let model = fit(kind, &x.select_rows(&train), &ty, n_classes, params, seed ^ f as u64)?;
        let pred = model.predict_matrix(&x.select_rows(&valid))?;
        let vy: Vec<usize> = valid.iter().map(|&i| y[i]).collect();
        total += macro_f1(&pred, &vy, n_classes);
    }
    Ok(total / folds as f64)
}

/// Tunes `kind` with TPE on CV macro-F1; the defaults are the first trial.
/// Returns the chosen parameters with the tuned and default objectives.
pub fn tune_learner(
    kind: LearnerKind,
    d: &LabeledDataset,
    cfg: &SignatureSettings,
    seed: u64,
) -> Result<(TreeParams, f64, f64, HpoOutcome)> {
    let rows = capped_rows(&d.labels, d.n_classes(), cfg.tune_rows, cfg.tune_folds, seed);
    let x = d.features.select_rows(&rows);
    let y: Vec<usize> = rows.iter().map(|&i| d.labels[i]).collect();
    let space = learner_space(kind, cfg.max_estimators)?;
    let mut defaults = kind.default_params();
    defaults.n_estimators = defaults.n_estimators.min(cfg.max_estimators);
    let default_point = params_to_assignment(kind, &defaults, &space);
    let objective = |a: &crate::hpo::Assignment| {
        let p = params_from_assignment(kind, a);
        cv_macro_f1(kind, &p, &x, &y, d.n_classes(), cfg.tune_folds, seed).map(|s| -s)
    };
    let opts = TpeOptions {
        budget: cfg.tpe_budget,
        seed,
        enqueued: vec![default_point],
        ..TpeOptions::default()
    };
    let outcome = bo_tpe_optimize_with(objective, &space, &opts)?;
    let first = &outcome.ledger.trials()[0];
    let default_score = if first.failed { f64::NAN } else { -first.objective };
    let params = params_from_assignment(kind, &outcome.best.assignment);
    Ok((params, -outcome.best.objective, default_score, outcome))
}

/// Trains tiers one and two on `train`.
///
/// Each base learner is tuned (or takes its defaults), then out-of-fold base
/// predictions form the meta features. The meta learner is a fresh instance
/// of the base whose out-of-fold macro-F1 is highest.
pub fn train_signature_tier(
    train: &LabeledDataset,
    cfg: &SignatureSettings,
    seed: u64,
) -> Result<(StackedModel, SignatureReport)> {
    let c = train.n_classes();
    let present = train.class_counts().iter().filter(|&&n| n > 0).count();
    if present < 2 {
        return Err(Error::Data(format!(
            "the signature tier needs at least 2 classes, found {present}"
        )));
    }
    let x = &train.features;
    let y = &train.labels;
    let mut reports = Vec::new();
    for (b, kind) in LearnerKind::ALL.into_iter().enumerate() {
        let mut params = kind.default_params();
        params.n_estimators = params.n_estimators.min(cfg.max_estimators);
        let mut report = BaseReport {
            kind,
            params: params.clone(),
            tuned_cv_macro_f1: f64::NAN,
            default_cv_macro_f1: f64::NAN,
            oof_macro_f1: f64::NAN,
            outcome: None,
        };
        if cfg.tune {
            match tune_learner(kind, train, cfg, seed.wrapping_add(b as u64 * 7919)) {
                Ok((p, tuned, default, outcome)) => {
                    log::info!(
                        "{}: tuned CV macro-F1 {tuned:.5} (defaults {default:.5})",
                        kind.name()
                    );
                    report.params = p;
                    report.tuned_cv_macro_f1 = tuned;
                    report.default_cv_macro_f1 = default;
                    report.outcome = Some(outcome);
                }
                Err(e) => log::warn!("{}: tuning failed ({e}); using defaults", kind.name()),
            }
        }
        reports.push(report);
    }

    let folds = feasible_folds(y, c, cfg.oof_folds);
    if folds < cfg.oof_folds {
        log::warn!("stacking uses {folds} folds; a class is too small for {}", cfg.oof_folds);
    }
    let fold_of = stratified_folds(y, c, folds, seed ^ 0x5DEE_CE66);
    let width = if cfg.meta_probabilities { c } else { 1 };
    let mut meta_x = Matrix::zeros(train.n_rows(), width * reports.len());
    let mut fold_train_rows = Vec::with_capacity(folds);
    let mut oof_labels = vec![vec![0usize; train.n_rows()]; reports.len()];
    for f in 0..folds {
        let (tr, va) = fold_partition(&fold_of, f);
        let tx = x.select_rows(&tr);
        let ty: Vec<usize> = tr.iter().map(|&i| y[i]).collect();
        let vx = x.select_rows(&va);
        for (b, r) in reports.iter().enumerate() {
            let model = fit(r.kind, &tx, &ty, c, &r.params, seed ^ (f as u64 + 1))?;
            let proba = model.predict_proba_matrix(&vx)?;
            for (k, &i) in va.iter().enumerate() {
                let p = proba.row(k);
                oof_labels[b][i] = argmax(p);
                if cfg.meta_probabilities {
                    meta_x.row_mut(i)[b * c..(b + 1) * c].copy_from_slice(p);
                } else {
                    meta_x.set(i, b, argmax(p) as f64);
                }
            }
        }
        fold_train_rows.push(tr);
    }
    let audit = OofAudit {
        fold_of_row: fold_of,
        fold_train_rows,
    };
    audit.verify()?;

    for (r, pred) in reports.iter_mut().zip(&oof_labels) {
        r.oof_macro_f1 = macro_f1(pred, y, c);
    }
    let best = (0..reports.len()).fold(0, |best, b| {
        if reports[b].oof_macro_f1 > reports[best].oof_macro_f1 {
            b
        } else {
            best
        }
    });
    let best_base = reports[best].kind;
    log::info!(
        "best base learner {} (out-of-fold macro-F1 {:.5})",
        best_base.name(),
        reports[best].oof_macro_f1
    );

    let bases = reports
        .iter()
        .map(|r| fit(r.kind, x, y, c, &r.params, seed))
        .collect::<Result<Vec<_>>>()?;
    let meta = fit(best_base, &meta_x, y, c, &reports[best].params, seed ^ 0xA11CE)?;
    Ok((
        StackedModel {
            bases,
            meta,
            best_base,
            meta_probabilities: cfg.meta_probabilities,
        },
        SignatureReport {
            bases: reports,
            audit,
            meta_features: meta_x,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy(n: usize, noise: f64, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let class = i % 3;
            let signal = class as f64 + rng.gen_range(-noise..noise);
            rows.push(vec![signal, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            labels.push(class);
        }
        LabeledDataset::new(
            Matrix::from_rows(&rows).unwrap(),
            labels,
            vec!["s".into(), "n1".into(), "n2".into()],
            vec!["A".into(), "B".into(), "Normal".into()],
        )
        .unwrap()
    }

    fn lean() -> SignatureSettings {
        SignatureSettings {
            tune: false,
            oof_folds: 3,
            max_estimators: 20,
            ..SignatureSettings::default()
        }
    }

    #[test]
    fn perfect_bases_give_copies_of_labels() {
        let d = toy(150, 0.1, 1);
        let (stack, report) = train_signature_tier(&d, &lean(), 3).unwrap();
        for i in 0..d.n_rows() {
            for b in 0..4 {
                assert_eq!(report.meta_features.get(i, b), d.labels[i] as f64);
            }
        }
        assert_eq!(stack.predict_matrix(&d.features).unwrap(), d.labels);
        report.audit.verify().unwrap();
    }

    #[test]
    fn stack_tracks_best_base_on_held_out_rows() {
        let d = toy(600, 0.9, 2);
        let test = toy(600, 0.9, 99);
        let (stack, _) = train_signature_tier(&d, &lean(), 5).unwrap();
        let acc = |pred: Vec<usize>| {
            pred.iter().zip(&test.labels).filter(|(a, b)| a == b).count() as f64 / 600.0
        };
        let stack_acc = acc(stack.predict_matrix(&test.features).unwrap());
        let best_base = stack
            .bases
            .iter()
            .map(|b| acc(b.predict_matrix(&test.features).unwrap()))
            .fold(0.0, f64::max);
        assert!(stack_acc >= best_base - 0.005, "{stack_acc} vs {best_base}");
    }

    #[test]
    fn audit_detects_leakage() {
        let audit = OofAudit {
            fold_of_row: vec![0, 1, 0],
            fold_train_rows: vec![vec![1], vec![0, 1]],
        };
        assert!(matches!(audit.verify(), Err(Error::Invariant(_))));
    }

    #[test]
    fn tuning_never_loses_to_defaults_on_its_own_folds() {
        let d = toy(240, 0.8, 4);
        let cfg = SignatureSettings {
            tune: true,
            tpe_budget: 4,
            tune_folds: 3,
            max_estimators: 15,
            ..lean()
        };
        let (_, report) = train_signature_tier(&d, &cfg, 8).unwrap();
        for b in &report.bases {
            assert!(b.tuned_cv_macro_f1 >= b.default_cv_macro_f1, "{:?}", b.kind);
        }
    }

    #[test]
    fn capped_rows_keeps_small_classes() {
        let labels: Vec<usize> = (0..1000).map(|i| usize::from(i < 4)).collect();
        let rows = capped_rows(&labels, 2, 100, 3, 0);
        let small = rows.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(small, 3);
        assert!(rows.len() <= 103);
        assert!(rows.windows(2).all(|w| w[0] < w[1]));
    }
}
