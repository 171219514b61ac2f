//! The four tree learners on synthetic flow data.

use hybrid_ids::evalcli::macro_f1;
use hybrid_ids::evalcli::synth::synth_flows;
use hybrid_ids::ingest::{split_holdout, SplitSpec};
use hybrid_ids::learners::{fit, LearnerKind, MaxFeatures, TreeParams};
use hybrid_ids::Matrix;
use proptest::prelude::*;

fn params(kind: LearnerKind) -> TreeParams {
    TreeParams {
        n_estimators: 20,
        max_depth: if kind == LearnerKind::Gbdt { 6 } else { 24 },
        ..kind.default_params()
    }
}

#[test]
fn every_learner_separates_flow_classes() {
    let d = synth_flows(6_000, 40, 3).unwrap();
    let (train, test) = split_holdout(&d, &SplitSpec { seed: 1, ..SplitSpec::default() }).unwrap();
    for kind in LearnerKind::ALL {
        let m = fit(kind, &train.features, &train.labels, train.n_classes(), &params(kind), 5).unwrap();
        let pred = m.predict_matrix(&test.features).unwrap();
        let acc = pred.iter().zip(&test.labels).filter(|(p, t)| p == t).count() as f64 / test.n_rows() as f64;
        let f1 = macro_f1(&pred, &test.labels, test.n_classes());
        assert!(acc > 0.95, "{}: accuracy {acc}", kind.name());
        assert!(f1 > 0.7, "{}: macro-F1 {f1}", kind.name());
        let again = fit(kind, &train.features, &train.labels, train.n_classes(), &params(kind), 5).unwrap();
        assert_eq!(m, again, "{} is not reproducible", kind.name());
    }
}

#[test]
fn boosting_loss_decreases() {
    let d = synth_flows(3_000, 20, 4).unwrap();
    let hp = TreeParams { n_estimators: 25, max_depth: 4, learning_rate: 0.2, ..TreeParams::default() };
    let m = fit(LearnerKind::Gbdt, &d.features, &d.labels, d.n_classes(), &hp, 0).unwrap();
    assert_eq!(m.loss_trace.len(), 25);
    assert!(m.loss_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));
}

#[test]
fn width_mismatch_is_rejected() {
    let d = synth_flows(1_000, 5, 6).unwrap();
    let m = fit(LearnerKind::DecisionTree, &d.features, &d.labels, d.n_classes(), &TreeParams::default(), 0).unwrap();
    assert!(m.predict(&[0.0; 3]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn probabilities_form_distributions(
        seed in 0u64..500,
        kind_ix in 0usize..4,
        rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 20..60),
    ) {
        let kind = LearnerKind::ALL[kind_ix];
        let y: Vec<usize> = rows.iter().map(|r| usize::from(r[0] + r[1] > 0.0) + usize::from(r[2] > 500.0)).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let hp = TreeParams { n_estimators: 5, max_features: MaxFeatures::All, ..kind.default_params() };
        let m = fit(kind, &x, &y, 3, &hp, seed).unwrap();
        for r in &rows {
            let p = m.predict_proba(r).unwrap();
            prop_assert_eq!(p.len(), 3);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
