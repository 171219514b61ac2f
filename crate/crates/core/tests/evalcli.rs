//! Metrics, configuration files and cross-validation.

use hybrid_ids::detect::PipelineConfig;
use hybrid_ids::evalcli::synth::synth_can;
use hybrid_ids::evalcli::{bench_latency, compute_metrics, cross_validate, RunConfig};
use hybrid_ids::Error;

#[test]
fn binary_rates_follow_the_confusion_matrix() {
    // classes: Normal, DoS, Fuzzy; both attacks count as positives
    let truth = [0, 0, 0, 0, 1, 1, 2, 2, 2, 0];
    let pred = [0, 0, 1, 0, 1, 2, 2, 0, 2, 2];
    let names = ["Normal", "DoS", "Fuzzy"].map(String::from).to_vec();
    let r = compute_metrics(&pred, &truth, &names, &[1, 2]).unwrap();
    assert_eq!((r.tp, r.tn, r.fp, r.fn_), (4, 3, 2, 1));
    assert!((r.detection_rate - 0.8).abs() < 1e-12);
    assert!((r.false_alarm_rate - 0.4).abs() < 1e-12);
    assert!((r.f1 - 2.0 * 4.0 / (2.0 * 4.0 + 2.0 + 1.0)).abs() < 1e-12);
    assert_eq!(r.confusion[2], vec![1, 0, 2]);
    assert!((r.class_accuracy - 0.6).abs() < 1e-12);
}

#[test]
fn config_file_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.conf");
    std::fs::write(&path, "preset = quick\nseed = 42\ncv.folds = 5\nanomaly.p_star = 0.9\n").unwrap();
    let cfg = RunConfig::load(&path).unwrap();
    assert_eq!(cfg.pipeline.seed, 42);
    assert_eq!(cfg.cv_folds, 5);
    assert_eq!(cfg.pipeline.anomaly.p_star, 0.9);
    assert_eq!(cfg.pipeline.kpca.max_rows, PipelineConfig::quick().kpca.max_rows);

    std::fs::write(&path, "seed = 1\nnot.a.key = 3\n").unwrap();
    match RunConfig::load(&path) {
        Err(Error::Config(m)) => assert!(m.contains("line 2"), "{m}"),
        other => panic!("expected a config error, got {other:?}"),
    }
    assert!(matches!(RunConfig::load(&dir.path().join("missing")), Err(Error::Io { .. })));
}

fn small_config() -> PipelineConfig {
    let mut c = PipelineConfig::quick();
    c.smote.target_count = 300;
    c.signature.tune = false;
    c.signature.max_estimators = 10;
    c.kpca.tune = false;
    c.kpca.p = 4;
    c.anomaly.k_max = 12;
    c.anomaly.budget = 3;
    c.anomaly.tune_p_star = false;
    c
}

#[test]
fn cross_validation_predicts_every_row_once() {
    let d = synth_can(2_000, 6).unwrap();
    let cv = cross_validate(&d, &small_config(), 3).unwrap();
    assert_eq!(cv.folds, 3);
    assert_eq!(cv.per_fold.len(), 3);
    assert_eq!(cv.predictions.len(), d.n_rows());
    assert!(cv.predictions.iter().all(|&p| p <= d.n_classes()));
    assert!(cv.average.f1 > 0.9, "F1 {}", cv.average.f1);
    let total: u64 = cv.average.confusion.iter().flatten().sum();
    assert_eq!(total as usize, d.n_rows());
}

#[test]
fn latency_report_covers_every_stage() {
    let d = synth_can(1_500, 7).unwrap();
    let (m, _) = hybrid_ids::detect::train_pipeline(&d, &small_config()).unwrap();
    let b = bench_latency(&m, &d.features, 10, 1).unwrap();
    assert_eq!(b.rows, d.n_rows());
    assert!(b.total.mean_ms > 0.0);
    assert!(b.stage_mean_sum_ms() <= b.total.mean_ms * 1.05 + 1e-3);
    assert!(b.total.p99_ms >= b.total.mean_ms * 0.5);
    assert!(b.model_bytes > 0);
}
