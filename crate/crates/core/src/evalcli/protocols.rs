//! Validation protocols: stratified k-fold cross-validation and zero-day
//! leave-one-attack-out evaluation. Every fold or experiment retrains the
//! whole detector from scratch.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::{average_reports, compute_metrics, MetricsReport};
use crate::detect::{train_pipeline_observed, DetectOptions, PipelineConfig, PipelineModel, TrainStage};
use crate::error::{Error, Result};
use crate::ingest::{feasible_folds, stratified_folds, LabeledDataset};

#[derive(Debug, Clone)]
pub struct CvReport {
    pub folds: usize,
    pub per_fold: Vec<MetricsReport>,
    /// Rates averaged over folds; confusion counts summed.
    pub average: MetricsReport,
    pub fold_of_row: Vec<usize>,
    /// Out-of-fold label per row in `average.class_names` indexing.
    pub predictions: Vec<usize>,
    /// Mean train plus validate seconds per fold.
    pub mean_fold_secs: f64,
}

/// Maps a fold model's verdict to the dataset's class index, with the
/// unknown-attack pseudo-class at `d.n_classes()`.
fn dataset_label(model: &PipelineModel, d: &LabeledDataset, v: &crate::detect::Verdict) -> usize {
    let l = model.verdict_label(v);
    if l == model.class_names.len() {
        return d.n_classes();
    }
    d.class_index(&model.class_names[l]).unwrap_or(d.n_classes())
}

fn report_names(d: &LabeledDataset) -> (Vec<String>, Vec<usize>) {
    let mut names = d.class_names.clone();
    names.push("UnknownAttack".into());
    let mut attacks = d.attack_classes.clone();
    attacks.push(d.n_classes());
    (names, attacks)
}

/// Stratified `folds`-fold cross-validation of the full training recipe.
/// The fold count drops (with a warning) when a class is too small.
pub fn cross_validate(train: &LabeledDataset, cfg: &PipelineConfig, folds: usize) -> Result<CvReport> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {folds}")));
    }
    let d = train.compact_classes();
    let folds_used = feasible_folds(&d.labels, d.n_classes(), folds);
    if folds_used < folds {
        log::warn!("smallest class has fewer than {folds} rows; using {folds_used} folds");
    }
    let smallest = d.class_counts().into_iter().min().unwrap_or(0);
    if smallest < folds_used {
        return Err(Error::Data(format!("a class has {smallest} rows, fewer than {folds_used} folds")));
    }
    let fold_of_row = stratified_folds(&d.labels, d.n_classes(), folds_used, cfg.seed);
    let (names, attacks) = report_names(&d);
    let mut predictions = vec![usize::MAX; d.n_rows()];
    let mut per_fold = Vec::with_capacity(folds_used);
    let mut secs = 0.0;
    for f in 0..folds_used {
        let started = Instant::now();
        let (tr, va): (Vec<usize>, Vec<usize>) = (0..d.n_rows()).partition(|&i| fold_of_row[i] != f);
        let fold_train = d.subset(&tr);
        let fold_val = d.subset(&va);
        let mut fold_cfg = cfg.clone();
        fold_cfg.seed = cfg.seed.wrapping_add(f as u64);
        let (model, _) = train_pipeline_observed(&fold_train, &fold_cfg, &mut |_, _| {})?;
        let verdicts = model.detect_matrix(&fold_val.features, DetectOptions::default())?;
        let pred: Vec<usize> = verdicts.iter().map(|v| dataset_label(&model, &d, v)).collect();
        for (&i, &p) in va.iter().zip(&pred) {
            predictions[i] = p;
        }
        let mut report = compute_metrics(&pred, &fold_val.labels, &names, &attacks)?;
        report.wall_time_secs = started.elapsed().as_secs_f64();
        secs += report.wall_time_secs;
        log::info!("fold {}/{folds_used}: F1 {:.5}, macro-F1 {:.5}", f + 1, report.f1, report.macro_f1);
        per_fold.push(report);
    }
    if predictions.iter().any(|&p| p == usize::MAX) {
        return Err(Error::Invariant("a row received no out-of-fold prediction".into()));
    }
    let mut average = average_reports(&per_fold)?;
    average.wall_time_secs = secs / folds_used as f64;
    Ok(CvReport {
        folds: folds_used,
        per_fold,
        average,
        fold_of_row,
        predictions,
        mean_fold_secs: secs / folds_used as f64,
    })
}

#[derive(Debug, Clone)]
pub struct ZeroDayReport {
    pub attack: String,
    pub validation_attack_rows: usize,
    pub validation_normal_rows: usize,
    pub train_rows: usize,
    /// The normal sample was drawn with replacement (normal pool too small).
    pub with_replacement: bool,
    /// Full detector.
    pub full: MetricsReport,
    /// Cluster labels only (biased classifiers off).
    pub ablation: MetricsReport,
    /// Training stages checked by the leakage observer.
    pub stages_checked: Vec<&'static str>,
    pub train_secs: f64,
}

/// Splits `d` into a leave-out validation set (every row of `attack` plus
/// an equal normal sample) and the remaining training rows.
pub fn zero_day_split(d: &LabeledDataset, attack: &str, seed: u64) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>, bool)> {
    let available = || {
        d.class_names
            .iter()
            .zip(d.class_counts())
            .filter(|(_, n)| *n > 0)
            .map(|(c, n)| format!("{c} ({n})"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let target = d
        .class_index(attack)
        .filter(|&c| d.labels.contains(&c))
        .ok_or_else(|| Error::Data(format!("no rows of class {attack:?}; available: {}", available())))?;
    if !d.is_attack(target) {
        return Err(Error::InvalidArgument(format!("{attack:?} is the normal class")));
    }
    let normal = d
        .normal_class()
        .ok_or_else(|| Error::Data("dataset has no normal class".into()))?;
    let attack_rows: Vec<usize> = (0..d.n_rows()).filter(|&i| d.labels[i] == target).collect();
    let mut normals: Vec<usize> = (0..d.n_rows()).filter(|&i| d.labels[i] == normal).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x2E70_DA7);
    let need = attack_rows.len();
    let with_replacement = normals.len() <= need;
    let sample: Vec<usize> = if with_replacement {
        log::warn!(
            "only {} normal rows for {need} {attack} rows; sampling normals with replacement",
            normals.len()
        );
        // keep half of the pool for training, draw the sample from the other half
        normals.shuffle(&mut rng);
        let pool = &normals[normals.len() / 2..];
        (0..need).map(|_| pool[rng.gen_range(0..pool.len())]).collect()
    } else {
        normals.shuffle(&mut rng);
        let mut s = normals[..need].to_vec();
        s.sort_unstable();
        s
    };
    let mut held = vec![false; d.n_rows()];
    for &i in attack_rows.iter().chain(&sample) {
        held[i] = true;
    }
    let train: Vec<usize> = (0..d.n_rows()).filter(|&i| !held[i]).collect();
    Ok((attack_rows, sample, train, with_replacement))
}

/// Leave-one-attack-out evaluation. Detection counts any attack verdict,
/// known or unknown, as positive.
pub fn zero_day_eval(d: &LabeledDataset, attack: &str, cfg: &PipelineConfig) -> Result<ZeroDayReport> {
    let (attack_rows, normal_rows, train_rows, with_replacement) = zero_day_split(d, attack, cfg.seed)?;
    let train = d.subset(&train_rows);
    let mut leaks: Vec<String> = Vec::new();
    let mut stages_checked = Vec::new();
    let started = Instant::now();
    let (model, _) = train_pipeline_observed(&train, cfg, &mut |stage: TrainStage, seen: &LabeledDataset| {
        stages_checked.push(stage.name());
        if seen.labels.iter().any(|&l| seen.class_names[l] == attack) {
            leaks.push(stage.name().to_string());
        }
    })?;
    let train_secs = started.elapsed().as_secs_f64();
    if !leaks.is_empty() {
        return Err(Error::Invariant(format!(
            "held-out class {attack} reached training stages {}",
            leaks.join(", ")
        )));
    }
    let mut rows = attack_rows.clone();
    rows.extend_from_slice(&normal_rows);
    let val = d.subset(&rows);
    let truth: Vec<usize> = (0..rows.len()).map(|i| usize::from(i < attack_rows.len())).collect();
    let names = vec![d.class_names[d.normal_class().expect("checked")].clone(), attack.to_string()];
    let evaluate = |use_biased: bool| -> Result<MetricsReport> {
        let t = Instant::now();
        let verdicts = model.detect_matrix(&val.features, DetectOptions { use_biased })?;
        let pred: Vec<usize> = verdicts.iter().map(|v| usize::from(v.is_attack())).collect();
        let mut r = compute_metrics(&pred, &truth, &names, &[1])?;
        r.wall_time_secs = t.elapsed().as_secs_f64();
        Ok(r)
    };
    let full = evaluate(true)?;
    let ablation = evaluate(false)?;
    log::info!(
        "zero-day {attack}: DR {:.5} FAR {:.5} F1 {:.5} (cluster labels only: F1 {:.5})",
        full.detection_rate,
        full.false_alarm_rate,
        full.f1,
        ablation.f1
    );
    Ok(ZeroDayReport {
        attack: attack.to_string(),
        validation_attack_rows: attack_rows.len(),
        validation_normal_rows: normal_rows.len(),
        train_rows: train_rows.len(),
        with_replacement,
        full,
        ablation,
        stages_checked,
        train_secs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn toy(normals: usize, attacks: usize) -> LabeledDataset {
        let n = normals + attacks;
        let x = Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let mut labels = vec![0; normals];
        labels.extend(std::iter::repeat(1).take(attacks));
        LabeledDataset::new(x, labels, vec!["x".into()], vec!["Normal".into(), "DoS".into()]).unwrap()
    }

    #[test]
    fn leave_out_split_is_disjoint_and_balanced() {
        let d = toy(50, 10);
        let (a, nrm, train, repl) = zero_day_split(&d, "DoS", 1).unwrap();
        assert!(!repl);
        assert_eq!((a.len(), nrm.len(), train.len()), (10, 10, 40));
        assert!(train.iter().all(|&i| d.labels[i] == 0 && !nrm.contains(&i)));
    }

    #[test]
    fn short_normal_pool_samples_with_replacement() {
        let d = toy(6, 10);
        let (a, nrm, train, repl) = zero_day_split(&d, "DoS", 1).unwrap();
        assert!(repl);
        assert_eq!(a.len(), 10);
        assert_eq!(nrm.len(), 10);
        assert!(train.iter().all(|i| !nrm.contains(i)));
        assert!(!train.is_empty());
    }

    #[test]
    fn unknown_attack_lists_classes() {
        let err = zero_day_split(&toy(5, 5), "Fuzzy", 1).unwrap_err().to_string();
        assert!(err.contains("DoS (5)") && err.contains("Normal (5)"), "{err}");
        assert!(zero_day_split(&toy(5, 5), "Normal", 1).is_err());
    }
}
