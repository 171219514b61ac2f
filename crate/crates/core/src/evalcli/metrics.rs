//! Confusion-matrix metrics with an attack-vs-normal binary collapse.

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub class_names: Vec<String>,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<u64>>,
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    pub accuracy: f64,
    pub detection_rate: f64,
    pub false_alarm_rate: f64,
    pub f1: f64,
    pub per_class: Vec<ClassScores>,
    /// Mean F1 over classes that occur in the truth or the predictions.
    pub macro_f1: f64,
    /// Multi-class accuracy (diagonal share).
    pub class_accuracy: f64,
    pub wall_time_secs: f64,
}

/// `num / den`, or `empty` when nothing was counted.
fn ratio(num: u64, den: u64, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

/// Scores predictions against truth. Classes listed in `attack_classes` are
/// positives in the binary collapse; every other class is normal.
///
/// Rates with an empty denominator are reported as perfect (1 for DR, F1 and
/// precision, 0 for FAR).
pub fn compute_metrics(
    predictions: &[usize],
    truth: &[usize],
    class_names: &[String],
    attack_classes: &[usize],
) -> Result<MetricsReport> {
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("no predictions to score".into()));
    }
    if predictions.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} truth labels",
            predictions.len(),
            truth.len()
        )));
    }
    let c = class_names.len();
    if let Some(bad) = predictions.iter().chain(truth).find(|&&v| v >= c) {
        return Err(Error::InvalidArgument(format!(
            "class index {bad} outside {c} classes"
        )));
    }
    let mut is_attack = vec![false; c];
    for &a in attack_classes {
        if a < c {
            is_attack[a] = true;
        }
    }
    let mut confusion = vec![vec![0u64; c]; c];
    let (mut tp, mut tn, mut fp, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &t) in predictions.iter().zip(truth) {
        confusion[t][p] += 1;
        match (is_attack[t], is_attack[p]) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    let n = predictions.len() as u64;
    let per_class: Vec<ClassScores> = (0..c)
        .map(|k| {
            let hit = confusion[k][k];
            let support: u64 = confusion[k].iter().sum();
            let predicted: u64 = (0..c).map(|t| confusion[t][k]).sum();
            ClassScores {
                precision: ratio(hit, predicted, 1.0),
                recall: ratio(hit, support, 1.0),
                f1: ratio(2 * hit, support + predicted, 1.0),
                support,
            }
        })
        .collect();
    let active: Vec<usize> = (0..c)
        .filter(|&k| per_class[k].support > 0 || (0..c).any(|t| confusion[t][k] > 0))
        .collect();
    let macro_f1 = active.iter().map(|&k| per_class[k].f1).sum::<f64>() / active.len() as f64;
    let diag: u64 = (0..c).map(|k| confusion[k][k]).sum();
    Ok(MetricsReport {
        class_names: class_names.to_vec(),
        confusion,
        tp,
        tn,
        fp,
        fn_,
        accuracy: ratio(tp + tn, n, 1.0),
        detection_rate: ratio(tp, tp + fn_, 1.0),
        false_alarm_rate: ratio(fp, tn + fp, 0.0),
        f1: ratio(2 * tp, 2 * tp + fp + fn_, 1.0),
        per_class,
        macro_f1,
        class_accuracy: ratio(diag, n, 1.0),
        wall_time_secs: 0.0,
    })
}

/// Macro-F1 of multi-class predictions (no binary collapse needed).
pub fn macro_f1(predictions: &[usize], truth: &[usize], n_classes: usize) -> f64 {
    let names: Vec<String> = (0..n_classes).map(|k| k.to_string()).collect();
    compute_metrics(predictions, truth, &names, &[])
        .map(|r| r.macro_f1)
        .unwrap_or(0.0)
}

/// Element-wise mean of several reports over the same classes; confusion
/// matrices are summed.
pub fn average_reports(reports: &[MetricsReport]) -> Result<MetricsReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidArgument("no reports to average".into()))?;
    let k = reports.len() as f64;
    let mean = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
    let mut out = first.clone();
    for r in &reports[1..] {
        if r.class_names != first.class_names {
            return Err(Error::InvalidArgument("reports cover different classes".into()));
        }
        for (row, other) in out.confusion.iter_mut().zip(&r.confusion) {
            for (a, b) in row.iter_mut().zip(other) {
                *a += b;
            }
        }
        out.tp += r.tp;
        out.tn += r.tn;
        out.fp += r.fp;
        out.fn_ += r.fn_;
    }
    out.accuracy = mean(&|r| r.accuracy);
    out.detection_rate = mean(&|r| r.detection_rate);
    out.false_alarm_rate = mean(&|r| r.false_alarm_rate);
    out.f1 = mean(&|r| r.f1);
    out.macro_f1 = mean(&|r| r.macro_f1);
    out.class_accuracy = mean(&|r| r.class_accuracy);
    out.wall_time_secs = mean(&|r| r.wall_time_secs);
    for (j, pc) in out.per_class.iter_mut().enumerate() {
        pc.precision = mean(&|r| r.per_class[j].precision);
        pc.recall = mean(&|r| r.per_class[j].recall);
        pc.f1 = mean(&|r| r.per_class[j].f1);
        pc.support = reports.iter().map(|r| r.per_class[j].support).sum();
    }
    Ok(out)
}

impl MetricsReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["metric", "value"]).map_err(err)?;
        for (k, v) in [
            ("accuracy", self.accuracy),
            ("detection_rate", self.detection_rate),
            ("false_alarm_rate", self.false_alarm_rate),
            ("f1", self.f1),
            ("macro_f1", self.macro_f1),
            ("class_accuracy", self.class_accuracy),
            ("wall_time_secs", self.wall_time_secs),
        ] {
            w.write_record([k.to_string(), v.to_string()]).map_err(err)?;
        }
        for (name, s) in self.class_names.iter().zip(&self.per_class) {
            w.write_record([format!("f1[{name}]"), s.f1.to_string()])
                .map_err(err)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "Acc {:.5}  DR {:.5}  FAR {:.5}  F1 {:.5}  macro-F1 {:.5}",
            self.accuracy, self.detection_rate, self.false_alarm_rate, self.f1, self.macro_f1
        )?;
        writeln!(f, "TP {}  TN {}  FP {}  FN {}", self.tp, self.tn, self.fp, self.fn_)?;
        let width = self.class_names.iter().map(|s| s.len()).max().unwrap_or(5).max(5);
        writeln!(f, "{:width$}  precision  recall     f1         support", "class")?;
        for (name, s) in self.class_names.iter().zip(&self.per_class) {
            if s.support == 0 && self.confusion.iter().all(|r| r[self.class_index(name)] == 0) {
                continue;
            }
            writeln!(
                f,
                "{name:width$}  {:<9.5}  {:<9.5}  {:<9.5}  {}",
                s.precision, s.recall, s.f1, s.support
            )?;
        }
        Ok(())
    }
}

impl MetricsReport {
    fn class_index(&self, name: &str) -> usize {
        self.class_names.iter().position(|n| n == name).unwrap_or(0)
    }
}
