//! Per-row detection latency by stage, and serialized model size.

use std::fmt;

use crate::detect::{pipeline_to_bytes, DetectOptions, PipelineModel, StageTimes};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Mean and 99th percentile of per-row times in milliseconds. Rows that
/// skip a stage count as zero for that stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageStats {
    pub mean_ms: f64,
    pub p99_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: usize,
    pub repeats: usize,
    pub scaler: StageStats,
    pub stack: StageStats,
    pub kpca: StageStats,
    pub cluster: StageStats,
    pub biased: StageStats,
    pub total: StageStats,
    pub model_bytes: usize,
}

impl BenchReport {
    pub fn stages(&self) -> [(&'static str, StageStats); 5] {
        [
            ("scaler", self.scaler),
            ("stack", self.stack),
            ("kpca", self.kpca),
            ("cluster", self.cluster),
            ("biased", self.biased),
        ]
    }

    pub fn stage_mean_sum_ms(&self) -> f64 {
        self.stages().iter().map(|s| s.1.mean_ms).sum()
    }
}

fn stats(mut ms: Vec<f64>) -> StageStats {
    if ms.is_empty() {
        return StageStats::default();
    }
    let mean = ms.iter().sum::<f64>() / ms.len() as f64;
    ms.sort_by(f64::total_cmp);
    let rank = ((0.99 * ms.len() as f64).ceil() as usize).clamp(1, ms.len());
    StageStats {
        mean_ms: mean,
        p99_ms: ms[rank - 1],
    }
}

/// Times every row of `rows` through the detector `repeats` times after
/// `warmup` untimed passes over the first rows.
pub fn bench_latency(p: &PipelineModel, rows: &Matrix, warmup: usize, repeats: usize) -> Result<BenchReport> {
    if rows.rows() == 0 {
        return Err(Error::InvalidArgument("bench needs at least one row".into()));
    }
    let opts = DetectOptions::default();
    for i in 0..warmup {
        p.detect(rows.row(i % rows.rows()))?;
    }
    let repeats = repeats.max(1);
    let mut samples: Vec<StageTimes> = Vec::with_capacity(rows.rows() * repeats);
    for _ in 0..repeats {
        for r in rows.iter_rows() {
            samples.push(p.detect_timed(r, opts)?.1);
        }
    }
    let col = |f: fn(&StageTimes) -> f64| stats(samples.iter().map(|t| f(t) * 1e3).collect());
    Ok(BenchReport {
        rows: rows.rows(),
        repeats,
        scaler: col(|t| t.scaler),
        stack: col(|t| t.stack),
        kpca: col(|t| t.kpca),
        cluster: col(|t| t.cluster),
        biased: col(|t| t.biased),
        total: col(|t| t.total),
        model_bytes: pipeline_to_bytes(p).len(),
    })
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>12} {:>12}", "stage", "mean ms", "p99 ms")?;
        for (name, s) in self.stages().iter().chain(std::iter::once(&("total", self.total))) {
            writeln!(f, "{name:<10} {:>12.5} {:>12.5}", s.mean_ms, s.p99_ms)?;
        }
        writeln!(
            f,
            "rows {} x {} repeats, model {:.3} MB",
            self.rows,
            self.repeats,
            self.model_bytes as f64 / 1e6
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_uses_nearest_rank() {
        let s = stats((1..=100).map(f64::from).collect());
        assert_eq!(s.p99_ms, 99.0);
        assert_eq!(s.mean_ms, 50.5);
        assert_eq!(stats(vec![3.0]).p99_ms, 3.0);
    }
}
