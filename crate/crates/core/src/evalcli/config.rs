//! Flat `section.key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. A `preset = quick` line resets
//! every pipeline setting to the quick preset; later lines override it.

use std::path::Path;
use std::str::FromStr;

use crate::detect::PipelineConfig;
use crate::error::{Error, Result};
use crate::preprocess::Distance;

/// Cluster sampling of a raw dataset before training.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSettings {
    pub fraction: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub budget: usize,
    /// Rows scored by the silhouette objective.
    pub eval_rows: usize,
}

impl Default for SampleSettings {
    fn default() -> Self {
        Self {
            fraction: 0.1,
            k_min: 2,
            k_max: 20,
            budget: 20,
            eval_rows: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub sample: SampleSettings,
    /// Training share of the hold-out split.
    pub train_fraction: f64,
    pub cv_folds: usize,
    pub bench_warmup: usize,
    pub bench_repeats: usize,
    pub bench_rows: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            sample: SampleSettings::default(),
            train_fraction: 0.7,
            cv_folds: 10,
            bench_warmup: 100,
            bench_repeats: 2,
            bench_rows: 2000,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let p = &mut self.pipeline;
        match key {
            "preset" => match value {
                "quick" => *p = PipelineConfig::quick(),
                "default" => *p = PipelineConfig::default(),
                _ => return Err(Error::Config(format!("unknown preset {value:?}"))),
            },
            "seed" => p.seed = parse(key, value)?,
            "smote.enabled" => p.smote.enabled = parse_bool(key, value)?,
            "smote.k_neighbors" => p.smote.k_neighbors = parse(key, value)?,
            "smote.target_count" => p.smote.target_count = parse(key, value)?,
            "features.enabled" => p.features.enabled = parse_bool(key, value)?,
            "features.alpha_ig" => p.features.alpha_ig = parse(key, value)?,
            "features.alpha_su" => p.features.alpha_su = parse(key, value)?,
            "features.bins" => p.features.bins = parse(key, value)?,
            "kpca.max_rows" => p.kpca.max_rows = parse(key, value)?,
            "kpca.kernels" => p.kpca.kernels = parse_list(value),
            "kpca.p_min" => p.kpca.p_min = parse(key, value)?,
            "kpca.p_max" => p.kpca.p_max = parse(key, value)?,
            "kpca.tune" => p.kpca.tune = parse_bool(key, value)?,
            "kpca.budget" => p.kpca.budget = parse(key, value)?,
            "kpca.kernel" => p.kpca.kernel = value.to_string(),
            "kpca.p" => p.kpca.p = parse(key, value)?,
            "signature.tune" => p.signature.tune = parse_bool(key, value)?,
            "signature.tpe_budget" => p.signature.tpe_budget = parse(key, value)?,
            "signature.tune_folds" => p.signature.tune_folds = parse(key, value)?,
            "signature.tune_rows" => p.signature.tune_rows = parse(key, value)?,
            "signature.oof_folds" => p.signature.oof_folds = parse(key, value)?,
            "signature.max_estimators" => p.signature.max_estimators = parse(key, value)?,
            "signature.meta_probabilities" => p.signature.meta_probabilities = parse_bool(key, value)?,
            "anomaly.k_min" => p.anomaly.k_min = parse(key, value)?,
            "anomaly.k_max" => p.anomaly.k_max = parse(key, value)?,
            "anomaly.distances" => {
                p.anomaly.distances = parse_list(value)
                    .iter()
                    .map(|n| {
                        Distance::from_name(n).ok_or_else(|| Error::Config(format!("{key}: unknown distance {n:?}")))
                    })
                    .collect::<Result<_>>()?
            }
            "anomaly.budget" => p.anomaly.budget = parse(key, value)?,
            "anomaly.p_star" => p.anomaly.p_star = parse(key, value)?,
            "anomaly.tune_p_star" => p.anomaly.tune_p_star = parse_bool(key, value)?,
            "anomaly.p_star_budget" => p.anomaly.p_star_budget = parse(key, value)?,
            "anomaly.minibatch" => {
                let b: usize = parse(key, value)?;
                p.anomaly.minibatch = (b > 0).then_some(b);
            }
            "anomaly.max_iter" => p.anomaly.max_iter = parse(key, value)?,
            "anomaly.validation_fraction" => p.anomaly.validation_fraction = parse(key, value)?,
            "anomaly.tune_rows" => p.anomaly.tune_rows = parse(key, value)?,
            "sample.fraction" => self.sample.fraction = parse(key, value)?,
            "sample.k_min" => self.sample.k_min = parse(key, value)?,
            "sample.k_max" => self.sample.k_max = parse(key, value)?,
            "sample.budget" => self.sample.budget = parse(key, value)?,
            "sample.eval_rows" => self.sample.eval_rows = parse(key, value)?,
            "split.train_fraction" => self.train_fraction = parse(key, value)?,
            "cv.folds" => self.cv_folds = parse(key, value)?,
            "bench.warmup" => self.bench_warmup = parse(key, value)?,
            "bench.repeats" => self.bench_repeats = parse(key, value)?,
            "bench.rows" => self.bench_rows = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {line:?}", n + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        let s = &self.sample;
        if !(s.fraction > 0.0 && s.fraction <= 1.0) {
            return Err(Error::Config(format!("sample.fraction {} outside (0, 1]", s.fraction)));
        }
        if s.k_min < 2 || s.k_min > s.k_max {
            return Err(Error::Config("sample needs 2 ≤ k_min ≤ k_max".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split.train_fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        if self.cv_folds < 2 {
            return Err(Error::Config("cv.folds must be at least 2".into()));
        }
        Ok(())
    }
}
