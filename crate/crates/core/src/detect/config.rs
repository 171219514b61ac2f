//! Training configuration for the full detector.

use crate::error::{Error, Result};
use crate::preprocess::{Distance, DEFAULT_MINIBATCH};

#[derive(Debug, Clone, PartialEq)]
pub struct SmoteSettings {
    pub enabled: bool,
    pub k_neighbors: usize,
    /// Minority classes are grown to this many rows.
    pub target_count: usize,
}

impl Default for SmoteSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            k_neighbors: 5,
            target_count: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSettings {
    /// When off, every feature is kept.
    pub enabled: bool,
    pub alpha_ig: f64,
    pub alpha_su: f64,
    pub bins: usize,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            alpha_ig: 0.9,
            alpha_su: 0.9,
            bins: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KpcaSettings {
    /// Reference rows kept by the kernel model (a uniform subsample).
    pub max_rows: usize,
    /// Candidate kernels: any of "rbf", "poly", "linear".
    pub kernels: Vec<String>,
    pub p_min: usize,
    pub p_max: usize,
    pub tune: bool,
    pub budget: usize,
    /// Used when tuning is off.
    pub kernel: String,
    pub p: usize,
}

impl Default for KpcaSettings {
    fn default() -> Self {
        Self {
            max_rows: 1000,
            kernels: vec!["rbf".into(), "poly".into(), "linear".into()],
            p_min: 2,
            p_max: 10,
            tune: true,
            budget: 10,
            kernel: "rbf".into(),
            p: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignatureSettings {
    pub tune: bool,
    pub tpe_budget: usize,
    /// Cross-validation folds inside the tuning objective.
    pub tune_folds: usize,
    /// Stratified row cap for the tuning objective.
    pub tune_rows: usize,
    /// Folds producing the out-of-fold meta features.
    pub oof_folds: usize,
    pub max_estimators: usize,
    /// Feed base class probabilities to the meta learner instead of labels.
    pub meta_probabilities: bool,
}

impl Default for SignatureSettings {
    fn default() -> Self {
        Self {
            tune: true,
            tpe_budget: 50,
            tune_folds: 10,
            tune_rows: 20_000,
            oof_folds: 5,
            max_estimators: 200,
            meta_probabilities: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalySettings {
    pub k_min: usize,
    pub k_max: usize,
    /// Distances the tuner may choose from.
    pub distances: Vec<Distance>,
    pub budget: usize,
    pub p_star: f64,
    pub tune_p_star: bool,
    pub p_star_budget: usize,
    pub minibatch: Option<usize>,
    pub max_iter: usize,
    /// Held-out share of the internal tuning split.
    pub validation_fraction: f64,
    /// Row cap for tuning (KPCA, k, distance, p*).
    pub tune_rows: usize,
}

impl Default for AnomalySettings {
    fn default() -> Self {
        Self {
            k_min: 8,
            k_max: 512,
            distances: vec![Distance::Euclidean, Distance::Manhattan],
            budget: 20,
            p_star: 0.933,
            tune_p_star: false,
            p_star_budget: 15,
            minibatch: Some(DEFAULT_MINIBATCH),
            max_iter: 100,
            validation_fraction: 0.2,
            tune_rows: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub smote: SmoteSettings,
    pub features: FeatureSettings,
    pub kpca: KpcaSettings,
    pub signature: SignatureSettings,
    pub anomaly: AnomalySettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            smote: SmoteSettings::default(),
            features: FeatureSettings::default(),
            kpca: KpcaSettings::default(),
            signature: SignatureSettings::default(),
            anomaly: AnomalySettings::default(),
        }
    }
}

impl PipelineConfig {
    /// A small configuration for quick runs and tests: reduced tuning budgets,
    /// fewer trees and a smaller kernel reference set.
    pub fn quick() -> Self {
        let mut c = Self::default();
        c.smote.target_count = 2_000;
        c.kpca.max_rows = 300;
        c.kpca.budget = 4;
        c.kpca.p_max = 6;
        c.signature.tpe_budget = 4;
        c.signature.tune_folds = 3;
        c.signature.tune_rows = 2_000;
        c.signature.oof_folds = 3;
        c.signature.max_estimators = 30;
        c.anomaly.k_max = 64;
        c.anomaly.budget = 5;
        c.anomaly.tune_rows = 4_000;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let f = &self.features;
        if !(f.alpha_ig > 0.0 && f.alpha_ig <= 1.0) {
            return bad(format!("features.alpha_ig {} outside (0, 1]", f.alpha_ig));
        }
        if !(f.alpha_su > 0.0 && f.alpha_su < 1.0) {
            return bad(format!("features.alpha_su {} outside (0, 1)", f.alpha_su));
        }
        if f.bins < 2 {
            return bad("features.bins must be at least 2".into());
        }
        let k = &self.kpca;
        if k.max_rows < 2 || k.p_min == 0 || k.p_min > k.p_max || k.p == 0 {
            return bad("kpca needs max_rows ≥ 2 and 1 ≤ p_min ≤ p_max".into());
        }
        for name in k.kernels.iter().chain(std::iter::once(&k.kernel)) {
            if !matches!(name.as_str(), "rbf" | "poly" | "linear") {
                return bad(format!("unknown kernel {name:?}"));
            }
        }
        if k.kernels.is_empty() || (k.tune && k.budget == 0) {
            return bad("kpca tuning needs kernels and a positive budget".into());
        }
        let s = &self.signature;
        if s.tune && (s.tpe_budget == 0 || s.tune_folds < 2) {
            return bad("signature tuning needs a budget and ≥ 2 folds".into());
        }
        if s.oof_folds < 2 || s.max_estimators == 0 || s.tune_rows == 0 {
            return bad("signature.oof_folds must be ≥ 2".into());
        }
        let a = &self.anomaly;
        if a.k_min < 1 || a.k_min > a.k_max {
            return bad(format!("anomaly k range [{}, {}] is empty", a.k_min, a.k_max));
        }
        if a.distances.is_empty() || a.budget == 0 {
            return bad("anomaly tuning needs a distance and a positive budget".into());
        }
        if !(a.p_star > 0.5 && a.p_star < 1.0) {
            return bad(format!("anomaly.p_star {} outside (0.5, 1)", a.p_star));
        }
        if !(a.validation_fraction > 0.0 && a.validation_fraction < 1.0) {
            return bad("anomaly.validation_fraction outside (0, 1)".into());
        }
        if self.smote.enabled && self.smote.k_neighbors == 0 {
            return bad("smote.k_neighbors must be ≥ 1".into());
        }
        Ok(())
    }
}
