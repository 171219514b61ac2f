//! The assembled four-tier detector: training order and per-row routing.

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;

use super::anomaly::{
    cluster_label_accuracy, internal_split, train_anomaly_tier, AnomalyModel, AnomalyReport,
};
use super::config::PipelineConfig;
use super::stack::{capped_rows, train_signature_tier, SignatureReport, StackedModel};
use crate::error::{Error, Result};
use crate::features::{fcbf_filter, ig_select, kpca_fit, BinningRule, FeatureSelection, Kernel, KpcaModel};
use crate::hpo::{bo_gp_optimize_with, get_cat, get_int, GpOptions, HpoOutcome, SearchSpace};
use crate::ingest::LabeledDataset;
use crate::matrix::{argmax, Matrix};
use crate::preprocess::{smote, SmoteConfig, SmoteReport, ZScoreScaler};

pub const FORMAT_VERSION: u32 = 1;

pub const TRACE_SIGNATURE: &[u8] = &[1];
pub const TRACE_CLUSTER: &[u8] = &[1, 3];
pub const TRACE_BIASED: &[u8] = &[1, 3, 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictKind {
    /// A known attack class of the training registry.
    Known(usize),
    UnknownAttack,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub confidence: f64,
    /// Tiers that ran: `[1]`, `[1, 3]` or `[1, 3, 4]`.
    pub tier_trace: &'static [u8],
}

impl Verdict {
    pub fn is_attack(&self) -> bool {
        !matches!(self.kind, VerdictKind::Normal)
    }

    pub fn trace_string(&self) -> String {
        self.tier_trace
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectOptions {
    /// Off reduces the anomaly tiers to plain cluster labels.
    pub use_biased: bool,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self { use_biased: true }
    }
}

/// Seconds spent in each stage for one row; stages that did not run are 0.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub scaler: f64,
    pub stack: f64,
    pub kpca: f64,
    pub cluster: f64,
    pub biased: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineModel {
    pub version: u32,
    pub scaler: ZScoreScaler,
    pub selection: FeatureSelection,
    pub kpca: KpcaModel,
    pub stack: StackedModel,
    pub anomaly: AnomalyModel,
    pub class_names: Vec<String>,
    pub attack_classes: Vec<usize>,
    pub normal_class: usize,
}

impl PipelineModel {
    pub fn input_width(&self) -> usize {
        self.scaler.width()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.selection.feature_names
    }

    pub fn is_attack(&self, class: usize) -> bool {
        self.attack_classes.contains(&class)
    }

    /// Checks that component widths chain from raw input to the clusters.
    pub fn validate(&self) -> Result<()> {
        let raw = self.scaler.width();
        let chain = [
            ("feature names", raw, self.selection.feature_names.len()),
            ("selection", self.selection.selected.len(), self.stack.input_width()),
            ("KPCA input", self.selection.selected.len(), self.kpca.input_width()),
            ("cluster width", self.kpca.p, self.anomaly.clusters.width()),
            ("stack classes", self.class_names.len(), self.stack.n_classes()),
        ];
        for (context, expected, actual) in chain {
            if expected != actual {
                return Err(Error::WidthMismatch {
                    context,
                    expected,
                    actual,
                });
            }
        }
        if self.selection.selected.iter().any(|&j| j >= raw) {
            return Err(Error::Format("selected feature index out of range".into()));
        }
        if self.normal_class >= self.class_names.len() || self.is_attack(self.normal_class) {
            return Err(Error::Format("invalid normal class".into()));
        }
        Ok(())
    }

    fn scale_selected(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.selection.selected.iter().map(|&j| {
            let s = self.scaler.stds[j];
            if s == 0.0 {
                0.0
            } else {
                (row[j] - self.scaler.means[j]) / s
            }
        }));
    }

    fn run(&self, row: &[f64], opts: DetectOptions, mut times: Option<&mut StageTimes>) -> Result<Verdict> {
        if row.len() != self.input_width() {
            return Err(Error::WidthMismatch {
                context: "detector input",
                expected: self.input_width(),
                actual: row.len(),
            });
        }
        let timed = times.is_some();
        let clock = || if timed { Some(Instant::now()) } else { None };
        let lap = |start: Option<Instant>| start.map_or(0.0, |s| s.elapsed().as_secs_f64());
        let begin = clock();

        let t = clock();
        let mut x = Vec::with_capacity(self.selection.selected.len());
        self.scale_selected(row, &mut x);
        let scaler_secs = lap(t);

        let t = clock();
        let c = self.stack.n_classes();
        let mut scratch = vec![0.0; c];
        let mut meta = Vec::with_capacity(self.stack.meta.n_features);
        self.stack.meta_features_into(&x, &mut scratch, &mut meta);
        self.stack.meta.predict_proba_into(&meta, &mut scratch);
        let class = argmax(&scratch);
        let stack_secs = lap(t);
        if let Some(ts) = times.as_deref_mut() {
            ts.scaler = scaler_secs;
            ts.stack = stack_secs;
        }
        if self.is_attack(class) {
            if let Some(ts) = times.as_deref_mut() {
                ts.total = lap(begin);
            }
            return Ok(Verdict {
                kind: VerdictKind::Known(class),
                confidence: scratch[class],
                tier_trace: TRACE_SIGNATURE,
            });
        }

        let t = clock();
        let mut z = vec![0.0; self.kpca.p];
        self.kpca.transform_row_into(&x, &mut z);
        let kpca_secs = lap(t);

        let t = clock();
        let cluster = super::anomaly::cluster_assign(&self.anomaly.clusters, &z)?;
        let cluster_secs = lap(t);
        let mut verdict = Verdict {
            kind: if cluster.attack {
                VerdictKind::UnknownAttack
            } else {
                VerdictKind::Normal
            },
            confidence: cluster.purity,
            tier_trace: TRACE_CLUSTER,
        };
        let t = clock();
        if opts.use_biased && cluster.purity < self.anomaly.clusters.p_star {
            if let Some((attack, confidence)) = self.anomaly.biased_answer(&z, cluster.attack) {
                verdict = Verdict {
                    kind: if attack {
                        VerdictKind::UnknownAttack
                    } else {
                        VerdictKind::Normal
                    },
                    confidence,
                    tier_trace: TRACE_BIASED,
                };
            }
        }
        let biased_secs = lap(t);
        if let Some(ts) = times {
            ts.kpca = kpca_secs;
            ts.cluster = cluster_secs;
            ts.biased = biased_secs;
            ts.total = lap(begin);
        }
        Ok(verdict)
    }

    /// Classifies one raw feature row.
    pub fn detect(&self, row: &[f64]) -> Result<Verdict> {
        self.run(row, DetectOptions::default(), None)
    }

    pub fn detect_with(&self, row: &[f64], opts: DetectOptions) -> Result<Verdict> {
        self.run(row, opts, None)
    }

    /// Classifies one row and reports per-stage wall time.
    pub fn detect_timed(&self, row: &[f64], opts: DetectOptions) -> Result<(Verdict, StageTimes)> {
        let mut times = StageTimes::default();
        let v = self.run(row, opts, Some(&mut times))?;
        Ok((v, times))
    }

    pub fn detect_matrix(&self, x: &Matrix, opts: DetectOptions) -> Result<Vec<Verdict>> {
        (0..x.rows())
            .into_par_iter()
            .map(|i| self.run(x.row(i), opts, None))
            .collect()
    }

    /// Class chosen by the signature tier alone, normal included.
    pub fn signature_class(&self, row: &[f64]) -> Result<usize> {
        if row.len() != self.input_width() {
            return Err(Error::WidthMismatch {
                context: "detector input",
                expected: self.input_width(),
                actual: row.len(),
            });
        }
        let mut x = Vec::with_capacity(self.selection.selected.len());
        self.scale_selected(row, &mut x);
        let mut scratch = vec![0.0; self.stack.n_classes()];
        let mut meta = Vec::with_capacity(self.stack.meta.n_features);
        self.stack.meta_features_into(&x, &mut scratch, &mut meta);
        self.stack.meta.predict_proba_into(&meta, &mut scratch);
        Ok(argmax(&scratch))
    }

    pub fn signature_matrix(&self, x: &Matrix) -> Result<Vec<usize>> {
        (0..x.rows())
            .into_par_iter()
            .map(|i| self.signature_class(x.row(i)))
            .collect()
    }

    /// Label index of a verdict in `report_class_names()`.
    pub fn verdict_label(&self, v: &Verdict) -> usize {
        match v.kind {
            VerdictKind::Known(c) => c,
            VerdictKind::Normal => self.normal_class,
            VerdictKind::UnknownAttack => self.class_names.len(),
        }
    }

    /// The class registry plus a trailing "UnknownAttack" pseudo-class.
    pub fn report_class_names(&self) -> Vec<String> {
        let mut names = self.class_names.clone();
        names.push("UnknownAttack".into());
        names
    }

    /// Upper bounds on per-row work: tree nodes visited and centroid
    /// distance evaluations.
    pub fn work_bound(&self) -> (usize, usize) {
        let biased = [&self.anomaly.b1, &self.anomaly.b2]
            .iter()
            .filter_map(|b| b.as_ref().map(|m| m.max_path_nodes()))
            .max()
            .unwrap_or(0);
        (self.stack.max_path_nodes() + biased, self.anomaly.clusters.kmeans.k)
    }
}

/// Training stages, reported to an observer with the data each receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainStage {
    Scaler,
    Smote,
    FeatureSelection,
    Signature,
    Kpca,
    ClusterTier,
}

impl TrainStage {
    pub fn name(self) -> &'static str {
        match self {
            TrainStage::Scaler => "scaler",
            TrainStage::Smote => "smote",
            TrainStage::FeatureSelection => "feature-selection",
            TrainStage::Signature => "signature",
            TrainStage::Kpca => "kpca",
            TrainStage::ClusterTier => "cluster+biased",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub smote: Option<SmoteReport>,
    pub signature: SignatureReport,
    pub anomaly: AnomalyReport,
    pub kpca_kernel: String,
    pub kpca_p: usize,
    pub kpca_outcome: Option<HpoOutcome>,
    /// Wall seconds per stage in training order.
    pub stage_secs: Vec<(&'static str, f64)>,
    pub total_secs: f64,
}

fn truncate_kpca(model: &KpcaModel, p: usize) -> KpcaModel {
    let p = p.min(model.p);
    let cols: Vec<usize> = (0..p).collect();
    KpcaModel {
        eigenvectors: model.eigenvectors.select_cols(&cols),
        eigenvalues: model.eigenvalues[..p].to_vec(),
        p,
        ..model.clone()
    }
}

/// Fits KPCA on a stratified subsample of `x`, choosing kernel and width by
/// GP optimization of cluster-label accuracy (fixed k) when tuning is on.
fn fit_kpca(
    x: &Matrix,
    y: &[usize],
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(KpcaModel, Option<HpoOutcome>)> {
    let kc = &cfg.kpca;
    let f = x.cols();
    let reference = x.select_rows(&capped_rows(y, 2, kc.max_rows, 1, seed));
    let p_max = kc.p_max.min(reference.rows() - 1).max(1);
    if !kc.tune {
        let kernel = Kernel::default_for(&kc.kernel, f)
            .ok_or_else(|| Error::Config(format!("unknown kernel {:?}", kc.kernel)))?;
        return Ok((kpca_fit(&reference, kernel, kc.p.min(p_max))?, None));
    }
    let mut full: HashMap<&str, KpcaModel> = HashMap::new();
    for name in &kc.kernels {
        let kernel = Kernel::default_for(name, f)
            .ok_or_else(|| Error::Config(format!("unknown kernel {name:?}")))?;
        match kpca_fit(&reference, kernel, p_max) {
            Ok(m) => {
                full.insert(name.as_str(), m);
            }
            Err(e) => log::warn!("KPCA with the {name} kernel failed: {e}"),
        }
    }
    let names: Vec<&str> = kc.kernels.iter().map(String::as_str).filter(|n| full.contains_key(n)).collect();
    if names.is_empty() {
        return Err(Error::Data("no KPCA kernel could be fitted".into()));
    }
    let p_low = kc.p_min.min(p_max) as i64;
    let space = SearchSpace::default()
        .categorical("kernel", &names)?
        .int("p", p_low, p_max as i64, false)?;

    let ac = &cfg.anomaly;
    let tune = capped_rows(y, 2, ac.tune_rows, 2, seed ^ 0x7E57);
    let ty: Vec<usize> = tune.iter().map(|&i| y[i]).collect();
    let (tr, va) = internal_split(&ty, 2, ac.validation_fraction, seed ^ 0x5EED)?;
    let tune_x = x.select_rows(&tune);
    let projected: HashMap<&str, Matrix> = names
        .iter()
        .map(|&n| full[n].transform(&tune_x).map(|z| (n, z)))
        .collect::<Result<_>>()?;
    let k = ((ac.k_min.max(1) as f64 * ac.k_max.min(tr.len()).max(1) as f64).sqrt().round() as usize)
        .clamp(1, tr.len().max(1));
    let objective = |a: &crate::hpo::Assignment| {
        let name = names[get_cat(a, "kernel").unwrap_or(0)];
        let p = get_int(a, "p").unwrap_or(p_low) as usize;
        let cols: Vec<usize> = (0..p.min(full[name].p)).collect();
        let z = projected[name].select_cols(&cols);
        let tx = z.select_rows(&tr);
        let vx = z.select_rows(&va);
        let tyy: Vec<usize> = tr.iter().map(|&i| ty[i]).collect();
        let vyy: Vec<usize> = va.iter().map(|&i| ty[i]).collect();
        cluster_label_accuracy(&tx, &tyy, &vx, &vyy, k, ac.distances[0], ac, seed).map(|v| -v)
    };
    let outcome = bo_gp_optimize_with(
        objective,
        &space,
        &GpOptions {
            budget: kc.budget,
            seed: seed ^ 0xC0FFEE,
            ..GpOptions::default()
        },
    )?;
    let name = names[get_cat(&outcome.best.assignment, "kernel").unwrap_or(0)];
    let p = get_int(&outcome.best.assignment, "p").unwrap_or(p_low) as usize;
    log::info!("KPCA: {name} kernel, {p} components (accuracy {:.5})", -outcome.best.objective);
    Ok((truncate_kpca(&full[name], p), Some(outcome)))
}

/// Trains the full detector on `d`.
pub fn train_pipeline(d: &LabeledDataset, cfg: &PipelineConfig) -> Result<(PipelineModel, TrainReport)> {
    train_pipeline_observed(d, cfg, &mut |_, _| {})
}

/// As [`train_pipeline`], handing each stage's input to `observe` first.
pub fn train_pipeline_observed(
    d: &LabeledDataset,
    cfg: &PipelineConfig,
    observe: &mut dyn FnMut(TrainStage, &LabeledDataset),
) -> Result<(PipelineModel, TrainReport)> {
    cfg.validate()?;
    d.validate()?;
    let started = Instant::now();
    let mut stage_secs = Vec::new();
    let mut lap = |stage: TrainStage, t: Instant| stage_secs.push((stage.name(), t.elapsed().as_secs_f64()));

    let d = d.compact_classes();
    let normal_class = d
        .normal_class()
        .ok_or_else(|| Error::Data("training data has no normal class".into()))?;
    if d.attack_classes.is_empty() {
        return Err(Error::Data("training data has no attack class".into()));
    }
    let seed = cfg.seed;

    let t = Instant::now();
    observe(TrainStage::Scaler, &d);
    let scaler = ZScoreScaler::fit(&d.features)?;
    let scaled = LabeledDataset {
        features: scaler.transform(&d.features)?,
        ..d.clone()
    };
    lap(TrainStage::Scaler, t);

    let t = Instant::now();
    let (balanced, smote_report) = if cfg.smote.enabled {
        observe(TrainStage::Smote, &scaled);
        let (b, r) = smote(
            &scaled,
            &SmoteConfig {
                k_neighbors: cfg.smote.k_neighbors,
                target_count: cfg.smote.target_count,
                seed,
            },
        )?;
        (b, Some(r))
    } else {
        (scaled.clone(), None)
    };
    lap(TrainStage::Smote, t);

    let t = Instant::now();
    observe(TrainStage::FeatureSelection, &balanced);
    let fc = &cfg.features;
    let selection = if fc.enabled {
        let binning = BinningRule { bins: fc.bins };
        let ig = ig_select(&balanced, fc.alpha_ig, binning)?;
        fcbf_filter(&balanced, &ig, fc.alpha_su, binning)?
    } else {
        FeatureSelection {
            importances: vec![1.0 / d.n_features() as f64; d.n_features()],
            selected: (0..d.n_features()).collect(),
            alpha_ig: 1.0,
            alpha_su: fc.alpha_su,
            feature_names: d.feature_names.clone(),
        }
    };
    log::info!("{} of {} features selected", selection.selected.len(), d.n_features());
    lap(TrainStage::FeatureSelection, t);

    let t = Instant::now();
    let signature_data = balanced.select_features(&selection.selected);
    drop(balanced);
    observe(TrainStage::Signature, &signature_data);
    let (stack, signature) = train_signature_tier(&signature_data, &cfg.signature, seed)?;
    drop(signature_data);
    lap(TrainStage::Signature, t);

    let t = Instant::now();
    let anomaly_data = scaled.select_features(&selection.selected);
    let y = anomaly_data.binary_labels();
    observe(TrainStage::Kpca, &anomaly_data);
    let (kpca, kpca_outcome) = fit_kpca(&anomaly_data.features, &y, cfg, seed)?;
    let z = kpca.transform(&anomaly_data.features)?;
    lap(TrainStage::Kpca, t);

    let t = Instant::now();
    observe(
        TrainStage::ClusterTier,
        &LabeledDataset {
            features: z.clone(),
            feature_names: (0..kpca.p).map(|j| format!("pc{j}")).collect(),
            ..anomaly_data.clone()
        },
    );
    let best = signature
        .bases
        .iter()
        .find(|b| b.kind == stack.best_base)
        .map(|b| b.params.clone())
        .unwrap_or_else(|| stack.best_base.default_params());
    let (anomaly, anomaly_report) =
        train_anomaly_tier(&z, &y, &cfg.anomaly, stack.best_base, &best, seed)?;
    lap(TrainStage::ClusterTier, t);

    let model = PipelineModel {
        version: FORMAT_VERSION,
        scaler,
        selection,
        kpca,
        stack,
        anomaly,
        class_names: d.class_names.clone(),
        attack_classes: d.attack_classes.clone(),
        normal_class,
    };
    model.validate()?;
    let kpca_kernel = model.kpca.kernel.name().to_string();
    let kpca_p = model.kpca.p;
    Ok((
        model,
        TrainReport {
            smote: smote_report,
            signature,
            anomaly: anomaly_report,
            kpca_kernel,
            kpca_p,
            kpca_outcome,
            stage_secs,
            total_secs: started.elapsed().as_secs_f64(),
        },
    ))
}
