//! Tiers three and four: cluster-labeling k-means with purity-gated biased
//! classifiers.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::AnomalySettings;
use super::stack::capped_rows;
use crate::error::{Error, Result};
use crate::hpo::{
    bo_gp_optimize_with, get_cat, get_int, get_real, GpOptions, HpoOutcome, SearchSpace,
};
use crate::ingest::{split_indices, SplitSpec};
use crate::learners::{fit, EnsembleModel, LearnerKind, TreeParams};
use crate::matrix::{argmax, Matrix};
use crate::preprocess::{kmeans_fit, Distance, KMeansModel, KMeansOptions};

const NORMAL: usize = 0;
const ATTACK: usize = 1;

/// k-means centroids tagged normal/attack by majority vote, with the share
/// of the majority label (purity) per cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterLabelModel {
    pub kmeans: KMeansModel,
    /// `true` for attack clusters.
    pub attack: Vec<bool>,
    pub purity: Vec<f64>,
    /// Members of clusters below this purity are uncertain.
    pub p_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterAssignment {
    pub cluster: usize,
    pub attack: bool,
    pub purity: f64,
}

impl ClusterLabelModel {
    pub fn width(&self) -> usize {
        self.kmeans.centroids.cols()
    }

    /// Cluster label of every row of `x`.
    pub fn predict_matrix(&self, x: &Matrix) -> Vec<bool> {
        x.iter_rows().map(|r| self.attack[self.kmeans.predict(r)]).collect()
    }
}

/// Nearest centroid of `row` (lower index on ties) with its stored label and
/// purity.
pub fn cluster_assign(clm: &ClusterLabelModel, row: &[f64]) -> Result<ClusterAssignment> {
    if row.len() != clm.width() {
        return Err(Error::WidthMismatch {
            context: "cluster assignment",
            expected: clm.width(),
            actual: row.len(),
        });
    }
    let cluster = clm.kmeans.predict(row);
    Ok(ClusterAssignment {
        cluster,
        attack: clm.attack[cluster],
        purity: clm.purity[cluster],
    })
}

/// Labels the clusters of `kmeans` from binary labels `y` of the rows `x`.
/// Ties go to normal; empty clusters take the overall majority with purity
/// one half.
pub fn label_clusters(kmeans: KMeansModel, x: &Matrix, y: &[usize], p_star: f64) -> ClusterLabelModel {
    let k = kmeans.k;
    let mut counts = vec![[0usize; 2]; k];
    for (row, &label) in x.iter_rows().zip(y) {
        counts[kmeans.predict(row)][label.min(1)] += 1;
    }
    let attacks: usize = y.iter().filter(|&&l| l == ATTACK).count();
    let global_attack = attacks * 2 > y.len();
    let mut attack = Vec::with_capacity(k);
    let mut purity = Vec::with_capacity(k);
    for [n, a] in counts {
        if n + a == 0 {
            attack.push(global_attack);
            purity.push(0.5);
        } else {
            attack.push(a > n);
            purity.push(n.max(a) as f64 / (n + a) as f64);
        }
    }
    ClusterLabelModel {
        kmeans,
        attack,
        purity,
        p_star,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyModel {
    pub clusters: ClusterLabelModel,
    /// Trained on the cluster tier's false negatives; decides uncertain rows
    /// in normal clusters.
    pub b1: Option<EnsembleModel>,
    /// Trained on the false positives; decides uncertain rows in attack
    /// clusters.
    pub b2: Option<EnsembleModel>,
    pub biased_kind: LearnerKind,
}

/// Outcome of the anomaly tiers for one row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyDecision {
    pub attack: bool,
    pub confidence: f64,
    pub cluster: ClusterAssignment,
    /// A biased classifier made the final call.
    pub biased: bool,
}

impl AnomalyModel {
    /// Routes one transformed row. With `use_biased` off, uncertain rows keep
    /// their cluster label.
    pub fn decide(&self, row: &[f64], use_biased: bool) -> Result<AnomalyDecision> {
        let cluster = cluster_assign(&self.clusters, row)?;
        let mut decision = AnomalyDecision {
            attack: cluster.attack,
            confidence: cluster.purity,
            cluster,
            biased: false,
        };
        if !use_biased || cluster.purity >= self.clusters.p_star {
            return Ok(decision);
        }
        if let Some((attack, confidence)) = self.biased_answer(row, cluster.attack) {
            decision.attack = attack;
            decision.confidence = confidence;
            decision.biased = true;
        }
        Ok(decision)
    }

    /// Answer of the biased classifier responsible for rows in a cluster
    /// labeled `attack_cluster`, if that classifier exists.
    pub fn biased_answer(&self, row: &[f64], attack_cluster: bool) -> Option<(bool, f64)> {
        let model = if attack_cluster { &self.b2 } else { &self.b1 };
        model.as_ref().map(|m| {
            let mut proba = [0.0; 2];
            m.predict_proba_into(row, &mut proba);
            let label = argmax(&proba);
            (label == ATTACK, proba[label])
        })
    }
}

#[derive(Debug, Clone)]
pub struct AnomalyReport {
    pub k: usize,
    pub distance: Distance,
    pub p_star: f64,
    /// Cluster-label accuracy on the internal validation split.
    pub validation_accuracy: f64,
    pub false_negatives: usize,
    pub false_positives: usize,
    pub cluster_outcome: Option<HpoOutcome>,
    pub p_star_outcome: Option<HpoOutcome>,
}

fn kmeans_options(cfg: &AnomalySettings, seed: u64) -> KMeansOptions {
    KMeansOptions {
        max_iter: cfg.max_iter,
        seed,
        minibatch_size: cfg.minibatch,
        ..KMeansOptions::default()
    }
}

/// Stratified internal split, falling back to a plain shuffle when a class
/// has a single row.
pub(crate) fn internal_split(y: &[usize], n_classes: usize, validation: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut spec = SplitSpec {
        train_fraction: 1.0 - validation,
        seed,
        stratified: true,
    };
    match split_indices(y, n_classes, &spec) {
        Ok(s) => Ok(s),
        Err(Error::Data(_)) => {
            spec.stratified = false;
            split_indices(y, n_classes, &spec)
        }
        Err(e) => Err(e),
    }
}

fn accuracy(pred: &[bool], y: &[usize]) -> f64 {
    let hits = pred.iter().zip(y).filter(|(&p, &t)| p == (t == ATTACK)).count();
    hits as f64 / y.len().max(1) as f64
}

/// Accuracy of cluster labels on `(vx, vy)` after clustering `(tx, ty)`.
pub fn cluster_label_accuracy(
    tx: &Matrix,
    ty: &[usize],
    vx: &Matrix,
    vy: &[usize],
    k: usize,
    distance: Distance,
    cfg: &AnomalySettings,
    seed: u64,
) -> Result<f64> {
    let km = kmeans_fit(tx, k, distance, &kmeans_options(cfg, seed))?;
    let clm = label_clusters(km, tx, ty, cfg.p_star);
    Ok(accuracy(&clm.predict_matrix(vx), vy))
}

/// Draws `n` row indices from `pool`, without replacement when possible.
fn draw<R: Rng>(pool: &[usize], n: usize, rng: &mut R) -> Vec<usize> {
    if pool.is_empty() || n == 0 {
        return Vec::new();
    }
    if n <= pool.len() {
        sample(rng, pool.len(), n).into_iter().map(|i| pool[i]).collect()
    } else {
        log::warn!("biased classifier: sampling {n} counterexamples from {} with replacement", pool.len());
        (0..n).map(|_| pool[rng.gen_range(0..pool.len())]).collect()
    }
}

/// Trains one biased classifier on `errors` (label `error_label`) plus as
/// many rows drawn from `pool` (the opposite label).
fn biased_classifier(
    x: &Matrix,
    errors: &[usize],
    error_label: usize,
    pool: &[usize],
    kind: LearnerKind,
    params: &TreeParams,
    seed: u64,
) -> Result<Option<EnsembleModel>> {
    if errors.is_empty() || pool.is_empty() {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counter = draw(pool, errors.len(), &mut rng);
    let mut rows = errors.to_vec();
    rows.extend_from_slice(&counter);
    let mut y = vec![error_label; errors.len()];
    y.extend(std::iter::repeat(1 - error_label).take(counter.len()));
    fit(kind, &x.select_rows(&rows), &y, 2, params, seed).map(Some)
}

/// Both biased classifiers from the cluster tier's errors on `(x, y)`.
fn biased_pair(
    clm: &ClusterLabelModel,
    x: &Matrix,
    y: &[usize],
    kind: LearnerKind,
    params: &TreeParams,
    seed: u64,
) -> Result<(Option<EnsembleModel>, Option<EnsembleModel>, usize, usize)> {
    let pred = clm.predict_matrix(x);
    let (mut fns, mut fps, mut normals, mut attacks) = (vec![], vec![], vec![], vec![]);
    for (i, (&p, &t)) in pred.iter().zip(y).enumerate() {
        match (t == ATTACK, p) {
            (true, false) => fns.push(i),
            (false, true) => fps.push(i),
            _ => {}
        }
        if t == ATTACK {
            attacks.push(i);
        } else {
            normals.push(i);
        }
    }
    let b1 = biased_classifier(x, &fns, ATTACK, &normals, kind, params, seed ^ 0xB1)?;
    let b2 = biased_classifier(x, &fps, NORMAL, &attacks, kind, params, seed ^ 0xB2)?;
    if b1.is_none() {
        log::info!("cluster tier has no false negatives; B1 omitted");
    }
    if b2.is_none() {
        log::info!("cluster tier has no false positives; B2 omitted");
    }
    Ok((b1, b2, fns.len(), fps.len()))
}

fn cluster_space(cfg: &AnomalySettings, rows: usize) -> Result<SearchSpace> {
    let k_max = cfg.k_max.min(rows.max(1)) as i64;
    let k_min = (cfg.k_min as i64).min(k_max);
    let mut space = SearchSpace::default().int("k", k_min, k_max, k_max >= 4 * k_min.max(1))?;
    if cfg.distances.len() > 1 {
        let names: Vec<&str> = cfg.distances.iter().map(|d| d.name()).collect();
        space = space.categorical("distance", &names)?;
    }
    Ok(space)
}

/// Trains the anomaly tiers on `x` (already projected) with binary labels
/// `y` (0 normal, 1 attack).
///
/// `k` and the distance are chosen by GP optimization of cluster-label
/// accuracy on an internal split; the final clustering uses every row. The
/// biased classifiers use `kind` with `params`.
pub fn train_anomaly_tier(
    x: &Matrix,
    y: &[usize],
    cfg: &AnomalySettings,
    kind: LearnerKind,
    params: &TreeParams,
    seed: u64,
) -> Result<(AnomalyModel, AnomalyReport)> {
    if x.rows() != y.len() {
        return Err(Error::Data(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    if y.iter().any(|&l| l > ATTACK) {
        return Err(Error::InvalidArgument("anomaly labels must be 0 or 1".into()));
    }
    let attacks = y.iter().filter(|&&l| l == ATTACK).count();
    if attacks == 0 || attacks == y.len() {
        return Err(Error::Data(
            "the anomaly tier needs both normal and attack rows".into(),
        ));
    }

    let tune = capped_rows(y, 2, cfg.tune_rows, 2, seed);
    let ty_all: Vec<usize> = tune.iter().map(|&i| y[i]).collect();
    let (tr, va) = internal_split(&ty_all, 2, cfg.validation_fraction, seed ^ 0x5EED)?;
    let pick = |idx: &[usize]| -> (Matrix, Vec<usize>) {
        let rows: Vec<usize> = idx.iter().map(|&i| tune[i]).collect();
        (x.select_rows(&rows), rows.iter().map(|&i| y[i]).collect())
    };
    let (tx, ty) = pick(&tr);
    let (vx, vy) = pick(&va);

    let space = cluster_space(cfg, tx.rows())?;
    let decode = |a: &crate::hpo::Assignment| {
        let k = get_int(a, "k").unwrap_or(cfg.k_min as i64) as usize;
        let d = get_cat(a, "distance").map_or(cfg.distances[0], |c| cfg.distances[c]);
        (k, d)
    };
    let objective = |a: &crate::hpo::Assignment| {
        let (k, d) = decode(a);
        cluster_label_accuracy(&tx, &ty, &vx, &vy, k, d, cfg, seed).map(|acc| -acc)
    };
    let opts = GpOptions {
        budget: cfg.budget,
        seed,
        ..GpOptions::default()
    };
    let outcome = bo_gp_optimize_with(objective, &space, &opts)?;
    let (k, distance) = decode(&outcome.best.assignment);
    let validation_accuracy = -outcome.best.objective;
    log::info!(
        "cluster tier: k = {k}, {} distance, validation accuracy {validation_accuracy:.5}",
        distance.name()
    );

    let mut p_star = cfg.p_star;
    let mut p_star_outcome = None;
    if cfg.tune_p_star {
        let km = kmeans_fit(&tx, k, distance, &kmeans_options(cfg, seed))?;
        let clm = label_clusters(km, &tx, &ty, cfg.p_star);
        let (b1, b2, _, _) = biased_pair(&clm, &tx, &ty, kind, params, seed)?;
        let probe = AnomalyModel {
            clusters: clm,
            b1,
            b2,
            biased_kind: kind,
        };
        // the purity and both biased answers per row do not depend on p*
        let cached: Vec<(f64, bool, bool)> = vx
            .iter_rows()
            .map(|r| {
                let c = cluster_assign(&probe.clusters, r)?;
                let routed = probe.biased_answer(r, c.attack).map_or(c.attack, |b| b.0);
                Ok((c.purity, c.attack, routed))
            })
            .collect::<Result<_>>()?;
        let space = SearchSpace::default().real("p_star", 0.5, 0.999, false)?;
        let objective = |a: &crate::hpo::Assignment| {
            let ps = get_real(a, "p_star").unwrap_or(cfg.p_star);
            let hits = cached
                .iter()
                .zip(&vy)
                .filter(|((purity, plain, routed), &t)| {
                    let p = if *purity >= ps { *plain } else { *routed };
                    p == (t == ATTACK)
                })
                .count();
            Ok(-(hits as f64) / vy.len().max(1) as f64)
        };
        let mut enqueued = crate::hpo::Assignment::new();
        enqueued.insert("p_star".into(), crate::hpo::ParamValue::Real(cfg.p_star));
        let outcome = bo_gp_optimize_with(
            objective,
            &space,
            &GpOptions {
                budget: cfg.p_star_budget.max(1),
                seed: seed ^ 0x9_5747,
                enqueued: vec![enqueued],
                ..GpOptions::default()
            },
        )?;
        p_star = get_real(&outcome.best.assignment, "p_star").unwrap_or(cfg.p_star);
        // keep the threshold inside the open interval
        p_star = p_star.clamp(0.5 + 1e-9, 0.999);
        log::info!("tuned p* = {p_star:.4}");
        p_star_outcome = Some(outcome);
    }

    let km = kmeans_fit(x, k.min(x.rows()), distance, &kmeans_options(cfg, seed))?;
    let clusters = label_clusters(km, x, y, p_star);
    let (b1, b2, false_negatives, false_positives) =
        biased_pair(&clusters, x, y, kind, params, seed)?;
    Ok((
        AnomalyModel {
            clusters,
            b1,
            b2,
            biased_kind: kind,
        },
        AnomalyReport {
            k,
            distance,
            p_star,
            validation_accuracy,
            false_negatives,
            false_positives,
            cluster_outcome: Some(outcome),
            p_star_outcome,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed_model(centroids: Vec<Vec<f64>>) -> KMeansModel {
        let k = centroids.len();
        KMeansModel {
            centroids: Matrix::from_rows(&centroids).unwrap(),
            k,
            distance: Distance::Euclidean,
            inertia: 0.0,
            iterations_run: 0,
            objective_trace: Vec::new(),
        }
    }

    #[test]
    fn nine_to_one_cluster_is_uncertain_attack() {
        let km = fixed_model(vec![vec![0.0], vec![10.0]]);
        let mut rows = vec![vec![10.0]; 10];
        rows.extend(vec![vec![0.0]; 5]);
        let mut y = vec![ATTACK; 9];
        y.push(NORMAL);
        y.extend([NORMAL; 5]);
        let x = Matrix::from_rows(&rows).unwrap();
        let clm = label_clusters(km, &x, &y, 0.933);
        assert_eq!(clm.attack, vec![false, true]);
        assert!((clm.purity[1] - 0.9).abs() < 1e-15);
        assert_eq!(clm.purity[0], 1.0);
        let a = cluster_assign(&clm, &[9.0]).unwrap();
        assert_eq!((a.cluster, a.attack), (1, true));
        assert!(a.purity < clm.p_star);
        let b = cluster_assign(&clm, &[0.0]).unwrap();
        assert_eq!((b.cluster, b.attack, b.purity), (0, false, 1.0));
        assert!(cluster_assign(&clm, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn ties_pick_lower_cluster_and_normal_label() {
        let km = fixed_model(vec![vec![-1.0], vec![1.0], vec![50.0]]);
        let x = Matrix::from_rows(&[vec![-1.0], vec![-1.0], vec![1.0]]).unwrap();
        let clm = label_clusters(km, &x, &[NORMAL, ATTACK, ATTACK], 0.933);
        assert_eq!(cluster_assign(&clm, &[0.0]).unwrap().cluster, 0);
        // 1 normal vs 1 attack resolves to normal
        assert!(!clm.attack[0]);
        assert_eq!(clm.purity[0], 0.5);
        // empty cluster takes the overall majority (attack) at purity 0.5
        assert!(clm.attack[2]);
        assert_eq!(clm.purity[2], 0.5);
    }

    fn blobs(n: usize, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let attack = i % 2;
            let c = if attack == 1 { 5.0 } else { -5.0 };
            rows.push(vec![c + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            y.push(attack);
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    fn lean() -> AnomalySettings {
        AnomalySettings {
            k_min: 2,
            k_max: 16,
            budget: 4,
            minibatch: None,
            ..AnomalySettings::default()
        }
    }

    #[test]
    fn separable_blobs_need_no_biased_classifiers() {
        let (x, y) = blobs(400, 1);
        let kind = LearnerKind::DecisionTree;
        let (m, report) =
            train_anomaly_tier(&x, &y, &lean(), kind, &kind.default_params(), 3).unwrap();
        assert!(m.clusters.purity.iter().all(|&p| p == 1.0 || p == 0.5));
        assert_eq!((report.false_negatives, report.false_positives), (0, 0));
        assert!(m.b1.is_none() && m.b2.is_none());
        for (row, &t) in x.iter_rows().zip(&y) {
            let d = m.decide(row, true).unwrap();
            assert!(!d.biased);
            assert_eq!(d.attack, t == ATTACK);
        }
    }

    #[test]
    fn biased_training_sets_are_balanced() {
        // attacks hidden inside the normal blob become false negatives
        let (mut x, mut y) = blobs(400, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..12 {
            x.push_row(&[-5.0 + rng.gen_range(-0.2..0.2), 0.9]).unwrap();
            y.push(ATTACK);
        }
        let kind = LearnerKind::DecisionTree;
        let cfg = AnomalySettings {
            k_min: 2,
            k_max: 2,
            ..lean()
        };
        let (m, report) = train_anomaly_tier(&x, &y, &cfg, kind, &kind.default_params(), 3).unwrap();
        assert!(report.false_negatives >= 12);
        let b1 = m.b1.as_ref().unwrap();
        // a fully grown tree on FNs + equal normals separates its training rows
        let hidden = x.row(x.rows() - 1);
        assert_eq!(b1.predict(hidden).unwrap(), ATTACK);
        assert!(m.b2.is_none());
    }

    #[test]
    fn rejects_single_class_input() {
        let (x, _) = blobs(20, 0);
        let kind = LearnerKind::DecisionTree;
        let err = train_anomaly_tier(&x, &[0; 20], &lean(), kind, &kind.default_params(), 0);
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn p_star_tuning_stays_in_range() {
        let (mut x, mut y) = blobs(300, 4);
        for i in 0..30 {
            x.push_row(&[-5.0 + 0.01 * i as f64, 0.0]).unwrap();
            y.push(ATTACK);
        }
        let kind = LearnerKind::DecisionTree;
        let cfg = AnomalySettings {
            tune_p_star: true,
            p_star_budget: 5,
            ..lean()
        };
        let (m, report) = train_anomaly_tier(&x, &y, &cfg, kind, &kind.default_params(), 5).unwrap();
        assert!(report.p_star > 0.5 && report.p_star < 1.0);
        assert_eq!(m.clusters.p_star, report.p_star);
    }
}
