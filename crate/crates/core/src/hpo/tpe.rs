use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::space::{
    from_internal, internal_bounds, to_internal, Assignment, ParamKind, ParamValue, SearchSpace,
};
use super::trial::HpoOutcome;
use super::Driver;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TpeOptions {
    pub budget: usize,
    pub seed: u64,
    pub n_init: usize,
    /// Quantile splitting the history into good and bad sets.
    pub gamma: f64,
    pub n_candidates: usize,
    /// Weight of the uninformative prior component in each density.
    pub prior_weight: f64,
    pub enqueued: Vec<Assignment>,
}

impl Default for TpeOptions {
    fn default() -> Self {
        Self {
            budget: 50,
            seed: 0,
            n_init: 5,
            gamma: 0.25,
            n_candidates: 24,
            prior_weight: 1.0,
            enqueued: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Density {
    /// Truncated Gaussian mixture on the parameter's internal coordinate.
    Parzen {
        mus: Vec<f64>,
        sigmas: Vec<f64>,
        weights: Vec<f64>,
        lo: f64,
        hi: f64,
    },
    Categorical {
        probs: Vec<f64>,
    },
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

impl Density {
    fn build(kind: &ParamKind, obs: &[f64], prior_weight: f64) -> Self {
        match kind {
            ParamKind::Categorical { choices } => {
                let mut counts = vec![prior_weight; choices.len()];
                for &o in obs {
                    counts[o as usize] += 1.0;
                }
                let total: f64 = counts.iter().sum();
                Density::Categorical {
                    probs: counts.into_iter().map(|c| c / total).collect(),
                }
            }
            _ => {
                let (lo, hi) = internal_bounds(kind);
                let span = (hi - lo).max(1e-12);
                let mut sorted = obs.to_vec();
                sorted.sort_by(f64::total_cmp);
                let n = sorted.len();
                let min_sigma = span / (n as f64 + 1.0).min(100.0);
                let mut mus = Vec::with_capacity(n + 1);
                let mut sigmas = Vec::with_capacity(n + 1);
                let mut weights = Vec::with_capacity(n + 1);
                for (i, &m) in sorted.iter().enumerate() {
                    let left = if i == 0 { lo } else { sorted[i - 1] };
                    let right = if i + 1 == n { hi } else { sorted[i + 1] };
                    let s = (m - left).max(right - m).clamp(min_sigma, span);
                    mus.push(m);
                    sigmas.push(s);
                    weights.push(1.0);
                }
                mus.push(0.5 * (lo + hi));
                sigmas.push(span);
                weights.push(prior_weight);
                let total: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|w| *w /= total);
                Density::Parzen {
                    mus,
                    sigmas,
                    weights,
                    lo,
                    hi,
                }
            }
        }
    }

    fn pdf(&self, t: f64) -> f64 {
        match self {
            Density::Categorical { probs } => probs.get(t as usize).copied().unwrap_or(0.0),
            Density::Parzen {
                mus,
                sigmas,
                weights,
                lo,
                hi,
            } => {
                let z = std_normal();
                mus.iter()
                    .zip(sigmas)
                    .zip(weights)
                    .map(|((m, s), w)| {
                        let mass = z.cdf((hi - m) / s) - z.cdf((lo - m) / s);
                        w * z.pdf((t - m) / s) / (s * mass.max(1e-300))
                    })
                    .sum()
            }
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Density::Categorical { probs } => pick(probs, rng) as f64,
            Density::Parzen {
                mus,
                sigmas,
                weights,
                lo,
                hi,
            } => {
                let c = pick(weights, rng);
                let dist = Normal::new(mus[c], sigmas[c]).expect("positive bandwidth");
                for _ in 0..64 {
                    let v = rng.sample(dist);
                    if (*lo..=*hi).contains(&v) {
                        return v;
                    }
                }
                rng.gen_range(*lo..=*hi)
            }
        }
    }
}

fn pick<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Good (`l`) and bad (`g`) densities built from a split history.
#[derive(Debug, Clone, PartialEq)]
pub struct TpeState {
    space: SearchSpace,
    pub gamma: f64,
    /// Objective threshold: the worst objective inside the good set.
    pub y_star: f64,
    pub n_good: usize,
    good: Vec<Density>,
    bad: Vec<Density>,
}

impl TpeState {
    /// Splits `history` (assignment, objective) at the `gamma` quantile; the
    /// good set holds the `ceil(gamma·n)` lowest objectives, adjusted so tied
    /// objectives fall on one side, and both sets stay non-empty.
    pub fn build(
        space: &SearchSpace,
        history: &[(Assignment, f64)],
        gamma: f64,
        prior_weight: f64,
    ) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!("gamma {gamma} outside (0, 1)")));
        }
        let n = history.len();
        if n < 2 {
            return Err(Error::InvalidArgument(
                "TPE needs at least two trials to split".into(),
            ));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| history[a].1.total_cmp(&history[b].1).then(a.cmp(&b)));
        let mut n_good = ((gamma * n as f64).ceil() as usize).clamp(1, n - 1);
        // Equal objectives never straddle the split: drop the tied group from
        // the good set when something strictly better remains, else absorb it.
        let y = |r: usize| history[order[r]].1;
        if y(n_good) == y(n_good - 1) {
            let start = (0..n_good).rev().find(|&r| y(r) != y(n_good)).map_or(0, |r| r + 1);
            if start > 0 {
                n_good = start;
            } else {
                while n_good < n - 1 && y(n_good) == y(n_good - 1) {
                    n_good += 1;
                }
            }
        }
        let (good_idx, bad_idx) = order.split_at(n_good);
        let densities = |idx: &[usize]| -> Vec<Density> {
            space
                .params()
                .iter()
                .map(|p| {
                    let obs: Vec<f64> = idx
                        .iter()
                        .filter_map(|&i| history[i].0.get(&p.name))
                        .map(|v| to_internal(&p.kind, *v))
                        .collect();
                    Density::build(&p.kind, &obs, prior_weight)
                })
                .collect()
        };
        Ok(Self {
            space: space.clone(),
            gamma,
            y_star: history[order[n_good - 1]].1,
            n_good,
            good: densities(good_idx),
            bad: densities(bad_idx),
        })
    }

    fn log_density(&self, set: &[Density], a: &Assignment) -> f64 {
        self.space
            .params()
            .iter()
            .zip(set)
            .filter_map(|(p, d)| {
                a.get(&p.name)
                    .map(|v| d.pdf(point(&p.kind, *v)).max(1e-300).ln())
            })
            .sum()
    }

    pub fn log_l(&self, a: &Assignment) -> f64 {
        self.log_density(&self.good, a)
    }

    pub fn log_g(&self, a: &Assignment) -> f64 {
        self.log_density(&self.bad, a)
    }

    /// Draws one assignment from `l`, visiting parameters in declaration
    /// order and skipping inactive ones.
    pub fn sample_good<R: Rng>(&self, rng: &mut R) -> Assignment {
        let mut a = Assignment::new();
        for (p, d) in self.space.params().iter().zip(&self.good) {
            if self.space.is_active(p, &a) {
                a.insert(p.name.clone(), from_internal(&p.kind, d.sample(rng)));
            }
        }
        a
    }

    /// Draws `n` candidates from `l` and returns the one maximizing
    /// `l(x)/g(x)` (first wins ties), along with all candidates.
    pub fn propose<R: Rng>(&self, rng: &mut R, n: usize) -> (Assignment, Vec<Assignment>) {
        let candidates: Vec<Assignment> = (0..n.max(1)).map(|_| self.sample_good(rng)).collect();
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, c) in candidates.iter().enumerate() {
            let s = self.log_l(c) - self.log_g(c);
            if s > best_score {
                best_score = s;
                best = i;
            }
        }
        (candidates[best].clone(), candidates)
    }
}

/// Coordinate at which a value's density is evaluated: categorical values by
/// index, numeric values on the internal (possibly log) scale.
fn point(kind: &ParamKind, v: ParamValue) -> f64 {
    to_internal(kind, v)
}

pub fn bo_tpe_optimize<F>(
    objective: F,
    space: &SearchSpace,
    budget: usize,
    seed: u64,
) -> Result<HpoOutcome>
where
    F: FnMut(&Assignment) -> Result<f64>,
{
    bo_tpe_optimize_with(
        objective,
        space,
        &TpeOptions {
            budget,
            seed,
            ..TpeOptions::default()
        },
    )
}

pub fn bo_tpe_optimize_with<F>(
    mut objective: F,
    space: &SearchSpace,
    opts: &TpeOptions,
) -> Result<HpoOutcome>
where
    F: FnMut(&Assignment) -> Result<f64>,
{
    if opts.budget == 0 {
        return Err(Error::InvalidArgument("optimization budget must be ≥ 1".into()));
    }
    if space.is_empty() {
        return Err(Error::InvalidArgument("empty search space".into()));
    }
    for a in &opts.enqueued {
        space.validate(a)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut driver = Driver::new(space, &mut rng);
    let mut queue: VecDeque<Assignment> = opts.enqueued.iter().cloned().collect();
    let n_init = opts.n_init.max(2).min(opts.budget);
    while driver.ledger.len() < opts.budget {
        let next = if let Some(a) = queue.pop_front() {
            a
        } else if driver.ledger.len() < n_init {
            driver.next_initial(&mut rng)
        } else {
            let objectives = driver.ledger.imputed_objectives();
            let history: Vec<(Assignment, f64)> = driver
                .ledger
                .trials()
                .iter()
                .zip(objectives)
                .map(|(t, y)| (t.assignment.clone(), y))
                .collect();
            let state = TpeState::build(space, &history, opts.gamma, opts.prior_weight)?;
            state.propose(&mut rng, opts.n_candidates).0
        };
        driver.evaluate(&mut objective, next);
    }
    HpoOutcome::from_ledger(driver.ledger)
}
