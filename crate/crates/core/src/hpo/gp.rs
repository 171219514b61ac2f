use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::space::{Assignment, SearchSpace};
use super::trial::HpoOutcome;
use super::Driver;
use crate::error::{Error, Result};

/// Length scales (on the unit cube) tried when fitting the surrogate; the one
/// with the highest marginal likelihood is kept.
const LENGTH_SCALE_GRID: [f64; 8] = [0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.2, 2.0];

fn matern52(a: &[f64], b: &[f64], length_scale: f64, signal_var: f64) -> f64 {
    let r = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
        / length_scale;
    let s5 = 5f64.sqrt() * r;
    signal_var * (1.0 + s5 + 5.0 * r * r / 3.0) * (-s5).exp()
}

/// Lower-triangular Cholesky factor of a row-major `n×n` matrix.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn forward(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * z[k];
        }
        z[i] = s / l[i * n + i];
    }
    z
}

fn backward(l: &[f64], n: usize, z: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Zero-mean Gaussian process with a Matérn-5/2 kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct GpSurrogate {
    pub length_scale: f64,
    pub signal_var: f64,
    /// Diagonal noise actually used, including any jitter added for stability.
    pub noise_var: f64,
    x: Vec<Vec<f64>>,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    log_marginal: f64,
}

impl GpSurrogate {
    pub fn fit(
        x: Vec<Vec<f64>>,
        y: &[f64],
        length_scale: f64,
        signal_var: f64,
        noise_var: f64,
    ) -> Result<Self> {
        let n = x.len();
        if n == 0 || n != y.len() {
            return Err(Error::InvalidArgument(
                "surrogate needs matching, non-empty inputs and targets".into(),
            ));
        }
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = matern52(&x[i], &x[j], length_scale, signal_var);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        let mut noise = noise_var.max(0.0);
        let mut jitter = 1e-10 * signal_var;
        let chol = loop {
            let mut kn = k.clone();
            for i in 0..n {
                kn[i * n + i] += noise;
            }
            if let Some(l) = cholesky(&kn, n) {
                break l;
            }
            noise += jitter;
            jitter *= 10.0;
            if jitter > signal_var {
                return Err(Error::Invariant(
                    "kernel matrix is not positive definite".into(),
                ));
            }
        };
        let alpha = backward(&chol, n, &forward(&chol, n, y));
        let log_det: f64 = (0..n).map(|i| chol[i * n + i].ln()).sum();
        let fit: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
        let log_marginal =
            -0.5 * fit - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        Ok(Self {
            length_scale,
            signal_var,
            noise_var: noise,
            x,
            chol,
            alpha,
            log_marginal,
        })
    }

    /// Fits one surrogate per grid length scale and keeps the most likely.
    pub fn fit_best(x: Vec<Vec<f64>>, y: &[f64], noise_var: f64) -> Result<Self> {
        let mut best: Option<GpSurrogate> = None;
        for &ls in &LENGTH_SCALE_GRID {
            let gp = Self::fit(x.clone(), y, ls, 1.0, noise_var)?;
            if best
                .as_ref()
                .map_or(true, |b| gp.log_marginal > b.log_marginal)
            {
                best = Some(gp);
            }
        }
        best.ok_or_else(|| Error::Invariant("empty length-scale grid".into()))
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal
    }

    /// Posterior mean and variance at `q`.
    pub fn predict(&self, q: &[f64]) -> (f64, f64) {
        let n = self.x.len();
        let ks: Vec<f64> = self
            .x
            .iter()
            .map(|xi| matern52(xi, q, self.length_scale, self.signal_var))
            .collect();
        let mean = ks.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = forward(&self.chol, n, &ks);
        let var = self.signal_var - v.iter().map(|t| t * t).sum::<f64>();
        (mean, var.max(0.0))
    }
}

/// Expected improvement below `best` for a Gaussian prediction.
pub fn expected_improvement(mean: f64, var: f64, best: f64) -> f64 {
    let sd = var.sqrt();
    let gap = best - mean;
    if sd < 1e-12 {
        return gap.max(0.0);
    }
    let z = gap / sd;
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    gap * std.cdf(z) + sd * std.pdf(z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpOptions {
    pub budget: usize,
    pub seed: u64,
    pub n_init: usize,
    /// Random candidates scored per round in continuous spaces.
    pub n_candidates: usize,
    pub noise_var: f64,
    /// Evaluated before the quasi-random design, in order.
    pub enqueued: Vec<Assignment>,
}

impl Default for GpOptions {
    fn default() -> Self {
        Self {
            budget: 20,
            seed: 0,
            n_init: 5,
            n_candidates: 512,
            noise_var: 1e-6,
            enqueued: Vec::new(),
        }
    }
}

pub fn bo_gp_optimize<F>(
    objective: F,
    space: &SearchSpace,
    budget: usize,
    seed: u64,
) -> Result<HpoOutcome>
where
    F: FnMut(&Assignment) -> Result<f64>,
{
    bo_gp_optimize_with(
        objective,
        space,
        &GpOptions {
            budget,
            seed,
            ..GpOptions::default()
        },
    )
}

pub fn bo_gp_optimize_with<F>(
    mut objective: F,
    space: &SearchSpace,
    opts: &GpOptions,
) -> Result<HpoOutcome>
where
    F: FnMut(&Assignment) -> Result<f64>,
{
    if opts.budget == 0 {
        return Err(Error::InvalidArgument("optimization budget must be ≥ 1".into()));
    }
    if !space.is_flat() {
        return Err(Error::InvalidArgument(
            "the GP optimizer requires a space without conditional parameters".into(),
        ));
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
    let n_init = opts.n_init.max(1).min(opts.budget);
    while driver.ledger.len() < opts.budget && !driver.exhausted() {
        let next = if let Some(a) = queue.pop_front() {
            a
        } else if driver.ledger.len() < n_init {
            driver.next_initial(&mut rng)
        } else {
            propose(&driver, opts, &mut rng)?
        };
        driver.evaluate(&mut objective, next);
    }
    HpoOutcome::from_ledger(driver.ledger)
}

fn propose<R: Rng>(driver: &Driver<'_>, opts: &GpOptions, rng: &mut R) -> Result<Assignment> {
    let space = driver.space;
    let trials = driver.ledger.trials();
    let raw = driver.ledger.imputed_objectives();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / raw.len() as f64).sqrt();
    let sd = if sd > 1e-12 { sd } else { 1.0 };
    let y: Vec<f64> = raw.iter().map(|v| (v - mean) / sd).collect();
    let x: Vec<Vec<f64>> = trials.iter().map(|t| space.encode(&t.assignment)).collect();
    let gp = GpSurrogate::fit_best(x, &y, opts.noise_var)?;
    let best_y = y.iter().copied().fold(f64::INFINITY, f64::min);

    let candidates: Vec<Assignment> = if driver.finite.is_some() {
        let mut open: Vec<Assignment> = space
            .enumerate()
            .into_iter()
            .filter(|a| !driver.is_seen(a))
            .collect();
        if open.len() > 4096 {
            open.shuffle(rng);
            open.truncate(4096);
        }
        open
    } else {
        let incumbent = driver
            .ledger
            .best()
            .map(|t| space.encode(&t.assignment))
            .unwrap_or_else(|| vec![0.5; space.len()]);
        let local = Normal::new(0.0, 0.05).expect("valid sd");
        let mut c: Vec<Assignment> = (0..opts.n_candidates)
            .map(|_| space.sample_uniform(rng))
            .collect();
        for _ in 0..opts.n_candidates / 8 {
            let u: Vec<f64> = incumbent
                .iter()
                .map(|v| (v + rng.sample(local)).clamp(0.0, 1.0))
                .collect();
            c.push(space.decode(&u));
        }
        c
    };
    let scored = candidates
        .into_iter()
        .map(|a| {
            let (m, v) = gp.predict(&space.encode(&a));
            (expected_improvement(m, v, best_y), a)
        })
        .fold(None, |acc: Option<(f64, Assignment)>, (ei, a)| match acc {
            Some((b, _)) if b >= ei => acc,
            _ => Some((ei, a)),
        });
    Ok(match scored {
        Some((_, a)) => a,
        None => driver.random_unseen(rng),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hpo::{get_int, get_real, ParamValue};
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn one_observation_interpolates() {
        let gp = GpSurrogate::fit(vec![vec![0.3, 0.6]], &[2.5], 0.4, 1.0, 1e-10).unwrap();
        let (m, v) = gp.predict(&[0.3, 0.6]);
        assert!((m - 2.5).abs() < 1e-8);
        assert!(v < 1e-8);
        let (m_far, v_far) = gp.predict(&[50.0, 50.0]);
        assert!(m_far.abs() < 1e-8 && (v_far - 1.0).abs() < 1e-8);
    }

    #[test]
    fn posterior_matches_direct_solve() {
        let xs = vec![
            vec![0.1, 0.2],
            vec![0.4, 0.9],
            vec![0.8, 0.3],
            vec![0.55, 0.5],
            vec![0.05, 0.95],
        ];
        let y = [0.3, -1.2, 0.8, 0.1, -0.4];
        let (ls, s2, noise) = (0.35, 1.7, 1e-4);
        let gp = GpSurrogate::fit(xs.clone(), &y, ls, s2, noise).unwrap();
        let n = xs.len();
        let kern = |a: &[f64], b: &[f64]| {
            let r = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() / ls;
            s2 * (1.0 + 5f64.sqrt() * r + 5.0 * r * r / 3.0) * (-(5f64.sqrt()) * r).exp()
        };
        let k = DMatrix::from_fn(n, n, |i, j| {
            kern(&xs[i], &xs[j]) + if i == j { noise } else { 0.0 }
        });
        let lu = k.lu();
        for q in [[0.2, 0.2], [0.7, 0.7], [0.4, 0.9]] {
            let ks = DVector::from_fn(n, |i, _| kern(&xs[i], &q));
            let alpha = lu.solve(&DVector::from_column_slice(&y)).unwrap();
            let mean = ks.dot(&alpha);
            let var = s2 - ks.dot(&lu.solve(&ks).unwrap());
            let (m, v) = gp.predict(&q);
            assert!((m - mean).abs() <= 1e-6 * mean.abs().max(1e-3), "{m} vs {mean}");
            assert!((v - var).abs() <= 1e-6 * var.abs().max(1e-3), "{v} vs {var}");
        }
    }

    #[test]
    fn ei_is_nonnegative_and_zero_without_upside() {
        assert!(expected_improvement(0.0, 1.0, 0.0) > 0.39);
        assert_eq!(expected_improvement(2.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement(0.0, 0.0, 1.0), 1.0);
    }

    fn k_space() -> SearchSpace {
        SearchSpace::default().int("k", 2, 15, false).unwrap()
    }

    #[test]
    fn quadratic_over_integers() {
        let mut hits = 0;
        for seed in 0..10 {
            let out = bo_gp_optimize(
                |a| Ok((get_int(a, "k").unwrap() as f64 - 7.0).powi(2)),
                &k_space(),
                20,
                seed,
            )
            .unwrap();
            if get_int(&out.best.assignment, "k") == Some(7) {
                hits += 1;
            }
        }
        assert!(hits >= 9, "{hits}/10");
    }

    #[test]
    fn budget_one_and_single_point() {
        let out = bo_gp_optimize(|_| Ok(1.0), &k_space(), 1, 3).unwrap();
        assert_eq!(out.ledger.len(), 1);
        let single = SearchSpace::default().int("k", 2, 2, false).unwrap();
        let out = bo_gp_optimize(|_| Ok(0.0), &single, 20, 3).unwrap();
        assert_eq!(out.ledger.len(), 1);
        assert_eq!(out.best.assignment["k"], ParamValue::Int(2));
    }

    #[test]
    fn continuous_search_improves_and_is_deterministic() {
        let space = SearchSpace::default()
            .real("x", -3.0, 3.0, false)
            .unwrap()
            .real("y", 0.01, 100.0, true)
            .unwrap();
        let f = |a: &Assignment| {
            let x = get_real(a, "x").unwrap();
            let y = get_real(a, "y").unwrap().ln();
            Ok((x - 1.0).powi(2) + (y - 1.0).powi(2))
        };
        let a = bo_gp_optimize(f, &space, 25, 11).unwrap();
        let b = bo_gp_optimize(f, &space, 25, 11).unwrap();
        let seq = |o: &HpoOutcome| {
            o.ledger
                .trials()
                .iter()
                .map(|t| t.assignment.clone())
                .collect::<Vec<_>>()
        };
        assert_eq!(seq(&a), seq(&b));
        assert!(a.best.objective < 0.2, "{}", a.best.objective);
        let trace = a.ledger.incumbent_trace();
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn failures_are_recorded_and_search_continues() {
        let out = bo_gp_optimize(
            |a| {
                let k = get_int(a, "k").unwrap();
                if k % 3 == 0 {
                    Err(Error::Data("boom".into()))
                } else {
                    Ok(k as f64)
                }
            },
            &k_space(),
            14,
            1,
        )
        .unwrap();
        assert!(out.ledger.trials().iter().any(|t| t.failed));
        assert_eq!(out.best.assignment["k"], ParamValue::Int(2));
    }
}
