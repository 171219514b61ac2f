//! Bayesian hyper-parameter optimization: a Gaussian-process surrogate with
//! expected improvement and a tree-structured Parzen estimator.
//!
//! Both engines minimize. Trials run one at a time in proposal order, so a
//! fixed seed yields an identical trial sequence.

mod gp;
mod space;
mod tpe;
mod trial;

pub use gp::{bo_gp_optimize, bo_gp_optimize_with, expected_improvement, GpOptions, GpSurrogate};
pub use space::{
    format_assignment, get_cat, get_int, get_real, Assignment, Condition, ParamKind, ParamSpec,
    ParamValue, SearchSpace,
};
pub use tpe::{bo_tpe_optimize, bo_tpe_optimize_with, TpeOptions, TpeState};
pub use trial::{HpoOutcome, Trial, TrialLedger};

use std::collections::HashSet;
use std::time::Instant;

use rand::Rng;

use crate::error::Result;

/// Radical-inverse Halton point `index` in `dims` dimensions, shifted
/// modulo 1 by `shift` (Cranley-Patterson rotation).
pub fn halton_point(index: usize, dims: usize, shift: &[f64]) -> Vec<f64> {
    const PRIMES: [u64; 24] = [
        2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    ];
    (0..dims)
        .map(|d| {
            let base = PRIMES[d % PRIMES.len()];
            let mut f = 1.0;
            let mut r = 0.0;
            let mut i = index as u64 + 1;
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            let s = shift.get(d).copied().unwrap_or(0.0);
            (r + s).fract()
        })
        .collect()
}

/// Hashable identity of an assignment, used to avoid re-evaluating points of
/// discrete spaces.
pub(crate) fn assignment_key(a: &Assignment) -> String {
    a.iter()
        .map(|(k, v)| match v {
            ParamValue::Real(x) => format!("{k}={:016x}", x.to_bits()),
            other => format!("{k}={other}"),
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// Shared driver state: the ledger, seen-set and initial design.
pub(crate) struct Driver<'a> {
    pub space: &'a SearchSpace,
    pub ledger: TrialLedger,
    seen: HashSet<String>,
    pub finite: Option<usize>,
    shift: Vec<f64>,
    halton_next: usize,
}

impl<'a> Driver<'a> {
    pub fn new<R: Rng>(space: &'a SearchSpace, rng: &mut R) -> Self {
        let shift = (0..space.len()).map(|_| rng.gen()).collect();
        Driver {
            space,
            ledger: TrialLedger::default(),
            seen: HashSet::new(),
            finite: space.finite_size(1 << 16),
            shift,
            halton_next: 0,
        }
    }

    pub fn exhausted(&self) -> bool {
        self.finite.is_some_and(|n| self.seen.len() >= n)
    }

    pub fn is_seen(&self, a: &Assignment) -> bool {
        self.seen.contains(&assignment_key(a))
    }

    /// Next quasi-random point, skipping evaluated points in discrete spaces.
    pub fn next_initial<R: Rng>(&mut self, rng: &mut R) -> Assignment {
        for _ in 0..256 {
            let u = halton_point(self.halton_next, self.space.len(), &self.shift);
            self.halton_next += 1;
            let a = self.space.decode(&u);
            if self.finite.is_none() || !self.is_seen(&a) {
                return a;
            }
        }
        self.random_unseen(rng)
    }

    pub fn random_unseen<R: Rng>(&self, rng: &mut R) -> Assignment {
        if self.finite.is_some() {
            let open: Vec<Assignment> = self
                .space
                .enumerate()
                .into_iter()
                .filter(|a| !self.is_seen(a))
                .collect();
            if !open.is_empty() {
                return open[rng.gen_range(0..open.len())].clone();
            }
        }
        self.space.sample_uniform(rng)
    }

    /// Evaluates `a`, recording failures (errors or non-finite values).
    pub fn evaluate<F>(&mut self, objective: &mut F, a: Assignment)
    where
        F: FnMut(&Assignment) -> Result<f64>,
    {
        debug_assert!(self.space.validate(&a).is_ok());
        let start = Instant::now();
        let outcome = objective(&a);
        let wall = start.elapsed().as_secs_f64();
        let (value, failed) = match outcome {
            Ok(v) if v.is_finite() => (v, false),
            Ok(v) => {
                log::warn!("trial {} returned non-finite objective {v}", self.ledger.len());
                (f64::NAN, true)
            }
            Err(e) => {
                log::warn!("trial {} failed: {e}", self.ledger.len());
                (f64::NAN, true)
            }
        };
        log::debug!(
            "trial {}: {} -> {value}",
            self.ledger.len(),
            format_assignment(self.space, &a)
        );
        self.seen.insert(assignment_key(&a));
        self.ledger.push(a, value, failed, wall);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_base_two_sequence() {
        let xs: Vec<f64> = (0..4).map(|i| halton_point(i, 1, &[])[0]).collect();
        assert_eq!(xs, vec![0.5, 0.25, 0.75, 0.125]);
        let y = halton_point(0, 2, &[0.75, 0.0]);
        assert_eq!(y, vec![0.25, 1.0 / 3.0]);
    }
}
