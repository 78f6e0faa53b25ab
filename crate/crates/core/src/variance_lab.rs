//! Variance measurement: mergeable Welford accumulation of the trace of the
//! estimator covariance, convergence-gated runs, high-sample references, and
//! MSE / cosine metrics against a reference.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Estimator, EstimatorSpec, ProposalBook};
use crate::testbed::Task;

/// Trials per parallel work unit; fixed so results do not depend on thread count.
const CHUNK: u64 = 1024;

/// Online mean of a vector and running Σ‖x − mean‖².
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WelfordState {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: f64,
}

/// Finalized statistics of a [`WelfordState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfordSummary {
    pub mean: Vec<f64>,
    /// Unbiased trace of the covariance; 0 when fewer than two samples.
    pub trace_cov: f64,
    pub samples: u64,
    pub insufficient_samples: bool,
}

impl WelfordState {
    /// Empty accumulator whose dimension is fixed by the first sample.
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_dim(dim: usize) -> Self {
        Self { count: 0, mean: vec![0.0; dim], m2: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        if self.count == 0 && self.mean.is_empty() {
            self.mean = vec![0.0; x.len()];
        }
        if x.len() != self.mean.len() {
            return Err(Error::DimensionMismatch { expected: self.mean.len(), got: x.len() });
        }
        self.count += 1;
        let n = self.count as f64;
        let mut incr = 0.0;
        for (m, &xi) in self.mean.iter_mut().zip(x) {
            let delta = xi - *m;
            *m += delta / n;
            incr += delta * (xi - *m);
        }
        self.m2 += incr;
        Ok(())
    }

    /// Unbiased (n − 1) trace covariance; `None` with fewer than two samples.
    pub fn trace_cov(&self) -> Option<f64> {
        (self.count >= 2).then(|| self.m2 / (self.count - 1) as f64)
    }

    pub fn finalize(&self) -> WelfordSummary {
        WelfordSummary {
            mean: self.mean.clone(),
            trace_cov: self.trace_cov().unwrap_or(0.0),
            samples: self.count,
            insufficient_samples: self.count < 2,
        }
    }
}

pub fn welford_update(acc: &WelfordState, x: &[f64]) -> Result<WelfordState> {
    let mut next = acc.clone();
    next.push(x)?;
    Ok(next)
}

/// Parallel-merge step: equals sequential accumulation of both sample sets.
pub fn welford_merge(a: &WelfordState, b: &WelfordState) -> Result<WelfordState> {
    if b.count == 0 {
        if a.count > 0 && !b.mean.is_empty() && b.mean.len() != a.mean.len() {
            return Err(Error::DimensionMismatch { expected: a.mean.len(), got: b.mean.len() });
        }
        return Ok(a.clone());
    }
    if a.count == 0 {
        if !a.mean.is_empty() && a.mean.len() != b.mean.len() {
            return Err(Error::DimensionMismatch { expected: a.mean.len(), got: b.mean.len() });
        }
        return Ok(b.clone());
    }
    if a.mean.len() != b.mean.len() {
        return Err(Error::DimensionMismatch { expected: a.mean.len(), got: b.mean.len() });
    }
    let (na, nb) = (a.count as f64, b.count as f64);
    let n = na + nb;
    let mut delta_sq = 0.0;
    let mean = a
        .mean
        .iter()
        .zip(&b.mean)
        .map(|(&ma, &mb)| {
            let d = mb - ma;
            delta_sq += d * d;
            ma + d * nb / n
        })
        .collect();
    Ok(WelfordState { count: a.count + b.count, mean, m2: a.m2 + b.m2 + delta_sq * na * nb / n })
}

/// Accumulate estimates for `trials`, in parallel chunks merged in order.
pub fn accumulate(estimator: &Estimator<'_>, trials: Range<u64>) -> WelfordState {
    let dim = estimator.task().dim();
    let chunks: Vec<Range<u64>> = (trials.start..trials.end)
        .step_by(CHUNK as usize)
        .map(|s| s..(s + CHUNK).min(trials.end))
        .collect();
    let parts: Vec<WelfordState> = chunks
        .into_par_iter()
        .map(|range| {
            let mut acc = WelfordState::with_dim(dim);
            let mut buf = vec![0.0; dim];
            for trial in range {
                estimator.estimate_into(trial, &mut buf);
                acc.push(&buf).expect("estimator dimension is fixed");
            }
            acc
        })
        .collect();
    parts
        .iter()
        .try_fold(WelfordState::with_dim(dim), |acc, p| welford_merge(&acc, p))
        .expect("estimator dimension is fixed")
}

/// Estimates for `trials`, in trial order.
pub fn collect_estimates(estimator: &Estimator<'_>, trials: Range<u64>) -> Vec<Vec<f64>> {
    let dim = estimator.task().dim();
    (trials.start..trials.end)
        .into_par_iter()
        .map(|trial| {
            let mut buf = vec![0.0; dim];
            estimator.estimate_into(trial, &mut buf);
            buf
        })
        .collect()
}

/// Early-stopping rule for variance runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceCriterion {
    pub warmup: u64,
    pub interval: u64,
    pub rel_tol: f64,
    pub consecutive: u32,
    pub cap: u64,
}

impl Default for ConvergenceCriterion {
    fn default() -> Self {
        Self { warmup: 1000, interval: 50, rel_tol: 0.001, consecutive: 3, cap: 20_000 }
    }
}

impl ConvergenceCriterion {
    pub fn validate(&self) -> Result<()> {
        if self.warmup == 0 || self.interval == 0 || self.consecutive == 0 || self.cap == 0 || !(self.rel_tol > 0.0) {
            return Err(Error::invalid("convergence criterion fields must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub mean: Vec<f64>,
    pub trace_cov: f64,
    pub samples: u64,
    pub converged_at: Option<u64>,
    /// Cost-model cost of one estimate.
    pub wall_cost: f64,
}

fn relative_change(current: f64, previous: f64) -> f64 {
    if previous == 0.0 {
        if current == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        ((current - previous) / previous).abs()
    }
}

/// Draw estimates until the trace covariance stabilizes or the cap is hit.
pub fn run_until_converged(
    task: &dyn Task,
    spec: &EstimatorSpec,
    book: &ProposalBook,
    criterion: &ConvergenceCriterion,
) -> Result<VarianceReport> {
    criterion.validate()?;
    let estimator = Estimator::new(task, spec.clone(), book)?;
    Ok(converge(&estimator, criterion))
}

pub fn converge(estimator: &Estimator<'_>, criterion: &ConvergenceCriterion) -> VarianceReport {
    let mut acc = WelfordState::with_dim(estimator.task().dim());
    let mut next_check = criterion.warmup;
    let mut previous: Option<f64> = None;
    let mut streak = 0;
    let mut converged_at = None;
    let mut n = 0u64;
    loop {
        let target = next_check.min(criterion.cap);
        if target > n {
            let part = accumulate(estimator, n..target);
            acc = welford_merge(&acc, &part).expect("estimator dimension is fixed");
            n = target;
        }
        if n == next_check {
            let current = acc.trace_cov().unwrap_or(0.0);
            if let Some(prev) = previous {
                if relative_change(current, prev) < criterion.rel_tol {
                    streak += 1;
                } else {
                    streak = 0;
                }
            }
            previous = Some(current);
            if streak >= criterion.consecutive {
                converged_at = Some(n);
                break;
            }
            next_check += criterion.interval;
        }
        if n >= criterion.cap {
            break;
        }
    }
    let summary = acc.finalize();
    VarianceReport {
        mean: summary.mean,
        trace_cov: summary.trace_cov,
        samples: summary.samples,
        converged_at,
        wall_cost: estimator.cost(),
    }
}

/// Welford statistics of `n_gt` independent estimates drawn with `spec`.
pub fn reference_stats(task: &dyn Task, spec: &EstimatorSpec, book: &ProposalBook, n_gt: u64) -> Result<WelfordState> {
    let estimator = Estimator::new(task, spec.clone(), book)?;
    Ok(accumulate(&estimator, 0..n_gt))
}

/// High-sample reference mean used as the MSE target.
pub fn reference_mean(task: &dyn Task, spec: &EstimatorSpec, book: &ProposalBook, n_gt: u64) -> Result<Vec<f64>> {
    Ok(reference_stats(task, spec, book, n_gt)?.mean)
}

/// Warn when the reference is too small for the reference bias to stay
/// below 1% of the test variance.
pub fn check_reference_budget(n_gt: u64, n_test: u64) -> bool {
    let ok = n_gt >= n_test.saturating_mul(100);
    if !ok {
        log::warn!("reference uses {n_gt} samples; at least {} recommended for {n_test} test samples", n_test * 100);
    }
    ok
}

pub fn mse_to_reference(estimates: &[Vec<f64>], reference: &[f64]) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::invalid("no estimates"));
    }
    let mut total = 0.0;
    for e in estimates {
        if e.len() != reference.len() {
            return Err(Error::DimensionMismatch { expected: reference.len(), got: e.len() });
        }
        total += e.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok(total / estimates.len() as f64)
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: b.len(), got: a.len() });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

pub fn cosine_to_reference(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    cosine(estimate, reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{Allocation, TimestepMode};
    use crate::testbed::ConstantTask;
    use approx::assert_abs_diff_eq;

    fn acc(xs: &[&[f64]]) -> WelfordState {
        let mut a = WelfordState::new();
        for x in xs {
            a.push(x).unwrap();
        }
        a
    }

    #[test]
    fn one_dimensional_hand_example() {
        let a = acc(&[&[1.0], &[2.0], &[3.0]]);
        assert_eq!(a.mean, vec![2.0]);
        assert_eq!(a.m2, 2.0);
        assert_eq!(a.trace_cov(), Some(1.0));
    }

    #[test]
    fn single_sample_is_flagged() {
        let s = acc(&[&[4.0, 1.0]]).finalize();
        assert_eq!(s.trace_cov, 0.0);
        assert!(s.insufficient_samples);
        assert!(WelfordState::new().finalize().insufficient_samples);
    }

    #[test]
    fn two_dimensional_example() {
        let a = acc(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(a.mean, vec![0.5, 0.5]);
        assert_eq!(a.m2, 1.0);
        assert_eq!(a.trace_cov(), Some(1.0));
    }

    #[test]
    fn dimension_mismatch() {
        let a = acc(&[&[1.0, 2.0]]);
        assert!(welford_update(&a, &[1.0]).is_err());
        assert!(welford_merge(&a, &acc(&[&[1.0]])).is_err());
        assert!(WelfordState::with_dim(2).push(&[1.0]).is_err());
    }

    #[test]
    fn merge_examples() {
        let merged = welford_merge(&acc(&[&[1.0], &[2.0]]), &acc(&[&[3.0]])).unwrap();
        let seq = acc(&[&[1.0], &[2.0], &[3.0]]);
        assert_abs_diff_eq!(merged.m2, seq.m2, epsilon = 1e-15);
        assert_eq!(merged.mean, seq.mean);
        assert_eq!(merged.count, 3);
        let b = acc(&[&[5.0, 1.0], &[2.0, 2.0]]);
        assert_eq!(welford_merge(&WelfordState::new(), &b).unwrap(), b);
        assert_eq!(welford_merge(&b, &WelfordState::new()).unwrap(), b);
    }

    #[test]
    fn metrics() {
        let r = [1.0, 2.0, -1.0];
        assert_eq!(mse_to_reference(&[r.to_vec()], &r).unwrap(), 0.0);
        assert_abs_diff_eq!(cosine_to_reference(&r, &r).unwrap(), 1.0, epsilon = 1e-15);
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        assert_abs_diff_eq!(cosine_to_reference(&neg, &r).unwrap(), -1.0, epsilon = 1e-15);
        assert_eq!(cosine_to_reference(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!(matches!(cosine_to_reference(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroNorm)));
        assert_eq!(mse_to_reference(&[vec![1.0, 1.0], vec![-1.0, -1.0]], &[0.0, 0.0]).unwrap(), 2.0);
    }

    #[test]
    fn constant_task_converges_after_three_checks() {
        let task = ConstantTask::new(vec![2.0, 1.0]);
        let spec = EstimatorSpec::new(1, 2, TimestepMode::Base, Allocation::Iid, 5);
        let c = ConvergenceCriterion::default();
        let rep = run_until_converged(&task, &spec, &ProposalBook::new(), &c).unwrap();
        assert_eq!(rep.trace_cov, 0.0);
        assert_eq!(rep.converged_at, Some(1150));
        assert_eq!(rep.samples, 1150);
        assert_eq!(rep.mean, vec![2.0, 1.0]);

        let capped = ConvergenceCriterion { cap: 100, ..c };
        let rep = run_until_converged(&task, &spec, &ProposalBook::new(), &capped).unwrap();
        assert_eq!(rep.samples, 100);
        assert_eq!(rep.converged_at, None);
    }

    #[test]
    fn invalid_criterion() {
        let task = ConstantTask::new(vec![1.0]);
        let c = ConvergenceCriterion { interval: 0, ..Default::default() };
        assert!(run_until_converged(&task, &EstimatorSpec::naive(1, 0), &ProposalBook::new(), &c).is_err());
    }

    #[test]
    fn constant_reference_is_exact() {
        let task = ConstantTask::new(vec![0.25, -3.0]);
        let m = reference_mean(&task, &EstimatorSpec::naive(2, 1), &ProposalBook::new(), 5000).unwrap();
        assert_eq!(m, vec![0.25, -3.0]);
        assert!(!check_reference_budget(100, 10));
        assert!(check_reference_budget(1000, 10));
    }
}
