//! Hierarchical gradient estimators: naive, amortized re-noising, global and
//! per-render stratification, importance sampling, and their combination.
//!
//! Every estimate averages `K` re-noisings per render over `R` fresh renders:
//!
//! ```text
//! (1/R) Σ_r (1/K) Σ_k w̃(t_rk) · g(x_r, t_rk, ε_rk)
//! ```
//!
//! Random streams are keyed by `(seed, trial, render, stratum)` so an estimate
//! does not depend on evaluation order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::efficiency::cost_of;
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::sampling::{build_proposal, stratum_quantile, BaseDistribution, Proposal, DEFAULT_GRID};
use crate::testbed::Task;

/// Where timesteps are drawn from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestepMode {
    Base,
    /// Named proposal looked up in a [`ProposalBook`].
    Proposal(String),
}

/// How the R·K timestep quantiles are allocated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    Iid,
    /// K equal-mass strata per render.
    StratPerRender,
    /// R·K strata over the whole batch; stratum j goes to render j / K.
    StratGlobal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    #[serde(rename = "R")]
    pub renders: usize,
    #[serde(rename = "K")]
    pub renoise: usize,
    pub timestep_mode: TimestepMode,
    pub allocation: Allocation,
    pub seed: u64,
}

impl EstimatorSpec {
    pub fn new(renders: usize, renoise: usize, timestep_mode: TimestepMode, allocation: Allocation, seed: u64) -> Self {
        Self { renders, renoise, timestep_mode, allocation, seed }
    }

    /// Naive estimator: one re-noising per fresh render from the base distribution.
    pub fn naive(renders: usize, seed: u64) -> Self {
        Self::new(renders, 1, TimestepMode::Base, Allocation::Iid, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.renders == 0 || self.renoise == 0 {
            return Err(Error::invalid(format!(
                "R and K must be positive, got R = {}, K = {}",
                self.renders, self.renoise
            )));
        }
        Ok(())
    }

    /// Per-render stratification with a single re-noising is plain IID sampling.
    pub fn is_degenerate(&self) -> bool {
        self.allocation == Allocation::StratPerRender && self.renoise == 1
    }

    pub fn evals(&self) -> usize {
        self.renders * self.renoise
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub value: Vec<f64>,
    pub renders_used: usize,
    pub evals_used: usize,
    pub cost: f64,
}

/// Named proposals available to estimators.
#[derive(Debug, Clone, Default)]
pub struct ProposalBook {
    proposals: BTreeMap<String, Proposal>,
}

impl ProposalBook {
    pub fn new() -> Self {
        Self::default()
    }

    /// Book holding the task's negligible-cost proposal under `"heuristic"`, if it has one.
    pub fn for_task(task: &dyn Task) -> Result<Self> {
        let mut book = Self::new();
        if task.heuristic_weight(task.base().t_min()).is_some() {
            let q = build_proposal(*task.base(), |t| task.heuristic_weight(t).unwrap_or(0.0), DEFAULT_GRID, 0.0)?;
            book.insert("heuristic", q);
        }
        Ok(book)
    }

    pub fn insert(&mut self, name: impl Into<String>, proposal: Proposal) {
        self.proposals.insert(name.into(), proposal);
    }

    pub fn get(&self, name: &str) -> Option<&Proposal> {
        self.proposals.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.proposals.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy)]
enum Sampler<'a> {
    Base(BaseDistribution),
    Proposal(&'a Proposal),
}

impl Sampler<'_> {
    #[inline]
    fn map(&self, u: f64) -> (f64, f64) {
        match self {
            Sampler::Base(b) => (b.quantile(u), 1.0),
            Sampler::Proposal(q) => q.sample(u),
        }
    }
}

/// An estimator bound to a task and its resolved timestep sampler.
#[derive(Debug, Clone)]
pub struct Estimator<'a> {
    task: &'a dyn Task,
    spec: EstimatorSpec,
    sampler: Sampler<'a>,
    cost: f64,
}

fn resolve<'a>(task: &dyn Task, spec: &EstimatorSpec, book: &'a ProposalBook) -> Result<Sampler<'a>> {
    spec.validate()?;
    match &spec.timestep_mode {
        TimestepMode::Base => Ok(Sampler::Base(*task.base())),
        TimestepMode::Proposal(name) => {
            let q = book
                .get(name)
                .ok_or_else(|| Error::invalid(format!("no proposal named `{name}` for task {}", task.name())))?;
            if q.base() != task.base() {
                return Err(Error::invalid("proposal support differs from the task's base distribution"));
            }
            q.check_support()?;
            Ok(Sampler::Proposal(q))
        }
    }
}

impl<'a> Estimator<'a> {
    pub fn new(task: &'a dyn Task, spec: EstimatorSpec, book: &'a ProposalBook) -> Result<Self> {
        let sampler = resolve(task, &spec, book)?;
        let cost = cost_of(&spec, task.cost_model())?;
        if spec.is_degenerate() {
            log::debug!("per-render stratification with K = 1 is IID sampling");
        }
        Ok(Self { task, spec, sampler, cost })
    }

    pub fn spec(&self) -> &EstimatorSpec {
        &self.spec
    }

    pub fn task(&self) -> &'a dyn Task {
        self.task
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// Quantile for render `r`, re-noising `k` given the within-stratum jitter.
    #[inline]
    fn quantile(&self, r: usize, k: usize, xi: f64) -> f64 {
        let kk = self.spec.renoise;
        match self.spec.allocation {
            Allocation::Iid => xi,
            Allocation::StratPerRender => stratum_quantile(k, kk, xi),
            Allocation::StratGlobal => stratum_quantile(r * kk + k, self.spec.renders * kk, xi),
        }
    }

    /// Estimate number `trial`; writes the value into `out`.
    pub fn estimate_into(&self, trial: u64, out: &mut [f64]) {
        let task = self.task;
        let dim = task.dim();
        let mut eps = vec![0.0; task.noise_dim()];
        let mut g = vec![0.0; dim];
        let mut acc = vec![0.0; dim];
        out.iter_mut().for_each(|v| *v = 0.0);
        let seed = self.spec.seed;
        let kk = self.spec.renoise as f64;
        for r in 0..self.spec.renders {
            let x = task.sample_render(&mut rng::stream(seed, &[tag::RENDER, trial, r as u64]));
            acc.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..self.spec.renoise {
                let mut draw = rng::stream(seed, &[tag::DRAW, trial, r as u64, k as u64]);
                let xi = rng::uniform(&mut draw);
                let (t, w) = self.sampler.map(self.quantile(r, k, xi));
                rng::fill_normal(&mut draw, &mut eps);
                task.contribution(&x, t, &eps, &mut g);
                for (a, gi) in acc.iter_mut().zip(&g) {
                    *a += w * gi;
                }
            }
            for (o, a) in out.iter_mut().zip(&acc) {
                *o += a / kk;
            }
        }
        let rr = self.spec.renders as f64;
        out.iter_mut().for_each(|v| *v /= rr);
    }

    pub fn estimate(&self, trial: u64) -> GradientEstimate {
        let mut value = vec![0.0; self.task.dim()];
        self.estimate_into(trial, &mut value);
        GradientEstimate {
            value,
            renders_used: self.spec.renders,
            evals_used: self.spec.evals(),
            cost: self.cost,
        }
    }
}

/// One estimate (trial 0) for the given spec.
pub fn run_estimator(task: &dyn Task, spec: &EstimatorSpec, book: &ProposalBook) -> Result<GradientEstimate> {
    Ok(Estimator::new(task, spec.clone(), book)?.estimate(0))
}

/// Reference composition of importance weighting, per-render stratification
/// and re-noising, written as one explicit loop. Produces the same bits as
/// [`run_estimator`] for the equivalent spec.
pub fn combined_pipeline(task: &dyn Task, spec: &EstimatorSpec, book: &ProposalBook) -> Result<GradientEstimate> {
    combined_pipeline_trial(task, spec, book, 0)
}

pub fn combined_pipeline_trial(
    task: &dyn Task,
    spec: &EstimatorSpec,
    book: &ProposalBook,
    trial: u64,
) -> Result<GradientEstimate> {
    if !matches!(spec.timestep_mode, TimestepMode::Proposal(_)) || spec.allocation != Allocation::StratPerRender {
        return Err(Error::invalid("combined pipeline needs a proposal timestep mode with per-render stratification"));
    }
    let Sampler::Proposal(q) = resolve(task, spec, book)? else { unreachable!() };
    let cost = cost_of(spec, task.cost_model())?;
    let strata = spec.renoise;
    let dim = task.dim();
    let mut grad = vec![0.0; dim];
    for r in 0..spec.renders {
        let render = task.sample_render(&mut rng::stream(spec.seed, &[tag::RENDER, trial, r as u64]));
        let mut per_render = vec![0.0; dim];
        for k in 0..strata {
            let mut draw = rng::stream(spec.seed, &[tag::DRAW, trial, r as u64, k as u64]);
            let xi = rng::uniform(&mut draw);
            let u = stratum_quantile(k, strata, xi);
            let (t, w_tilde) = q.sample(u);
            let mut eps = vec![0.0; task.noise_dim()];
            rng::fill_normal(&mut draw, &mut eps);
            let mut g = vec![0.0; dim];
            task.contribution(&render, t, &eps, &mut g);
            for i in 0..dim {
                per_render[i] += w_tilde * g[i];
            }
        }
        for i in 0..dim {
            grad[i] += per_render[i] / strata as f64;
        }
    }
    for v in grad.iter_mut() {
        *v /= spec.renders as f64;
    }
    Ok(GradientEstimate { value: grad, renders_used: spec.renders, evals_used: spec.evals(), cost })
}
