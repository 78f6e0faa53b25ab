//! Synthetic tasks with analytically known structure.
//!
//! A task is a hierarchical integrand: an expensive render state `x` drawn
//! once per render, and a cheap contribution `g(x, t, ε)` evaluated per
//! re-noising. Tasks also carry the cost model used for compute accounting.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::efficiency::CostModel;
use crate::error::{Error, Result};
use crate::rng::{self, tag, StreamRng};
use crate::sampling::{build_proposal, BaseDistribution, Proposal, DEFAULT_GRID, ORACLE_FLOOR_MIX};

/// Cached upstream state shared by all re-noisings of one render.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RenderState(pub Vec<f64>);

/// Known ground truth for a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analytic {
    pub true_mean: Vec<f64>,
    /// Total across-render variance, when the task has a variance decomposition.
    pub sigma_a2: Option<f64>,
    /// Total within-render variance.
    pub sigma_b2: Option<f64>,
}

pub trait Task: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    /// Length of each ε draw.
    fn noise_dim(&self) -> usize {
        self.dim()
    }
    fn base(&self) -> &BaseDistribution;
    fn cost_model(&self) -> &CostModel;
    fn sample_render(&self, rng: &mut StreamRng) -> RenderState;
    fn contribution(&self, render: &RenderState, t: f64, eps: &[f64], out: &mut [f64]);
    fn analytic(&self) -> Option<&Analytic> {
        None
    }
    /// Negligible-cost weight profile for the importance proposal, if the task has one.
    fn heuristic_weight(&self, _t: f64) -> Option<f64> {
        None
    }
}

/// Composite Simpson rule for a vector-valued integrand.
pub fn simpson(f: impl Fn(f64) -> Vec<f64>, a: f64, b: f64, intervals: usize) -> Vec<f64> {
    let n = intervals.max(2) + intervals % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a);
    for (i, v) in f(b).into_iter().enumerate() {
        acc[i] += v;
    }
    for j in 1..n {
        let c = if j % 2 == 1 { 4.0 } else { 2.0 };
        for (i, v) in f(a + j as f64 * h).into_iter().enumerate() {
            acc[i] += c * v;
        }
    }
    acc.iter().map(|v| v * h / 3.0).collect()
}

fn base_mean(base: &BaseDistribution, f: impl Fn(f64) -> Vec<f64>) -> Vec<f64> {
    let w = base.width();
    simpson(f, base.t_min(), base.t_max(), 20_000).into_iter().map(|v| v / w).collect()
}

// ---------------------------------------------------------------------------
// Schedule

/// Discrete noise schedule with scaled-linear spacing in √β, extended to
/// continuous t by log-linear interpolation of ᾱ.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSchedule {
    pub beta_start: f64,
    pub beta_end: f64,
    pub steps: usize,
    /// log ᾱ after i steps, i = 0..=steps (ᾱ_0 = 1).
    log_alpha_bar: Vec<f64>,
}

impl Default for SyntheticSchedule {
    fn default() -> Self {
        Self::scaled_linear(0.00085, 0.012, 1000)
    }
}

impl SyntheticSchedule {
    pub fn scaled_linear(beta_start: f64, beta_end: f64, steps: usize) -> Self {
        let (s0, s1) = (beta_start.sqrt(), beta_end.sqrt());
        let mut log_alpha_bar = Vec::with_capacity(steps + 1);
        log_alpha_bar.push(0.0);
        let mut acc = 0.0;
        for i in 0..steps {
            let frac = if steps > 1 { i as f64 / (steps - 1) as f64 } else { 0.0 };
            let beta = (s0 + frac * (s1 - s0)).powi(2);
            acc += (1.0 - beta).ln();
            log_alpha_bar.push(acc);
        }
        Self { beta_start, beta_end, steps, log_alpha_bar }
    }

    pub fn alpha_bar(&self, t: f64) -> f64 {
        let s = t.clamp(0.0, 1.0) * self.steps as f64;
        let i = (s.floor() as usize).min(self.steps - 1);
        let frac = s - i as f64;
        let l = self.log_alpha_bar[i] + frac * (self.log_alpha_bar[i + 1] - self.log_alpha_bar[i]);
        l.exp()
    }

    pub fn alpha(&self, t: f64) -> f64 {
        self.alpha_bar(t).sqrt()
    }

    pub fn sigma(&self, t: f64) -> f64 {
        (1.0 - self.alpha_bar(t)).sqrt()
    }
}

/// Timestep weighting w(t) folded into w_SDS(t) = w(t)·α_t.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightKind {
    #[default]
    SigmaSq,
}

pub fn weight_sds(t: f64, schedule: &SyntheticSchedule, kind: WeightKind) -> f64 {
    match kind {
        WeightKind::SigmaSq => {
            let ab = schedule.alpha_bar(t);
            (1.0 - ab) * ab.sqrt()
        }
    }
}

// ---------------------------------------------------------------------------
// Tasks

/// g ≡ c.
#[derive(Debug, Clone)]
pub struct ConstantTask {
    value: Vec<f64>,
    base: BaseDistribution,
    cost: CostModel,
    analytic: Analytic,
}

impl ConstantTask {
    pub fn new(value: Vec<f64>) -> Self {
        let analytic = Analytic { true_mean: value.clone(), sigma_a2: Some(0.0), sigma_b2: Some(0.0) };
        Self { value, base: BaseDistribution::unit(), cost: CostModel::default(), analytic }
    }

    pub fn with_base(mut self, base: BaseDistribution) -> Self {
        self.base = base;
        self
    }

    pub fn with_cost_model(mut self, cost: CostModel) -> Self {
        self.cost = cost;
        self
    }
}

impl Task for ConstantTask {
    fn name(&self) -> String {
        "const".into()
    }
    fn dim(&self) -> usize {
        self.value.len()
    }
    fn noise_dim(&self) -> usize {
        0
    }
    fn base(&self) -> &BaseDistribution {
        &self.base
    }
    fn cost_model(&self) -> &CostModel {
        &self.cost
    }
    fn sample_render(&self, _rng: &mut StreamRng) -> RenderState {
        RenderState::default()
    }
    fn contribution(&self, _render: &RenderState, _t: f64, _eps: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.value);
    }
    fn analytic(&self) -> Option<&Analytic> {
        Some(&self.analytic)
    }
}

/// g = t.
#[derive(Debug, Clone)]
pub struct LinearTask {
    base: BaseDistribution,
    cost: CostModel,
    analytic: Analytic,
}

impl LinearTask {
    pub fn new(base: BaseDistribution) -> Self {
        let analytic = Analytic {
            true_mean: vec![0.5 * (base.t_min() + base.t_max())],
            sigma_a2: Some(0.0),
            sigma_b2: Some(base.width().powi(2) / 12.0),
        };
        Self { base, cost: CostModel::default(), analytic }
    }

    pub fn with_cost_model(mut self, cost: CostModel) -> Self {
        self.cost = cost;
        self
    }
}

impl Task for LinearTask {
    fn name(&self) -> String {
        "linear".into()
    }
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        0
    }
    fn base(&self) -> &BaseDistribution {
        &self.base
    }
    fn cost_model(&self) -> &CostModel {
        &self.cost
    }
    fn sample_render(&self, _rng: &mut StreamRng) -> RenderState {
        RenderState::default()
    }
    fn contribution(&self, _render: &RenderState, t: f64, _eps: &[f64], out: &mut [f64]) {
        out[0] = t;
    }
    fn analytic(&self) -> Option<&Analytic> {
        Some(&self.analytic)
    }
}

/// g = (t, t², sin 2πt); heuristic weight is the synthetic w_SDS profile.
#[derive(Debug, Clone)]
pub struct PolynomialTask {
    base: BaseDistribution,
    cost: CostModel,
    schedule: SyntheticSchedule,
    analytic: Analytic,
}

impl PolynomialTask {
    pub fn new(base: BaseDistribution) -> Self {
        let (a, b) = (base.t_min(), base.t_max());
        let true_mean = vec![
            0.5 * (a + b),
            (a * a + a * b + b * b) / 3.0,
            ((2.0 * PI * a).cos() - (2.0 * PI * b).cos()) / (2.0 * PI * (b - a)),
        ];
        let analytic = Analytic { true_mean, sigma_a2: None, sigma_b2: None };
        Self { base, cost: CostModel::default(), schedule: SyntheticSchedule::default(), analytic }
    }

    pub fn with_cost_model(mut self, cost: CostModel) -> Self {
        self.cost = cost;
        self
    }
}

impl Task for PolynomialTask {
    fn name(&self) -> String {
        "poly".into()
    }
    fn dim(&self) -> usize {
        3
    }
    fn noise_dim(&self) -> usize {
        0
    }
    fn base(&self) -> &BaseDistribution {
        &self.base
    }
    fn cost_model(&self) -> &CostModel {
        &self.cost
    }
    fn sample_render(&self, _rng: &mut StreamRng) -> RenderState {
        RenderState::default()
    }
    fn contribution(&self, _render: &RenderState, t: f64, _eps: &[f64], out: &mut [f64]) {
        out[0] = t;
        out[1] = t * t;
        out[2] = (2.0 * PI * t).sin();
    }
    fn analytic(&self) -> Option<&Analytic> {
        Some(&self.analytic)
    }
    fn heuristic_weight(&self, t: f64) -> Option<f64> {
        Some(weight_sds(t, &self.schedule, WeightKind::SigmaSq))
    }
}

/// Toy profile: two Gaussian bumps over a constant floor.
pub fn toy_profile(t: f64) -> f64 {
    0.05 + (-(t - 0.7).powi(2) / (2.0 * 0.03f64.powi(2))).exp() + 0.2 * (-(t - 0.25).powi(2) / (2.0 * 0.1f64.powi(2))).exp()
}

/// Two-dimensional toy integrand g(t, ε) = f(t)·(cos πt, sin πt) + ρ·f(t)·ε.
#[derive(Debug, Clone)]
pub struct ToyIntegrand {
    rho: f64,
    base: BaseDistribution,
    cost: CostModel,
    analytic: Analytic,
}

pub fn toy_integrand(noise_scale: f64) -> Result<ToyIntegrand> {
    if !(noise_scale >= 0.0) || !noise_scale.is_finite() {
        return Err(Error::invalid(format!("noise scale must be nonnegative, got {noise_scale}")));
    }
    let base = BaseDistribution::unit();
    let true_mean = base_mean(&base, |t| {
        let f = toy_profile(t);
        vec![f * (PI * t).cos(), f * (PI * t).sin()]
    });
    let second = base_mean(&base, |t| vec![toy_profile(t).powi(2)])[0] * (1.0 + 2.0 * noise_scale * noise_scale);
    let mean_sq: f64 = true_mean.iter().map(|v| v * v).sum();
    let analytic = Analytic { true_mean, sigma_a2: Some(0.0), sigma_b2: Some(second - mean_sq) };
    Ok(ToyIntegrand { rho: noise_scale, base, cost: CostModel::default(), analytic })
}

impl ToyIntegrand {
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn with_cost_model(mut self, cost: CostModel) -> Self {
        self.cost = cost;
        self
    }
}

impl Task for ToyIntegrand {
    fn name(&self) -> String {
        format!("toy{{rho={}}}", self.rho)
    }
    fn dim(&self) -> usize {
        2
    }
    fn base(&self) -> &BaseDistribution {
        &self.base
    }
    fn cost_model(&self) -> &CostModel {
        &self.cost
    }
    fn sample_render(&self, _rng: &mut StreamRng) -> RenderState {
        RenderState::default()
    }
    fn contribution(&self, _render: &RenderState, t: f64, eps: &[f64], out: &mut [f64]) {
        let f = toy_profile(t);
        out[0] = f * ((PI * t).cos() + self.rho * eps[0]);
        out[1] = f * ((PI * t).sin() + self.rho * eps[1]);
    }
    fn analytic(&self) -> Option<&Analytic> {
        Some(&self.analytic)
    }
    fn heuristic_weight(&self, t: f64) -> Option<f64> {
        Some(toy_profile(t))
    }
}

/// g(x, t, ε) = A(x) + B(ε) with Var-trace σ_A² across renders and σ_B² within.
#[derive(Debug, Clone)]
pub struct HierarchicalTask {
    dim: usize,
    scale_a: f64,
    scale_b: f64,
    base: BaseDistribution,
    cost: CostModel,
    analytic: Analytic,
}

pub fn hierarchical_task(sigma_a2: f64, sigma_b2: f64, dim: usize) -> Result<HierarchicalTask> {
    if !(sigma_a2 >= 0.0 && sigma_b2 >= 0.0) || !(sigma_a2.is_finite() && sigma_b2.is_finite()) {
        return Err(Error::invalid("variances must be nonnegative and finite"));
    }
    if dim == 0 {
        return Err(Error::invalid("dim must be positive"));
    }
    let n = dim as f64;
    Ok(HierarchicalTask {
        dim,
        scale_a: (sigma_a2 / n).sqrt(),
        scale_b: (sigma_b2 / n).sqrt(),
        base: BaseDistribution::unit(),
        cost: CostModel::default(),
        analytic: Analytic { true_mean: vec![0.0; dim], sigma_a2: Some(sigma_a2), sigma_b2: Some(sigma_b2) },
    })
}

impl HierarchicalTask {
    /// Exact estimator variance σ_A²/R + σ_B²/(R·K).
    pub fn predicted_variance(&self, renders: usize, renoise: usize) -> f64 {
        let r = renders as f64;
        self.analytic.sigma_a2.unwrap() / r + self.analytic.sigma_b2.unwrap() / (r * renoise as f64)
    }

    pub fn with_cost_model(mut self, cost: CostModel) -> Self {
        self.cost = cost;
        self
    }
}

impl Task for HierarchicalTask {
    fn name(&self) -> String {
        format!(
            "hier{{sigmaA2={},sigmaB2={},dim={}}}",
            self.analytic.sigma_a2.unwrap(),
            self.analytic.sigma_b2.unwrap(),
            self.dim
        )
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn base(&self) -> &BaseDistribution {
        &self.base
    }
    fn cost_model(&self) -> &CostModel {
        &self.cost
    }
    fn sample_render(&self, rng: &mut StreamRng) -> RenderState {
        let mut x = vec![0.0; self.dim];
        rng::fill_normal(rng, &mut x);
        x.iter_mut().for_each(|v| *v *= self.scale_a);
        RenderState(x)
    }
    fn contribution(&self, render: &RenderState, _t: f64, eps: &[f64], out: &mut [f64]) {
        for i in 0..self.dim {
            out[i] = render.0[i] + self.scale_b * eps[i];
        }
    }
    fn analytic(&self) -> Option<&Analytic> {
        Some(&self.analytic)
    }
}

/// SDS-like task: g = w_SDS(t)·r with residual r = d(t) + a·x + b·σ_t·ε,
/// where d(t) rotates in the first two coordinates.
#[derive(Debug, Clone)]
pub struct SdsLikeTask {
    dim: usize,
    render_scale: f64,
    noise_scale: f64,
    schedule: SyntheticSchedule,
    base: BaseDistribution,
    cost: CostModel,
    analytic: Analytic,
}

impl SdsLikeTask {
    pub fn new(dim: usize, render_scale: f64, noise_scale: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid("sdslike task needs dim >= 2"));
        }
        if !(render_scale >= 0.0 && noise_scale >= 0.0) {
            return Err(Error::invalid("scales must be nonnegative"));
        }
        let schedule = SyntheticSchedule::default();
        let base = BaseDistribution::uniform(0.02, 0.98)?;
        let true_mean = base_mean(&base, |t| {
            let w = weight_sds(t, &schedule, WeightKind::SigmaSq);
            let mut v = vec![0.0; dim];
            v[0] = w * (PI * t).cos();
            v[1] = w * (PI * t).sin();
            v
        });
        Ok(Self {
            dim,
            render_scale,
            noise_scale,
            schedule,
            base,
            cost: CostModel::default(),
            analytic: Analytic { true_mean, sigma_a2: None, sigma_b2: None },
        })
    }

    pub fn schedule(&self) -> &SyntheticSchedule {
        &self.schedule
    }

    pub fn with_cost_model(mut self, cost: CostModel) -> Self {
        self.cost = cost;
        self
    }
}

impl Task for SdsLikeTask {
    fn name(&self) -> String {
        format!("sdslike{{dim={},render={},noise={}}}", self.dim, self.render_scale, self.noise_scale)
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn base(&self) -> &BaseDistribution {
        &self.base
    }
    fn cost_model(&self) -> &CostModel {
        &self.cost
    }
    fn sample_render(&self, rng: &mut StreamRng) -> RenderState {
        let mut x = vec![0.0; self.dim];
        rng::fill_normal(rng, &mut x);
        RenderState(x)
    }
    fn contribution(&self, render: &RenderState, t: f64, eps: &[f64], out: &mut [f64]) {
        let ab = self.schedule.alpha_bar(t);
        let w = (1.0 - ab) * ab.sqrt();
        let b = self.noise_scale * (1.0 - ab).sqrt();
        for i in 0..self.dim {
            out[i] = w * (self.render_scale * render.0[i] + b * eps[i]);
        }
        out[0] += w * (PI * t).cos();
        out[1] += w * (PI * t).sin();
    }
    fn analytic(&self) -> Option<&Analytic> {
        Some(&self.analytic)
    }
    fn heuristic_weight(&self, t: f64) -> Option<f64> {
        Some(weight_sds(t, &self.schedule, WeightKind::SigmaSq))
    }
}

// ---------------------------------------------------------------------------
// Oracle proposal

/// Binned estimate of √E[‖g‖² | t] on equal-width bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedProfile {
    pub centers: Vec<f64>,
    pub values: Vec<f64>,
}

impl BinnedProfile {
    /// Linear interpolation between bin centers, constant beyond the ends.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.centers.len();
        if t <= self.centers[0] {
            return self.values[0];
        }
        if t >= self.centers[n - 1] {
            return self.values[n - 1];
        }
        let j = self.centers.partition_point(|&c| c <= t);
        let (c0, c1) = (self.centers[j - 1], self.centers[j]);
        let s = (t - c0) / (c1 - c0);
        self.values[j - 1] + s * (self.values[j] - self.values[j - 1])
    }
}

pub fn oracle_profile(task: &dyn Task, bins: usize, samples_per_bin: usize, seed: u64) -> Result<BinnedProfile> {
    if bins < 2 || samples_per_bin == 0 {
        return Err(Error::invalid("oracle needs at least 2 bins and 1 sample per bin"));
    }
    let base = *task.base();
    let width = base.width() / bins as f64;
    let values: Vec<f64> = (0..bins)
        .into_par_iter()
        .map(|b| {
            let lo = base.t_min() + b as f64 * width;
            let mut eps = vec![0.0; task.noise_dim()];
            let mut g = vec![0.0; task.dim()];
            let mut sum = 0.0;
            for s in 0..samples_per_bin {
                let mut r = rng::stream(seed, &[tag::ORACLE, b as u64, s as u64]);
                let t = (lo + rng::uniform(&mut r) * width).min(base.t_max());
                let x = task.sample_render(&mut r);
                rng::fill_normal(&mut r, &mut eps);
                task.contribution(&x, t, &eps, &mut g);
                sum += g.iter().map(|v| v * v).sum::<f64>();
            }
            (sum / samples_per_bin as f64).sqrt()
        })
        .collect();
    let centers = (0..bins).map(|b| base.t_min() + (b as f64 + 0.5) * width).collect();
    Ok(BinnedProfile { centers, values })
}

/// Variance-minimizing proposal q* ∝ p·√E[‖g‖²|t], estimated by binning.
pub fn oracle_proposal(task: &dyn Task, bins: usize, samples_per_bin: usize, seed: u64) -> Result<Proposal> {
    let profile = oracle_profile(task, bins, samples_per_bin, seed)?;
    build_proposal(*task.base(), |t| profile.eval(t), DEFAULT_GRID, ORACLE_FLOOR_MIX)
}

// ---------------------------------------------------------------------------
// Task specs: `name{key=value,...}`

/// Parsed `name{key=value,...}` task reference.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

impl TaskSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = match s.find('{') {
            Some(i) => (&s[..i], &s[i..]),
            None => (s, ""),
        };
        let mut params = BTreeMap::new();
        if !rest.is_empty() {
            let inner = rest
                .strip_prefix('{')
                .and_then(|r| r.strip_suffix('}'))
                .ok_or_else(|| Error::Config(format!("malformed task spec `{s}`")))?;
            for kv in inner.split(',').map(str::trim).filter(|kv| !kv.is_empty()) {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("malformed task parameter `{kv}`")))?;
                let v: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("task parameter `{k}` is not a number")))?;
                params.insert(k.trim().to_string(), v);
            }
        }
        Ok(Self { name: name.trim().to_string(), params })
    }

    fn take(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("unknown parameter `{k}` for task `{}`", self.name))),
            None => Ok(()),
        }
    }

    fn take_dim(&self, key: &str, default: usize) -> Result<usize> {
        let v = self.take(key, default as f64);
        if v < 1.0 || v.fract() != 0.0 {
            return Err(Error::Config(format!("`{key}` must be a positive integer")));
        }
        Ok(v as usize)
    }

    fn base(&self) -> Result<BaseDistribution> {
        BaseDistribution::uniform(self.take("tmin", 0.0), self.take("tmax", 1.0))
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Instantiate the task with the given cost model.
    pub fn build(&self, cost: CostModel) -> Result<Box<dyn Task>> {
        let cfg = |e: Error| Error::Config(e.to_string());
        Ok(match self.name.as_str() {
            "toy" => {
                self.check_keys(&["rho"])?;
                Box::new(toy_integrand(self.take("rho", 0.1)).map_err(cfg)?.with_cost_model(cost))
            }
            "hier" => {
                self.check_keys(&["sigmaA2", "sigmaB2", "dim"])?;
                let task = hierarchical_task(self.take("sigmaA2", 1.0), self.take("sigmaB2", 4.0), self.take_dim("dim", 4)?)
                    .map_err(cfg)?;
                Box::new(task.with_cost_model(cost))
            }
            "sdslike" => {
                self.check_keys(&["dim", "render", "noise"])?;
                let task = SdsLikeTask::new(self.take_dim("dim", 8)?, self.take("render", 0.5), self.take("noise", 0.5))
                    .map_err(cfg)?;
                Box::new(task.with_cost_model(cost))
            }
            "poly" => {
                self.check_keys(&["tmin", "tmax"])?;
                let base = if self.params.is_empty() { BaseDistribution::uniform(0.02, 0.98)? } else { self.base()? };
                Box::new(PolynomialTask::new(base).with_cost_model(cost))
            }
            "linear" => {
                self.check_keys(&["tmin", "tmax"])?;
                Box::new(LinearTask::new(self.base()?).with_cost_model(cost))
            }
            "const" => {
                self.check_keys(&["value", "dim"])?;
                let value = vec![self.take("value", 1.0); self.take_dim("dim", 1)?];
                Box::new(ConstantTask::new(value).with_cost_model(cost))
            }
            other => return Err(Error::Config(format!("unknown task `{other}`"))),
        })
    }
}
