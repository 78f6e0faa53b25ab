//! Shared-draw influence scores on a synthetic per-example gradient field.
//!
//! Each example's influence on a query is the mean cosine similarity of their
//! gradients over one set of `(t, ε)` draws shared by all examples.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::sampling::{stratum_quantile, BaseDistribution};
use crate::variance_lab::cosine;

/// Default full budget the reference ranking is computed at.
pub const REFERENCE_BUDGET: usize = 768;

/// g(t, ε) = c + m(t)·d + s·ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientField {
    pub query: Generator,
    pub examples: Vec<Generator>,
    /// Noise scale s.
    pub noise: f64,
    /// m(t) = profile_offset + profile_amplitude·cos(πt).
    pub profile_offset: f64,
    pub profile_amplitude: f64,
    pub base: BaseDistribution,
}

/// Parameters of the default random field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldParams {
    pub n_examples: usize,
    pub dim: usize,
    pub noise: f64,
    pub profile_offset: f64,
    pub profile_amplitude: f64,
}

impl Default for FieldParams {
    fn default() -> Self {
        Self { n_examples: 32, dim: 16, noise: 0.3, profile_offset: 0.0, profile_amplitude: 1.0 }
    }
}

impl GradientField {
    pub fn new(query: Generator, examples: Vec<Generator>, noise: f64, base: BaseDistribution) -> Result<Self> {
        let field = Self { query, examples, noise, profile_offset: 0.0, profile_amplitude: 1.0, base };
        field.validate()?;
        Ok(field)
    }

    /// Random field with Gaussian c_n, d_n of unit expected norm.
    pub fn random(params: &FieldParams, seed: u64) -> Result<Self> {
        if params.n_examples < 2 || params.dim == 0 {
            return Err(Error::invalid("field needs at least two examples and dim >= 1"));
        }
        let mut r = rng::stream(seed, &[tag::FIELD]);
        let scale = 1.0 / (params.dim as f64).sqrt();
        let mut gen = || {
            let mut c = vec![0.0; params.dim];
            let mut d = vec![0.0; params.dim];
            rng::fill_normal(&mut r, &mut c);
            rng::fill_normal(&mut r, &mut d);
            c.iter_mut().chain(d.iter_mut()).for_each(|v| *v *= scale);
            Generator { c, d }
        };
        let query = gen();
        let examples = (0..params.n_examples).map(|_| gen()).collect();
        let field = Self {
            query,
            examples,
            noise: params.noise,
            profile_offset: params.profile_offset,
            profile_amplitude: params.profile_amplitude,
            base: BaseDistribution::unit(),
        };
        field.validate()?;
        Ok(field)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.query.c.len();
        if dim == 0 {
            return Err(Error::invalid("gradient dimension must be positive"));
        }
        for g in std::iter::once(&self.query).chain(&self.examples) {
            for v in [&g.c, &g.d] {
                if v.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
                }
            }
        }
        if !(self.noise >= 0.0) {
            return Err(Error::invalid("noise scale must be nonnegative"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.query.c.len()
    }

    pub fn n_examples(&self) -> usize {
        self.examples.len()
    }

    pub fn profile(&self, t: f64) -> f64 {
        self.profile_offset + self.profile_amplitude * (PI * t).cos()
    }

    pub fn eval(&self, g: &Generator, draw: &Draw, out: &mut [f64]) {
        let m = self.profile(draw.t);
        for (i, o) in out.iter_mut().enumerate() {
            *o = g.c[i] + m * g.d[i] + self.noise * draw.eps[i];
        }
    }
}

/// One shared `(t, ε)` draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub t: f64,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Iid,
    StratGlobal,
}

impl Scheme {
    fn code(self) -> u64 {
        match self {
            Scheme::Iid => 0,
            Scheme::StratGlobal => 1,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Iid => "iid",
            Scheme::StratGlobal => "strat_global",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid" => Ok(Scheme::Iid),
            "strat_global" | "strat" => Ok(Scheme::StratGlobal),
            _ => Err(Error::invalid(format!("unknown scheme `{s}`"))),
        }
    }
}

/// Draw `budget` shared pairs; the stream depends on (seed, scheme, budget, trial).
pub fn draw_set(field: &GradientField, budget: usize, scheme: Scheme, seed: u64, trial: u64) -> Result<Vec<Draw>> {
    if budget == 0 {
        return Err(Error::invalid("budget must be at least 1"));
    }
    Ok((0..budget)
        .map(|j| {
            let mut r = rng::stream(seed, &[tag::ATTRIBUTION, scheme.code(), budget as u64, trial, j as u64]);
            let xi = rng::uniform(&mut r);
            let u = match scheme {
                Scheme::Iid => xi,
                Scheme::StratGlobal => stratum_quantile(j, budget, xi),
            };
            let mut eps = vec![0.0; field.dim()];
            rng::fill_normal(&mut r, &mut eps);
            Draw { t: field.base.quantile(u), eps }
        })
        .collect())
}

/// Mean cosine between the query gradient and example `n` over shared draws.
pub fn influence_score(field: &GradientField, n: usize, draws: &[Draw]) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::invalid("no draws"));
    }
    let example = field
        .examples
        .get(n)
        .ok_or_else(|| Error::invalid(format!("example index {n} out of range")))?;
    let dim = field.dim();
    let (mut gq, mut gn) = (vec![0.0; dim], vec![0.0; dim]);
    let mut total = 0.0;
    for draw in draws {
        field.eval(&field.query, draw, &mut gq);
        field.eval(example, draw, &mut gn);
        total += cosine(&gq, &gn)?;
    }
    Ok(total / draws.len() as f64)
}

pub fn influence_scores(field: &GradientField, draws: &[Draw]) -> Result<Vec<f64>> {
    (0..field.n_examples()).into_par_iter().map(|n| influence_score(field, n, draws)).collect()
}

/// Binned √E‖g(t, ε)‖², averaged over the query and all examples; the
/// quantity an oracle timestep proposal would be proportional to.
pub fn gradient_norm_profile(field: &GradientField, bins: usize, samples_per_bin: usize, seed: u64) -> Result<Vec<f64>> {
    if bins == 0 || samples_per_bin == 0 {
        return Err(Error::invalid("need at least one bin and one sample per bin"));
    }
    let width = field.base.width() / bins as f64;
    let generators: Vec<&Generator> = std::iter::once(&field.query).chain(&field.examples).collect();
    Ok((0..bins)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, &[tag::ORACLE, b as u64]);
            let mut g = vec![0.0; field.dim()];
            let mut total = 0.0;
            for _ in 0..samples_per_bin {
                let t = field.base.t_min() + (b as f64 + rng::uniform(&mut r)) * width;
                let mut eps = vec![0.0; field.dim()];
                rng::fill_normal(&mut r, &mut eps);
                let draw = Draw { t, eps };
                for gen in &generators {
                    field.eval(gen, &draw, &mut g);
                    total += g.iter().map(|v| v * v).sum::<f64>();
                }
            }
            (total / (samples_per_bin * generators.len()) as f64).sqrt()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficient {
    #[default]
    Pearson,
    Spearman,
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::invalid("correlation of a constant vector is undefined"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn ranking_correlation(scores: &[f64], reference: &[f64], coefficient: Coefficient) -> Result<f64> {
    if scores.len() != reference.len() {
        return Err(Error::DimensionMismatch { expected: reference.len(), got: scores.len() });
    }
    if scores.len() < 2 {
        return Err(Error::invalid("correlation needs at least two entries"));
    }
    match coefficient {
        Coefficient::Pearson => pearson(scores, reference),
        Coefficient::Spearman => pearson(&ranks(scores), &ranks(reference)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub scores: Vec<f64>,
    pub budget: usize,
    pub scheme: Scheme,
    pub trial: u64,
    pub correlation_to_reference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentParams {
    pub seed: u64,
    pub reference_budget: usize,
    pub coefficient: Coefficient,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self { seed: 0, reference_budget: REFERENCE_BUDGET, coefficient: Coefficient::Pearson }
    }
}

/// Reference scores: stratified draws at the reference budget, trial 0.
pub fn reference_scores(field: &GradientField, params: &ExperimentParams) -> Result<Vec<f64>> {
    let draws = draw_set(field, params.reference_budget, Scheme::StratGlobal, params.seed, 0)?;
    influence_scores(field, &draws)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRun {
    pub reports: Vec<InfluenceReport>,
    pub mean_correlation: f64,
}

/// Score every example on `trials` independent shared-draw sets and compare
/// each ranking against the reference.
pub fn attribution_experiment(
    field: &GradientField,
    budget: usize,
    scheme: Scheme,
    trials: u64,
    params: &ExperimentParams,
) -> Result<AttributionRun> {
    let reference = reference_scores(field, params)?;
    attribution_against(field, &reference, budget, scheme, trials, params)
}

pub fn attribution_against(
    field: &GradientField,
    reference: &[f64],
    budget: usize,
    scheme: Scheme,
    trials: u64,
    params: &ExperimentParams,
) -> Result<AttributionRun> {
    if trials == 0 {
        return Err(Error::invalid("trials must be positive"));
    }
    let reports = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let draws = draw_set(field, budget, scheme, params.seed, trial)?;
            let scores = influence_scores(field, &draws)?;
            let correlation_to_reference = ranking_correlation(&scores, reference, params.coefficient)?;
            Ok(InfluenceReport { scores, budget, scheme, trial, correlation_to_reference })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_correlation = reports.iter().map(|r| r.correlation_to_reference).sum::<f64>() / trials as f64;
    Ok(AttributionRun { reports, mean_correlation })
}
