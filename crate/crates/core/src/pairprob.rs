//! Two-draw without-replacement Horvitz-Thompson designs over N timestep
//! indices: classical pair-probability matrices, the closed-form variance, and
//! an entropic optimal-transport allocation solved by Sinkhorn scaling.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::testbed::{weight_sds, SyntheticSchedule, WeightKind};

/// Targets `y_i = p_i·g_i` with their timesteps and proposal weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairInstance {
    pub y: Vec<Vec<f64>>,
    pub timesteps: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PairInstance {
    pub fn new(y: Vec<Vec<f64>>, timesteps: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let inst = Self { y, timesteps, weights };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if n < 2 {
            return Err(Error::invalid("pair designs need at least two items"));
        }
        if self.timesteps.len() != n || self.weights.len() != n {
            return Err(Error::invalid("y, timesteps and weights must have the same length"));
        }
        let dim = self.y[0].len();
        if let Some(v) = self.y.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
        }
        if self.y.iter().flatten().chain(&self.timesteps).any(|v| !v.is_finite()) {
            return Err(Error::invalid("instance values must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.y[0].len()
    }

    /// μ_y = Σ y_i.
    pub fn total(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.dim()];
        for v in &self.y {
            for (m, x) in mu.iter_mut().zip(v) {
                *m += x;
            }
        }
        mu
    }

    /// Indices sorted by timestep.
    fn t_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.timesteps[a].total_cmp(&self.timesteps[b]));
        idx
    }
}

/// Symmetric, zero-diagonal distribution over unordered pairs (Σ_{i<j} q = 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMatrix {
    n: usize,
    q: Vec<f64>,
}

impl PairMatrix {
    /// Normalize nonnegative pair masses `mass(i, j)` (i < j) into a pair matrix.
    pub fn from_pair_masses(n: usize, mass: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut q = vec![0.0; n * n];
        let mut total = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let m = mass(i, j);
                if !(m >= 0.0) || !m.is_finite() {
                    return Err(Error::invalid(format!("pair mass ({i}, {j}) must be nonnegative, got {m}")));
                }
                q[i * n + j] = m;
                q[j * n + i] = m;
                total += m;
            }
        }
        if !(total > 0.0) {
            return Err(Error::invalid("pair masses are all zero"));
        }
        q.iter_mut().for_each(|v| *v /= total);
        Ok(Self { n, q })
    }

    /// Dense symmetric matrix; symmetrized and normalized to Σ_{i<j} = 1.
    pub fn from_dense(n: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: dense.len() });
        }
        Self::from_pair_masses(n, |i, j| 0.5 * (dense[i * n + j] + dense[j * n + i]))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.n + j]
    }

    pub fn dense(&self) -> &[f64] {
        &self.q
    }

    /// π_i = Σ_{j≠i} q(i, j).
    pub fn marginals(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.q[i * self.n..(i + 1) * self.n].iter().sum()).collect()
    }

    pub fn pair_total(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                s += self.get(i, j);
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Iid,
    StratIndex,
    Iw,
    IwStrat,
    Sinkhorn,
}

impl PairKind {
    pub const ALL: [PairKind; 5] = [PairKind::Iid, PairKind::StratIndex, PairKind::Iw, PairKind::IwStrat, PairKind::Sinkhorn];

    pub fn as_str(&self) -> &'static str {
        match self {
            PairKind::Iid => "iid",
            PairKind::StratIndex => "strat_index",
            PairKind::Iw => "iw",
            PairKind::IwStrat => "iw_strat",
            PairKind::Sinkhorn => "sinkhorn",
        }
    }
}

impl fmt::Display for PairKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PairKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PairKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown pair kind `{s}`")))
    }
}

fn check_weights(inst: &PairInstance) -> Result<()> {
    if inst.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::invalid("weights must be nonnegative and finite"));
    }
    if inst.weights.iter().all(|&w| w == 0.0) {
        return Err(Error::invalid("weights are all zero"));
    }
    Ok(())
}

/// Split timestep-ordered indices into two halves; `by_mass` balances the
/// cumulative weight instead of the count.
fn halves(inst: &PairInstance, by_mass: bool) -> Vec<bool> {
    let order = inst.t_order();
    let n = order.len();
    let mut first = vec![false; n];
    if by_mass {
        let total: f64 = inst.weights.iter().sum();
        let mut cum = 0.0;
        for &i in &order {
            let w = inst.weights[i];
            first[i] = cum + 0.5 * w < 0.5 * total;
            cum += w;
        }
        if !first.iter().any(|&f| f) {
            first[order[0]] = true;
        }
        if first.iter().all(|&f| f) {
            first[order[n - 1]] = false;
        }
    } else {
        for &i in &order[..n / 2] {
            first[i] = true;
        }
    }
    first
}

/// Classical pair designs. Sinkhorn allocations come from [`sinkhorn_optimal`].
pub fn build_pair_matrix(kind: PairKind, inst: &PairInstance) -> Result<PairMatrix> {
    inst.validate()?;
    let n = inst.len();
    match kind {
        PairKind::Iid => PairMatrix::from_pair_masses(n, |_, _| 1.0),
        PairKind::StratIndex => {
            let side = halves(inst, false);
            PairMatrix::from_pair_masses(n, |i, j| if side[i] != side[j] { 1.0 } else { 0.0 })
        }
        PairKind::Iw => {
            check_weights(inst)?;
            let w = &inst.weights;
            PairMatrix::from_pair_masses(n, |i, j| w[i] * w[j])
        }
        PairKind::IwStrat => {
            check_weights(inst)?;
            let side = halves(inst, true);
            let w = &inst.weights;
            PairMatrix::from_pair_masses(n, |i, j| if side[i] != side[j] { w[i] * w[j] } else { 0.0 })
        }
        PairKind::Sinkhorn => sinkhorn_optimal(inst, &SinkhornParams::default()),
    }
}

fn scaled(inst: &PairInstance, pi: &[f64], i: usize) -> Result<Vec<f64>> {
    let y = &inst.y[i];
    if pi[i] > 0.0 {
        Ok(y.iter().map(|v| v / pi[i]).collect())
    } else if y.iter().all(|&v| v == 0.0) {
        Ok(vec![0.0; y.len()])
    } else {
        Err(Error::ZeroMarginal(i))
    }
}

/// HT total estimate y_i/π_i + y_j/π_j for the sampled pair.
pub fn ht_estimate(inst: &PairInstance, q: &PairMatrix, pair: (usize, usize)) -> Result<Vec<f64>> {
    let (i, j) = pair;
    let n = inst.len();
    if q.n() != n || i >= n || j >= n || i == j {
        return Err(Error::invalid(format!("invalid pair ({i}, {j}) for N = {n}")));
    }
    let pi = q.marginals();
    for k in [i, j] {
        if pi[k] <= 0.0 {
            return Err(Error::ZeroMarginal(k));
        }
    }
    let a = scaled(inst, &pi, i)?;
    let b = scaled(inst, &pi, j)?;
    Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect())
}

/// Σ_{i<j} q(i, j)·‖μ̂_ij − μ_y‖², by full enumeration.
pub fn ht_variance(inst: &PairInstance, q: &PairMatrix) -> Result<f64> {
    inst.validate()?;
    if q.n() != inst.len() {
        return Err(Error::DimensionMismatch { expected: inst.len(), got: q.n() });
    }
    let pi = q.marginals();
    let a: Vec<Vec<f64>> = (0..inst.len()).map(|i| scaled(inst, &pi, i)).collect::<Result<_>>()?;
    let mu = inst.total();
    let n = inst.len();
    let mut var = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let qij = q.get(i, j);
            if qij == 0.0 {
                continue;
            }
            let d2: f64 = (0..mu.len()).map(|d| (a[i][d] + a[j][d] - mu[d]).powi(2)).sum();
            var += qij * d2;
        }
    }
    Ok(var)
}

/// Probability-weighted mean of the HT estimate over all pairs.
pub fn ht_expectation(inst: &PairInstance, q: &PairMatrix) -> Result<Vec<f64>> {
    let pi = q.marginals();
    let a: Vec<Vec<f64>> = (0..inst.len()).map(|i| scaled(inst, &pi, i)).collect::<Result<_>>()?;
    let mut e = vec![0.0; inst.dim()];
    for i in 0..inst.len() {
        for j in i + 1..inst.len() {
            let qij = q.get(i, j);
            for d in 0..e.len() {
                e[d] += qij * (a[i][d] + a[j][d]);
            }
        }
    }
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinkhornParams {
    pub beta: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        Self { beta: 10.0, max_iters: 10_000, tol: 1e-9 }
    }
}

/// Target inclusion probabilities π_i = 2‖y_i‖/Σ‖y‖.
pub fn target_marginals(inst: &PairInstance) -> Result<Vec<f64>> {
    let norms: Vec<f64> = inst.y.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let total: f64 = norms.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("all targets are zero"));
    }
    Ok(norms.iter().map(|v| 2.0 * v / total).collect())
}

fn percentile(mut values: Vec<f64>, p: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let pos = p * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (pos - lo as f64) * (values[hi] - values[lo])
}

/// Largest violation of the target marginals.
pub fn marginal_residual(q: &PairMatrix, targets: &[f64]) -> f64 {
    q.marginals().iter().zip(targets).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Entropic OT allocation: cost C_ij = (y_i/π_i)ᵀ(y_j/π_j), Gibbs kernel
/// exp(−β·C/scale) with the scale set to the 95th percentile of |C| off the
/// diagonal, alternating row/column scaling to the target marginals.
pub fn sinkhorn_optimal(inst: &PairInstance, params: &SinkhornParams) -> Result<PairMatrix> {
    inst.validate()?;
    if !(params.beta > 0.0) || params.max_iters == 0 || !(params.tol > 0.0) {
        return Err(Error::invalid("sinkhorn needs beta > 0, max_iters > 0, tol > 0"));
    }
    let n = inst.len();
    let pi = target_marginals(inst)?;
    if n == 2 {
        return PairMatrix::from_pair_masses(2, |_, _| 1.0);
    }
    let active: Vec<bool> = pi.iter().map(|&p| p > 0.0).collect();
    let a: Vec<Vec<f64>> = (0..n)
        .map(|i| if active[i] { inst.y[i].iter().map(|v| v / pi[i]).collect() } else { vec![0.0; inst.dim()] })
        .collect();
    let mut cost = vec![0.0; n * n];
    let mut off = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let c: f64 = a[i].iter().zip(&a[j]).map(|(x, y)| x * y).sum();
            cost[i * n + j] = c;
            cost[j * n + i] = c;
            if active[i] && active[j] {
                off.push(c.abs());
            }
        }
    }
    let scale = if off.is_empty() { 1.0 } else { percentile(off, 0.95) };
    let scale = if scale > 0.0 { scale } else { 1.0 };
    // log-kernel shifted by its maximum; a global factor cancels in the scaling
    let mut log_k = vec![f64::NEG_INFINITY; n * n];
    let mut max_log = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i != j && active[i] && active[j] {
                let v = -params.beta * cost[i * n + j] / scale;
                log_k[i * n + j] = v;
                max_log = max_log.max(v);
            }
        }
    }
    let kernel: Vec<f64> = log_k.iter().map(|v| (v - max_log).exp()).collect();

    let mut u = vec![1.0; n];
    let mut v = vec![1.0; n];
    let mut residual = f64::INFINITY;
    let mut converged = false;
    for _ in 0..params.max_iters {
        for i in 0..n {
            let s: f64 = (0..n).map(|j| kernel[i * n + j] * v[j]).sum();
            u[i] = if active[i] && s > 0.0 { pi[i] / s } else { 0.0 };
        }
        for j in 0..n {
            let s: f64 = (0..n).map(|i| kernel[i * n + j] * u[i]).sum();
            v[j] = if active[j] && s > 0.0 { pi[j] / s } else { 0.0 };
        }
        residual = (0..n)
            .map(|i| {
                let row: f64 = (0..n).map(|j| u[i] * kernel[i * n + j] * v[j]).sum();
                (row - pi[i]).abs()
            })
            .fold(0.0, f64::max);
        if !residual.is_finite() {
            break;
        }
        if residual < params.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SinkhornNonConvergence { iters: params.max_iters, residual });
    }
    let dense: Vec<f64> = (0..n * n).map(|idx| u[idx / n] * kernel[idx] * v[idx % n]).collect();
    PairMatrix::from_dense(n, &dense)
}

/// Closed-form comparison of one pair design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub kind: PairKind,
    #[serde(rename = "N")]
    pub n: usize,
    pub marginals: Vec<f64>,
    pub variance: f64,
    /// Var(IID)/Var(kind); equal cost for all designs. `null` when the design has zero variance.
    pub ecm_vs_iid: Option<f64>,
}

/// Evaluate every design on one instance. A failing design yields an `Err` row.
pub fn compare_designs(inst: &PairInstance, params: &SinkhornParams) -> Vec<(PairKind, Result<PairReport>)> {
    let iid_var = build_pair_matrix(PairKind::Iid, inst).and_then(|q| ht_variance(inst, &q));
    PairKind::ALL
        .into_iter()
        .map(|kind| {
            let row = (|| {
                let q = match kind {
                    PairKind::Sinkhorn => sinkhorn_optimal(inst, params)?,
                    k => build_pair_matrix(k, inst)?,
                };
                let variance = ht_variance(inst, &q)?;
                let ecm_vs_iid = match &iid_var {
                    Ok(v) if variance > 0.0 => Some(v / variance),
                    _ => None,
                };
                Ok(PairReport { kind, n: inst.len(), marginals: q.marginals(), variance, ecm_vs_iid })
            })();
            (kind, row)
        })
        .collect()
}

/// Synthetic instance family: N timesteps on a grid over the clamped
/// support, SDS-like weights, and directions rotating smoothly with t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairFamily {
    #[serde(rename = "N")]
    pub n: usize,
    pub dim: usize,
    /// Isotropic perturbation relative to the rotating direction.
    pub noise: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for PairFamily {
    fn default() -> Self {
        Self { n: 64, dim: 8, noise: 0.3, t_min: 0.02, t_max: 0.98 }
    }
}

impl PairFamily {
    pub fn instance(&self, seed: u64, index: u64) -> Result<PairInstance> {
        if self.n < 2 || self.dim < 2 {
            return Err(Error::invalid("family needs N >= 2 and dim >= 2"));
        }
        let schedule = SyntheticSchedule::default();
        let mut r = rng::stream(seed, &[tag::INSTANCE, index]);
        let phase = 2.0 * PI * rng::uniform(&mut r);
        let turns = 0.75 + 0.5 * rng::uniform(&mut r);
        let n = self.n as f64;
        let mut y = Vec::with_capacity(self.n);
        let mut timesteps = Vec::with_capacity(self.n);
        let mut weights = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let t = self.t_min + (i as f64 + 0.5) / n * (self.t_max - self.t_min);
            let w = weight_sds(t, &schedule, WeightKind::SigmaSq);
            let angle = phase + turns * PI * t;
            let mut g = vec![0.0; self.dim];
            rng::fill_normal(&mut r, &mut g);
            g.iter_mut().for_each(|v| *v *= self.noise / (self.dim as f64).sqrt());
            g[0] += angle.cos();
            g[1] += angle.sin();
            y.push(g.iter().map(|v| w * v / n).collect());
            timesteps.push(t);
            weights.push(w);
        }
        PairInstance::new(y, timesteps, weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn inst(y: Vec<Vec<f64>>, w: Vec<f64>) -> PairInstance {
        let n = y.len();
        PairInstance::new(y, (0..n).map(|i| i as f64 / n as f64).collect(), w).unwrap()
    }

    #[test]
    fn two_items_single_pair() {
        let i2 = inst(vec![vec![1.0], vec![3.0]], vec![1.0, 1.0]);
        for kind in PairKind::ALL {
            let q = build_pair_matrix(kind, &i2).unwrap();
            assert_eq!(q.get(0, 1), 1.0);
            assert_eq!(q.marginals(), vec![1.0, 1.0]);
            assert_eq!(ht_estimate(&i2, &q, (0, 1)).unwrap(), vec![4.0]);
            assert_eq!(ht_variance(&i2, &q).unwrap(), 0.0);
        }
    }

    #[test]
    fn uniform_three_items() {
        let i3 = inst(vec![vec![1.0], vec![2.0], vec![3.0]], vec![1.0; 3]);
        let q = build_pair_matrix(PairKind::Iid, &i3).unwrap();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert_abs_diff_eq!(q.get(i, j), 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(q.marginals()[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ht_estimate(&i3, &q, (0, 1)).unwrap()[0], 1.5 * 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ht_expectation(&i3, &q).unwrap()[0], 6.0, epsilon = 1e-12);
        // pair estimates 4.5, 6, 7.5 around 6 → variance (2.25 + 0 + 2.25)/3
        assert_abs_diff_eq!(ht_variance(&i3, &q).unwrap(), 1.5, epsilon = 1e-12);
        let flat = inst(vec![vec![1.0]; 3], vec![1.0; 3]);
        assert_abs_diff_eq!(ht_variance(&flat, &build_pair_matrix(PairKind::Iid, &flat).unwrap()).unwrap(), 0.0, epsilon = 1e-24);
    }

    #[test]
    fn strat_index_four() {
        let i4 = inst(vec![vec![1.0]; 4], vec![1.0; 4]);
        let q = build_pair_matrix(PairKind::StratIndex, &i4).unwrap();
        assert_eq!(q.get(0, 1), 0.0);
        assert_eq!(q.get(2, 3), 0.0);
        for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
            assert_eq!(q.get(i, j), 0.25);
        }
    }

    #[test]
    fn iw_three() {
        let i3 = inst(vec![vec![1.0]; 3], vec![1.0, 1.0, 2.0]);
        let q = build_pair_matrix(PairKind::Iw, &i3).unwrap();
        assert_abs_diff_eq!(q.get(0, 1), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(q.get(0, 2), 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(q.get(1, 2), 0.4, epsilon = 1e-15);
        let zero = inst(vec![vec![1.0]; 3], vec![0.0; 3]);
        assert!(build_pair_matrix(PairKind::Iw, &zero).is_err());
        assert!(build_pair_matrix(PairKind::IwStrat, &zero).is_err());
    }

    #[test]
    fn iw_strat_halves_balance_mass() {
        // total mass 8: first half {0, 1} (mass 4), second {2, 3}
        let i4 = inst(vec![vec![1.0]; 4], vec![1.0, 3.0, 2.0, 2.0]);
        let q = build_pair_matrix(PairKind::IwStrat, &i4).unwrap();
        assert_eq!(q.get(0, 1), 0.0);
        assert_eq!(q.get(2, 3), 0.0);
        assert_abs_diff_eq!(q.get(1, 2), 6.0 / 16.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_marginal_with_nonzero_target() {
        let i3 = inst(vec![vec![1.0], vec![1.0], vec![1.0]], vec![0.0, 1.0, 1.0]);
        let q = build_pair_matrix(PairKind::Iw, &i3).unwrap();
        assert!(matches!(ht_variance(&i3, &q), Err(Error::ZeroMarginal(0))));
        assert!(matches!(ht_estimate(&i3, &q, (0, 1)), Err(Error::ZeroMarginal(0))));
    }

    #[test]
    fn sinkhorn_small_beta_respects_marginals() {
        let i3 = inst(vec![vec![1.0, 0.0], vec![0.0, 1.2], vec![0.9, 0.1]], vec![1.0; 3]);
        let params = SinkhornParams { beta: 1e-6, ..Default::default() };
        let q = sinkhorn_optimal(&i3, &params).unwrap();
        let targets = target_marginals(&i3).unwrap();
        assert!(marginal_residual(&q, &targets) <= 1e-6);
        assert_abs_diff_eq!(q.pair_total(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sinkhorn_prefers_orthogonal_pairs() {
        // y1 ⟂ y2, y1 ∥ y3
        let i3 = inst(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.8, 0.0]], vec![1.0, 1.0, 1.0]);
        let sk = sinkhorn_optimal(&i3, &SinkhornParams::default()).unwrap();
        let iw = build_pair_matrix(PairKind::Iw, &i3).unwrap();
        let iid = build_pair_matrix(PairKind::Iid, &i3).unwrap();
        assert!(sk.get(0, 1) > iw.get(0, 1));
        assert!(ht_variance(&i3, &sk).unwrap() <= ht_variance(&i3, &iid).unwrap());
    }

    #[test]
    fn sinkhorn_infeasible_targets_fail() {
        // one item carries more than half the total norm: π_0 > 1 cannot be met
        let i3 = inst(vec![vec![10.0], vec![1.0], vec![1.0]], vec![1.0; 3]);
        let params = SinkhornParams { max_iters: 200, ..Default::default() };
        assert!(matches!(sinkhorn_optimal(&i3, &params), Err(Error::SinkhornNonConvergence { .. })));
    }

    #[test]
    fn family_instances_are_deterministic() {
        let fam = PairFamily::default();
        assert_eq!(fam.instance(1, 3).unwrap(), fam.instance(1, 3).unwrap());
        assert_ne!(fam.instance(1, 3).unwrap(), fam.instance(1, 4).unwrap());
        assert_eq!(fam.instance(1, 3).unwrap().len(), 64);
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in PairKind::ALL {
            assert_eq!(k.as_str().parse::<PairKind>().unwrap(), k);
        }
        assert!("bogus".parse::<PairKind>().is_err());
    }
}
