//! Compute-aware comparison: cost models, baseline Pareto curves, effective
//! compute multiplier (ECM) and relative efficiency (RE).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;

/// Measured cost table entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredCost {
    #[serde(rename = "R")]
    pub renders: usize,
    #[serde(rename = "K")]
    pub renoise: usize,
    pub cost: f64,
}

/// Cost of one estimate with R renders and K re-noisings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostModel {
    /// B = α·R + R·K, denoise unit cost 1.
    Parametric { alpha: f64 },
    Measured(Vec<MeasuredCost>),
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel::Parametric { alpha: 1.0 }
    }
}

impl CostModel {
    pub fn parametric(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be a nonnegative finite scalar, got {alpha}")));
        }
        Ok(CostModel::Parametric { alpha })
    }

    pub fn measured(entries: impl IntoIterator<Item = ((usize, usize), f64)>) -> Result<Self> {
        let table: BTreeMap<(usize, usize), f64> = entries.into_iter().collect();
        if let Some(((r, k), c)) = table.iter().find(|(_, c)| !(**c > 0.0) || !c.is_finite()) {
            return Err(Error::invalid(format!("measured cost for ({r}, {k}) must be positive, got {c}")));
        }
        Ok(CostModel::Measured(
            table
                .into_iter()
                .map(|((renders, renoise), cost)| MeasuredCost { renders, renoise, cost })
                .collect(),
        ))
    }

    pub fn cost(&self, renders: usize, renoise: usize) -> Result<f64> {
        if renders == 0 || renoise == 0 {
            return Err(Error::invalid("R and K must be positive"));
        }
        match self {
            CostModel::Parametric { alpha } => {
                let r = renders as f64;
                Ok(alpha * r + r * renoise as f64)
            }
            CostModel::Measured(table) => table
                .iter()
                .find(|e| e.renders == renders && e.renoise == renoise)
                .map(|e| e.cost)
                .ok_or(Error::MissingCost { renders, renoise }),
        }
    }
}

pub fn cost_of(spec: &EstimatorSpec, model: &CostModel) -> Result<f64> {
    model.cost(spec.renders, spec.renoise)
}

/// Dominance-filtered baseline curve, sorted by cost with strictly
/// decreasing variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoCurve {
    points: Vec<(f64, f64)>,
}

pub fn pareto_baseline(points: &[(f64, f64)]) -> Result<ParetoCurve> {
    if points.is_empty() {
        return Err(Error::invalid("baseline needs at least one point"));
    }
    if let Some(p) = points.iter().find(|(c, v)| !(*c > 0.0 && *v > 0.0 && c.is_finite() && v.is_finite())) {
        return Err(Error::invalid(format!("baseline points must be positive, got {p:?}")));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut kept: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for p in sorted {
        if kept.last().is_none_or(|last| p.1 < last.1) {
            kept.push(p);
        }
    }
    Ok(ParetoCurve { points: kept })
}

impl ParetoCurve {
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Baseline cost needed to reach `variance`, by piecewise-linear
    /// interpolation in log-log space. Outside the measured range the curve is
    /// continued with slope −1 (variance ∝ 1/cost) when `extrapolate` is set.
    pub fn cost_at_variance(&self, variance: f64, extrapolate: bool) -> Result<f64> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::invalid(format!("variance must be positive, got {variance}")));
        }
        if let Some(&(c, _)) = self.points.iter().find(|p| p.1 == variance) {
            return Ok(c);
        }
        let (c_first, v_first) = self.points[0];
        let (c_last, v_last) = self.points[self.points.len() - 1];
        if variance > v_first {
            return if extrapolate {
                Ok(c_first * v_first / variance)
            } else {
                Err(Error::IsoVarianceUnreachable(variance))
            };
        }
        if variance < v_last {
            return if extrapolate {
                Ok(c_last * v_last / variance)
            } else {
                Err(Error::IsoVarianceUnreachable(variance))
            };
        }
        // variances decrease along the curve; find the bracketing segment
        let j = self.points.partition_point(|p| p.1 > variance);
        let (c0, v0) = self.points[j - 1];
        let (c1, v1) = self.points[j];
        let s = (variance.ln() - v0.ln()) / (v1.ln() - v0.ln());
        Ok((c0.ln() + s * (c1.ln() - c0.ln())).exp())
    }
}

/// Iso-variance ECM: baseline cost at the method's variance over the method cost.
pub fn ecm(method: (f64, f64), baseline: &ParetoCurve) -> Result<f64> {
    ecm_with(method, baseline, true)
}

pub fn ecm_with(method: (f64, f64), baseline: &ParetoCurve, extrapolate: bool) -> Result<f64> {
    let (cost, variance) = method;
    if !(cost > 0.0) {
        return Err(Error::invalid(format!("method cost must be positive, got {cost}")));
    }
    Ok(baseline.cost_at_variance(variance, extrapolate)? / cost)
}

/// RE = Var_uniform / Var_method at identical (R, K).
pub fn relative_efficiency(var_uniform: f64, var_method: f64) -> Result<f64> {
    if !(var_uniform > 0.0) || !(var_method > 0.0) {
        return Err(Error::invalid(format!(
            "variances must be positive, got {var_uniform} and {var_method}"
        )));
    }
    Ok(var_uniform / var_method)
}

/// Which variance the ECM lookup is anchored at; reports carry this label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EcmAnchor {
    /// Baseline cost interpolated at the method's own variance.
    MethodVariance,
    /// Method compared at a baseline point's variance.
    BaselinePoint,
}
