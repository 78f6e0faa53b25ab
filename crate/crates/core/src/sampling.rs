//! Timestep distributions, tabulated importance proposals, stratified
//! quantiles and discrete-grid snapping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

/// Number of tabulation points used by default for proposal CDFs.
pub const DEFAULT_GRID: usize = 4096;
/// Floor mix used for proposals built from estimated (oracle) profiles.
pub const ORACLE_FLOOR_MIX: f64 = 1e-3;

/// Uniform base timestep distribution p(t) on `[t_min, t_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseDistribution {
    t_min: f64,
    t_max: f64,
}

impl BaseDistribution {
    pub fn uniform(t_min: f64, t_max: f64) -> Result<Self> {
        if !(t_min.is_finite() && t_max.is_finite()) || !(0.0..1.0).contains(&t_min) || t_max > 1.0 || t_min >= t_max {
            return Err(Error::invalid(format!(
                "base support must satisfy 0 <= t_min < t_max <= 1, got [{t_min}, {t_max}]"
            )));
        }
        Ok(Self { t_min, t_max })
    }

    /// Uniform on the unit interval.
    pub fn unit() -> Self {
        Self { t_min: 0.0, t_max: 1.0 }
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn width(&self) -> f64 {
        self.t_max - self.t_min
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_min && t <= self.t_max
    }

    pub fn density(&self, t: f64) -> f64 {
        if self.contains(t) {
            1.0 / self.width()
        } else {
            0.0
        }
    }

    /// Inverse CDF; `u` is assumed to lie in `[0, 1]`.
    #[inline]
    pub fn quantile(&self, u: f64) -> f64 {
        (self.t_min + u * (self.t_max - self.t_min)).min(self.t_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    /// q = p exactly.
    Flat,
    Tabulated(Table),
}

#[derive(Debug, Clone, PartialEq)]
struct Table {
    grid: Vec<f64>,
    /// Node density values, normalized so the trapezoid integral is 1.
    nodes: Vec<f64>,
    cdf: Vec<f64>,
    /// Sampler density on each cell: the derivative of the piecewise-linear CDF.
    cells: Vec<f64>,
}

impl Table {
    fn from_nodes(grid: Vec<f64>, raw: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        let mut cdf = Vec::with_capacity(n);
        cdf.push(0.0);
        let mut acc = 0.0;
        for i in 0..n - 1 {
            acc += 0.5 * (raw[i] + raw[i + 1]) * (grid[i + 1] - grid[i]);
            cdf.push(acc);
        }
        if !(acc > 0.0) || !acc.is_finite() {
            return Err(Error::DegenerateProposal);
        }
        let nodes: Vec<f64> = raw.iter().map(|v| v / acc).collect();
        for c in cdf.iter_mut() {
            *c /= acc;
        }
        cdf[n - 1] = 1.0;
        let cells = (0..n - 1)
            .map(|i| (cdf[i + 1] - cdf[i]) / (grid[i + 1] - grid[i]))
            .collect();
        Ok(Self { grid, nodes, cdf, cells })
    }

    /// Cell containing `t`; at an interior node prefer a cell with mass.
    fn cell_of(&self, t: f64) -> usize {
        let last = self.cells.len() - 1;
        let i = self.grid.partition_point(|&g| g <= t).saturating_sub(1).min(last);
        if self.cells[i] == 0.0 && i > 0 && t == self.grid[i] && self.cells[i - 1] > 0.0 {
            i - 1
        } else {
            i
        }
    }
}

/// Importance proposal q(t) over the base support with tabulated CDF and
/// inverse CDF (piecewise-linear interpolation).
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    base: BaseDistribution,
    floor_mix: f64,
    shape: Shape,
}

/// Serialized form of a [`Proposal`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalDoc {
    pub t_min: f64,
    pub t_max: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub floor_mix: f64,
}

/// Build q ∝ (1−η)·p·w/∫p·w + η·p, tabulated at `grid_size` equally spaced points.
pub fn build_proposal(
    base: BaseDistribution,
    weight_profile: impl Fn(f64) -> f64,
    grid_size: usize,
    floor_mix: f64,
) -> Result<Proposal> {
    if grid_size < 2 {
        return Err(Error::invalid("grid_size must be at least 2"));
    }
    if !(0.0..1.0).contains(&floor_mix) {
        return Err(Error::invalid(format!("floor_mix must lie in [0, 1), got {floor_mix}")));
    }
    let h = base.width() / (grid_size - 1) as f64;
    let grid: Vec<f64> = (0..grid_size)
        .map(|i| if i + 1 == grid_size { base.t_max } else { base.t_min + i as f64 * h })
        .collect();
    let weights: Vec<f64> = grid.iter().map(|&t| weight_profile(t)).collect();
    Proposal::from_weights(base, grid, &weights, floor_mix)
}

impl Proposal {
    /// The proposal identical to the base distribution.
    pub fn flat(base: BaseDistribution) -> Self {
        Self { base, floor_mix: 0.0, shape: Shape::Flat }
    }

    fn from_weights(base: BaseDistribution, grid: Vec<f64>, weights: &[f64], floor_mix: f64) -> Result<Self> {
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(Error::invalid(format!(
                "weight profile must be nonnegative and finite, got {w} at t = {}",
                grid[i]
            )));
        }
        let first = weights[0];
        if weights.iter().all(|&w| w == first) {
            if first == 0.0 && floor_mix == 0.0 {
                return Err(Error::DegenerateProposal);
            }
            return Ok(Self { base, floor_mix, shape: Shape::Flat });
        }
        let p = 1.0 / base.width();
        let mut mass = 0.0;
        for i in 0..grid.len() - 1 {
            mass += 0.5 * p * (weights[i] + weights[i + 1]) * (grid[i + 1] - grid[i]);
        }
        if !(mass > 0.0) {
            if floor_mix == 0.0 {
                return Err(Error::DegenerateProposal);
            }
            return Ok(Self { base, floor_mix, shape: Shape::Flat });
        }
        let raw: Vec<f64> = weights
            .iter()
            .map(|&w| (1.0 - floor_mix) * p * w / mass + floor_mix * p)
            .collect();
        Ok(Self { base, floor_mix, shape: Shape::Tabulated(Table::from_nodes(grid, raw)?) })
    }

    /// Rebuild a proposal from tabulated node densities.
    pub fn from_doc(doc: &ProposalDoc) -> Result<Self> {
        let base = BaseDistribution::uniform(doc.t_min, doc.t_max)?;
        if doc.grid.len() < 2 || doc.grid.len() != doc.density.len() {
            return Err(Error::invalid("grid and density must have equal length >= 2"));
        }
        if doc.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("grid must be strictly increasing"));
        }
        if doc.grid[0] != doc.t_min || doc.grid[doc.grid.len() - 1] != doc.t_max {
            return Err(Error::invalid("grid must span [t_min, t_max]"));
        }
        if !(0.0..1.0).contains(&doc.floor_mix) {
            return Err(Error::invalid("floor_mix must lie in [0, 1)"));
        }
        if let Some(d) = doc.density.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::invalid(format!("density must be nonnegative and finite, got {d}")));
        }
        let first = doc.density[0];
        if doc.density.iter().all(|&d| d == first) {
            if first == 0.0 {
                return Err(Error::DegenerateProposal);
            }
            return Ok(Self { base, floor_mix: doc.floor_mix, shape: Shape::Flat });
        }
        let table = Table::from_nodes(doc.grid.clone(), doc.density.clone())?;
        Ok(Self { base, floor_mix: doc.floor_mix, shape: Shape::Tabulated(table) })
    }

    pub fn to_doc(&self) -> ProposalDoc {
        let (grid, density) = match &self.shape {
            Shape::Flat => {
                let p = 1.0 / self.base.width();
                (vec![self.base.t_min, self.base.t_max], vec![p, p])
            }
            Shape::Tabulated(t) => (t.grid.clone(), t.nodes.clone()),
        };
        ProposalDoc { t_min: self.base.t_min, t_max: self.base.t_max, grid, density, floor_mix: self.floor_mix }
    }

    pub fn base(&self) -> &BaseDistribution {
        &self.base
    }

    pub fn floor_mix(&self) -> f64 {
        self.floor_mix
    }

    /// True when the proposal coincides with the base distribution.
    pub fn is_flat(&self) -> bool {
        matches!(self.shape, Shape::Flat)
    }

    /// Sampler density q(t).
    pub fn density(&self, t: f64) -> f64 {
        if !self.base.contains(t) {
            return 0.0;
        }
        match &self.shape {
            Shape::Flat => 1.0 / self.base.width(),
            Shape::Tabulated(tab) => tab.cells[tab.cell_of(t)],
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t <= self.base.t_min {
            return 0.0;
        }
        if t >= self.base.t_max {
            return 1.0;
        }
        match &self.shape {
            Shape::Flat => (t - self.base.t_min) / self.base.width(),
            Shape::Tabulated(tab) => {
                let i = tab.cell_of(t);
                tab.cdf[i] + tab.cells[i] * (t - tab.grid[i])
            }
        }
    }

    /// Total mass of the sampler density (1 up to rounding).
    pub fn total_mass(&self) -> f64 {
        match &self.shape {
            Shape::Flat => 1.0,
            Shape::Tabulated(tab) => tab
                .cells
                .iter()
                .zip(tab.grid.windows(2))
                .map(|(q, g)| q * (g[1] - g[0]))
                .sum(),
        }
    }

    /// t with CDF(t) = u under the piecewise-linear tabulation.
    pub fn inverse_cdf(&self, u: f64) -> Result<f64> {
        check_quantile(u)?;
        Ok(self.sample(u).0)
    }

    /// Map a quantile to `(t, p(t)/q(t))` using the cell the draw came from.
    pub(crate) fn sample(&self, u: f64) -> (f64, f64) {
        match &self.shape {
            Shape::Flat => (self.base.quantile(u), 1.0),
            Shape::Tabulated(tab) => {
                let last = tab.cells.len() - 1;
                let i = tab.cdf.partition_point(|&c| c <= u).saturating_sub(1).min(last);
                let (c0, c1) = (tab.cdf[i], tab.cdf[i + 1]);
                let (g0, g1) = (tab.grid[i], tab.grid[i + 1]);
                let t = if c1 > c0 {
                    (g0 + (u - c0) / (c1 - c0) * (g1 - g0)).clamp(g0, g1)
                } else {
                    g1
                };
                let t = t.clamp(self.base.t_min, self.base.t_max);
                let p = 1.0 / self.base.width();
                (t, p / tab.cells[i])
            }
        }
    }

    /// Error if q vanishes on any part of the base support.
    pub fn check_support(&self) -> Result<()> {
        if let Shape::Tabulated(tab) = &self.shape {
            if let Some(i) = tab.cells.iter().position(|&q| q <= 0.0) {
                return Err(Error::SupportViolation { t: 0.5 * (tab.grid[i] + tab.grid[i + 1]) });
            }
        }
        Ok(())
    }

    /// Likelihood ratio p(t)/q(t).
    pub fn importance_weight(&self, t: f64) -> Result<f64> {
        if !self.base.contains(t) {
            return Err(Error::invalid(format!(
                "t = {t} outside the support [{}, {}]",
                self.base.t_min, self.base.t_max
            )));
        }
        if let Shape::Flat = self.shape {
            return Ok(1.0);
        }
        let q = self.density(t);
        if q <= 0.0 {
            return Err(Error::SupportViolation { t });
        }
        Ok(self.base.density(t) / q)
    }
}

fn check_quantile(u: f64) -> Result<()> {
    if (0.0..=1.0).contains(&u) {
        Ok(())
    } else {
        Err(Error::invalid(format!("quantile must lie in [0, 1], got {u}")))
    }
}

/// One stratified quantile per equal-mass stratum of `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileBatch {
    pub strata: usize,
    pub u_values: Vec<f64>,
    /// Within-stratum jitter ξ_k that produced each quantile.
    pub jitter: Vec<f64>,
}

/// u = (k + ξ)/M for 0-based stratum k, kept strictly below (k+1)/M.
#[inline]
pub fn stratum_quantile(k: usize, m: usize, xi: f64) -> f64 {
    let m = m as f64;
    let u = (k as f64 + xi) / m;
    let hi = (k as f64 + 1.0) / m;
    if u >= hi {
        prev_float(hi)
    } else {
        u
    }
}

#[inline]
fn prev_float(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    f64::from_bits(x.to_bits() - 1)
}

pub fn stratified_quantiles(m: usize, rng: &mut StreamRng) -> Result<QuantileBatch> {
    let jitter: Vec<f64> = (0..m).map(|_| rng::uniform(rng)).collect();
    QuantileBatch::from_jitter(m, jitter)
}

impl QuantileBatch {
    pub fn from_jitter(m: usize, jitter: Vec<f64>) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("stratum count must be positive"));
        }
        if jitter.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: jitter.len() });
        }
        if let Some(x) = jitter.iter().find(|x| !(0.0..1.0).contains(*x)) {
            return Err(Error::invalid(format!("jitter must lie in [0, 1), got {x}")));
        }
        let u_values = jitter.iter().enumerate().map(|(k, &xi)| stratum_quantile(k, m, xi)).collect();
        Ok(Self { strata: m, u_values, jitter })
    }
}

/// Nearest index of `t·(T−1)` in `{0, …, T−1}`; exact ties round down.
pub fn snap_to_grid(t: f64, grid_size: usize) -> usize {
    if grid_size <= 1 {
        return 0;
    }
    let x = t.clamp(0.0, 1.0) * (grid_size - 1) as f64;
    let idx = (x - 0.5).ceil().max(0.0) as usize;
    idx.min(grid_size - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn linear() -> Proposal {
        build_proposal(BaseDistribution::unit(), |t| t, DEFAULT_GRID, 0.0).unwrap()
    }

    #[test]
    fn identity_weight_is_flat() {
        let q = build_proposal(BaseDistribution::unit(), |_| 1.0, DEFAULT_GRID, 0.0).unwrap();
        assert!(q.is_flat());
        assert_eq!(q.inverse_cdf(0.3).unwrap(), 0.3);
        for t in [0.0, 0.1, 0.77, 1.0] {
            assert_eq!(q.importance_weight(t).unwrap(), 1.0);
        }
    }

    #[test]
    fn linear_weight_gives_triangular_density() {
        let q = linear();
        assert_abs_diff_eq!(q.density(0.5), 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(q.density(0.25), 0.5, epsilon = 1e-3);
        assert_abs_diff_eq!(q.inverse_cdf(0.25).unwrap(), 0.5, epsilon = 1e-4);
        assert_abs_diff_eq!(q.importance_weight(0.5).unwrap(), 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(q.importance_weight(0.25).unwrap(), 2.0, epsilon = 1e-3);
        assert_abs_diff_eq!(q.total_mass(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tabulated_inverse_matches_sqrt() {
        let q = linear();
        let mut worst: f64 = 0.0;
        for i in 0..=10_000 {
            let u = i as f64 / 10_000.0;
            worst = worst.max((q.inverse_cdf(u).unwrap() - u.sqrt()).abs());
        }
        assert!(worst <= 1e-4, "max inverse error {worst}");
    }

    #[test]
    fn degenerate_and_negative_profiles_rejected() {
        let base = BaseDistribution::unit();
        assert!(matches!(build_proposal(base, |_| 0.0, 64, 0.0), Err(Error::DegenerateProposal)));
        assert!(build_proposal(base, |_| 0.0, 64, 0.1).unwrap().is_flat());
        assert!(matches!(build_proposal(base, |t| t - 0.5, 64, 0.0), Err(Error::InvalidArgument(_))));
        assert!(build_proposal(base, |t| t, 1, 0.0).is_err());
        assert!(build_proposal(base, |t| t, 64, 1.0).is_err());
    }

    #[test]
    fn quantile_out_of_range() {
        assert!(linear().inverse_cdf(-0.1).is_err());
        assert!(linear().inverse_cdf(1.5).is_err());
        assert_eq!(linear().inverse_cdf(1.0).unwrap(), 1.0);
        assert_eq!(linear().inverse_cdf(0.0).unwrap(), 0.0);
    }

    #[test]
    fn support_violation_detected() {
        // zero weight on the left half leaves q = 0 where p > 0
        let q = build_proposal(BaseDistribution::unit(), |t| if t < 0.5 { 0.0 } else { 1.0 }, 65, 0.0).unwrap();
        assert!(matches!(q.importance_weight(0.25), Err(Error::SupportViolation { .. })));
        assert!(q.importance_weight(0.75).is_ok());
        // the boundary node belongs to the cell with mass
        assert!(q.importance_weight(0.5).is_ok());
        let floored = build_proposal(BaseDistribution::unit(), |t| if t < 0.5 { 0.0 } else { 1.0 }, 65, 1e-3).unwrap();
        assert!(floored.importance_weight(0.25).unwrap() > 0.0);
    }

    #[test]
    fn stratified_quantile_examples() {
        let b = QuantileBatch::from_jitter(4, vec![0.5; 4]).unwrap();
        assert_eq!(b.u_values, vec![0.125, 0.375, 0.625, 0.875]);
        let b = QuantileBatch::from_jitter(1, vec![0.2]).unwrap();
        assert_eq!(b.u_values, vec![0.2]);
        assert!(QuantileBatch::from_jitter(0, vec![]).is_err());
    }

    #[test]
    fn stratum_upper_edge_stays_open() {
        let xi = prev_float(1.0);
        for m in [1, 2, 3, 7, 1000] {
            for k in 0..m {
                let u = stratum_quantile(k, m, xi);
                assert!(u < (k as f64 + 1.0) / m as f64);
                assert!(u >= k as f64 / m as f64);
            }
        }
    }

    #[test]
    fn snapping() {
        assert_eq!(snap_to_grid(0.5, 1000), 499);
        assert_eq!(snap_to_grid(0.0, 1000), 0);
        assert_eq!(snap_to_grid(1.0, 1000), 999);
        for i in 0..1000 {
            assert_eq!(snap_to_grid(i as f64 / 999.0, 1000), i);
        }
        assert_eq!(snap_to_grid(0.7, 1), 0);
    }

    #[test]
    fn doc_roundtrip_preserves_sampler() {
        let q = build_proposal(BaseDistribution::uniform(0.02, 0.98).unwrap(), |t| (t * 7.0).sin().abs() + 0.1, 257, 0.0)
            .unwrap();
        let json = serde_json::to_string(&q.to_doc()).unwrap();
        let back = Proposal::from_doc(&serde_json::from_str(&json).unwrap()).unwrap();
        for i in 0..100 {
            let u = i as f64 / 99.0;
            assert_abs_diff_eq!(q.inverse_cdf(u).unwrap(), back.inverse_cdf(u).unwrap(), epsilon = 1e-12);
        }
        let flat = Proposal::flat(BaseDistribution::unit());
        assert!(Proposal::from_doc(&flat.to_doc()).unwrap().is_flat());
    }
}
