//! Batch experiment driver behind the `mcvr` binary.
//!
//! A TOML [`ExperimentConfig`] drives four commands that write CSV/JSON files
//! into an output directory. Outputs depend only on the config and seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{
    attribution_against, reference_scores, Coefficient, ExperimentParams, FieldParams, GradientField, Scheme,
    REFERENCE_BUDGET,
};
use crate::efficiency::{ecm_with, pareto_baseline, relative_efficiency, CostModel};
use crate::error::{Error, Result};
use crate::estimators::{Allocation, Estimator, EstimatorSpec, ProposalBook, TimestepMode};
use crate::pairprob::{build_pair_matrix, compare_designs, PairFamily, PairInstance, PairKind, SinkhornParams};
use crate::rng::{child_seed, tag};
use crate::testbed::{oracle_proposal, Task, TaskSpec};
use crate::variance_lab::{
    check_reference_budget, collect_estimates, converge, mse_to_reference, reference_stats, ConvergenceCriterion,
    VarianceReport,
};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Process exit code for an error: 2 for configuration problems, 3 for
/// numerical failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) | Error::MissingCost { .. } | Error::Io(_) | Error::Json(_) => {
            EXIT_CONFIG
        }
        _ => EXIT_NUMERICAL,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "uniform")]
    Uniform,
    #[serde(rename = "iw")]
    Iw,
    #[serde(rename = "strat")]
    Strat,
    #[serde(rename = "iw+strat")]
    IwStrat,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Uniform, Method::Iw, Method::Strat, Method::IwStrat];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Uniform => "uniform",
            Method::Iw => "iw",
            Method::Strat => "strat",
            Method::IwStrat => "iw+strat",
        }
    }

    fn uses_proposal(self) -> bool {
        matches!(self, Method::Iw | Method::IwStrat)
    }

    fn stratified(self) -> bool {
        matches!(self, Method::Strat | Method::IwStrat)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Which stratified allocation the `strat` methods use.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratChoice {
    /// Per-render strata when K > 1, global strata otherwise.
    #[default]
    Auto,
    PerRender,
    Global,
}

impl StratChoice {
    fn allocation(self, renoise: usize) -> Allocation {
        match self {
            StratChoice::PerRender => Allocation::StratPerRender,
            StratChoice::Global => Allocation::StratGlobal,
            StratChoice::Auto if renoise > 1 => Allocation::StratPerRender,
            StratChoice::Auto => Allocation::StratGlobal,
        }
    }
}

/// Proposal used by the importance-sampled methods.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalChoice {
    /// The task's weight heuristic if it has one, else the binned oracle.
    #[default]
    Auto,
    Heuristic,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub bins: usize,
    pub samples_per_bin: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { bins: 64, samples_per_bin: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    #[serde(rename = "R")]
    pub renders: usize,
    #[serde(rename = "K")]
    pub renoise: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { method: Method::IwStrat, renders: 1, renoise: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairprobConfig {
    pub family: PairFamily,
    pub instances: u64,
    /// JSON file holding one `{y, timesteps, weights}` instance; overrides the family.
    pub instance_file: Option<PathBuf>,
    pub sinkhorn: SinkhornParams,
    pub dump_matrices: bool,
}

impl Default for PairprobConfig {
    fn default() -> Self {
        Self {
            family: PairFamily::default(),
            instances: 100,
            instance_file: None,
            sinkhorn: SinkhornParams::default(),
            dump_matrices: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributionConfig {
    pub field: FieldParams,
    pub budgets: Vec<usize>,
    pub trials: u64,
    pub reference_budget: usize,
    pub coefficient: Coefficient,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        Self {
            field: FieldParams::default(),
            budgets: vec![4, 16, 64, 256, 768],
            trials: 100,
            reference_budget: REFERENCE_BUDGET,
            coefficient: Coefficient::Pearson,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Task string such as `hier{sigmaA2=1,sigmaB2=4,dim=4}`.
    pub task: String,
    pub seed: u64,
    pub out: PathBuf,
    pub methods: Vec<Method>,
    /// Explicit (R, K) cells; when absent, all powers of two with R·K ≤ cap.
    pub grid: Option<Vec<[usize; 2]>>,
    pub cap: usize,
    pub cost: CostModel,
    pub criterion: ConvergenceCriterion,
    /// Reference sample count for `run`; 0 skips the reference.
    pub n_gt: u64,
    pub proposal: ProposalChoice,
    pub oracle: OracleConfig,
    pub strat_allocation: StratChoice,
    /// Continue the baseline curve with slope −1 outside its measured range.
    pub extrapolate: bool,
    pub run: RunConfig,
    pub pairprob: PairprobConfig,
    pub attribution: AttributionConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: "hier{sigmaA2=1,sigmaB2=4,dim=4}".into(),
            seed: 0,
            out: PathBuf::from("out"),
            methods: Method::ALL.to_vec(),
            grid: None,
            cap: 32,
            cost: CostModel::default(),
            criterion: ConvergenceCriterion::default(),
            n_gt: 0,
            proposal: ProposalChoice::Auto,
            oracle: OracleConfig::default(),
            strat_allocation: StratChoice::Auto,
            extrapolate: false,
            run: RunConfig::default(),
            pairprob: PairprobConfig::default(),
            attribution: AttributionConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// The (R, K) cells of the sweep.
    pub fn cells(&self) -> Result<Vec<(usize, usize)>> {
        let cells: Vec<(usize, usize)> = match &self.grid {
            Some(g) => g.iter().map(|&[r, k]| (r, k)).collect(),
            None => {
                let mut v = Vec::new();
                let mut r = 1;
                while r <= self.cap {
                    let mut k = 1;
                    while r * k <= self.cap {
                        v.push((r, k));
                        k *= 2;
                    }
                    r *= 2;
                }
                v
            }
        };
        if cells.is_empty() {
            return Err(Error::Config("estimator grid is empty".into()));
        }
        if let Some(&(r, k)) = cells.iter().find(|&&(r, k)| r == 0 || k == 0 || r * k > self.cap) {
            return Err(Error::Config(format!("grid cell (R={r}, K={k}) must be positive with R*K <= {}", self.cap)));
        }
        Ok(cells)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cap == 0 {
            return Err(Error::Config("cap must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        self.criterion.validate().map_err(config)?;
        self.cells()?;
        self.build_task().map_err(config)?;
        Ok(())
    }

    fn build_task(&self) -> Result<Box<dyn Task>> {
        TaskSpec::parse(&self.task)?.build(self.cost.clone())
    }

    /// Proposal book with the entry the importance-sampled methods use,
    /// stored under the returned name.
    fn book(&self, task: &dyn Task) -> Result<(ProposalBook, String)> {
        let mut book = ProposalBook::for_task(task)?;
        let use_heuristic = match self.proposal {
            ProposalChoice::Heuristic => {
                if task.heuristic_weight(task.base().t_min()).is_none() {
                    return Err(Error::Config(format!("task `{}` has no weight heuristic", task.name())));
                }
                true
            }
            ProposalChoice::Oracle => false,
            ProposalChoice::Auto => task.heuristic_weight(task.base().t_min()).is_some(),
        };
        if use_heuristic {
            return Ok((book, "heuristic".into()));
        }
        let oracle_seed = child_seed(self.seed, &[tag::ORACLE]);
        let q = oracle_proposal(task, self.oracle.bins, self.oracle.samples_per_bin, oracle_seed)?;
        book.insert("oracle", q);
        Ok((book, "oracle".into()))
    }

    fn spec(&self, method: Method, renders: usize, renoise: usize, seed: u64, proposal: &str) -> EstimatorSpec {
        let mode = if method.uses_proposal() {
            TimestepMode::Proposal(proposal.to_string())
        } else {
            TimestepMode::Base
        };
        let allocation = if method.stratified() {
            self.strat_allocation.allocation(renoise)
        } else {
            Allocation::Iid
        };
        EstimatorSpec::new(renders, renoise, mode, allocation, seed)
    }
}

fn config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Config(format!("unknown format `{s}`"))),
        }
    }
}

/// Run `f` on a dedicated pool of `threads` workers, or the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::Config("--threads must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Format with 6 significant digits, `%g` style.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    let sci = format!("{x:.5e}");
    // rounding may bump the exponent, so take it from the formatted string
    let exp = sci.split('e').nth(1).and_then(|e| e.parse::<i32>().ok()).unwrap_or(exp);
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let (mantissa, _) = sci.split_once('e').expect("scientific format");
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn opt_sig(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

/// Write the file through a temporary sibling and rename it into place.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

struct Outputs {
    dir: PathBuf,
    files: Vec<(PathBuf, String)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), files: Vec::new() }
    }

    fn add(&mut self, name: impl AsRef<str>, contents: String) {
        self.files.push((self.dir.join(name.as_ref()), contents));
    }

    /// Everything is written once, after all computation has succeeded.
    fn commit(self) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir)?;
        let mut written = Vec::with_capacity(self.files.len());
        for (path, contents) in self.files {
            write_atomic(&path, &contents)?;
            written.push(path);
        }
        Ok(written)
    }
}

// ---------------------------------------------------------------------------
// run

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub task: String,
    pub method: Method,
    pub spec: EstimatorSpec,
    pub criterion: ConvergenceCriterion,
    pub report: VarianceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOutput {
    pub n_gt: u64,
    pub seed: u64,
    pub mean: Vec<f64>,
    /// Mean of ‖μ̂ − reference‖² over the run's estimates.
    pub mse_to_reference: f64,
    pub trace_cov: f64,
}

/// Single-cell variance report (`report.json`), plus `reference.json` when
/// `n_gt > 0`.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let task = cfg.build_task()?;
    let (book, proposal) = cfg.book(task.as_ref())?;
    let run = &cfg.run;
    if run.renders == 0 || run.renoise == 0 {
        return Err(Error::Config("run needs R >= 1 and K >= 1".into()));
    }
    let spec = cfg.spec(run.method, run.renders, run.renoise, child_seed(cfg.seed, &[0]), &proposal);
    let estimator = Estimator::new(task.as_ref(), spec.clone(), &book)?;
    let report = converge(&estimator, &cfg.criterion);
    let mut out = Outputs::new(&cfg.out);
    if cfg.n_gt > 0 {
        check_reference_budget(cfg.n_gt, report.samples);
        let ref_spec = EstimatorSpec { seed: child_seed(cfg.seed, &[tag::AUX]), ..spec.clone() };
        let reference = reference_stats(task.as_ref(), &ref_spec, &book, cfg.n_gt)?.mean;
        let estimates = collect_estimates(&estimator, 0..report.samples);
        let mse = mse_to_reference(&estimates, &reference)?;
        out.add(
            "reference.json",
            to_json(&ReferenceOutput {
                n_gt: cfg.n_gt,
                seed: ref_spec.seed,
                mean: reference,
                mse_to_reference: mse,
                trace_cov: report.trace_cov,
            })?,
        );
    }
    out.add(
        "report.json",
        to_json(&RunOutput { task: cfg.task.clone(), method: run.method, spec, criterion: cfg.criterion, report })?,
    );
    out.commit()
}

// ---------------------------------------------------------------------------
// sweep

pub const SWEEP_HEADER: &str = "method,R,K,cost,variance,ecm,re";
pub const BASELINE_ANCHOR: &str = "uniform_k1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    #[serde(rename = "R")]
    pub renders: usize,
    #[serde(rename = "K")]
    pub renoise: usize,
    pub cost: f64,
    pub variance: f64,
    pub ecm: Option<f64>,
    pub re: Option<f64>,
    pub samples: u64,
    pub converged_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSeed {
    pub index: usize,
    #[serde(rename = "R")]
    pub renders: usize,
    #[serde(rename = "K")]
    pub renoise: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub task: String,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub cells: Vec<CellSeed>,
    pub criterion: ConvergenceCriterion,
    pub cost: CostModel,
    pub proposal: String,
    pub baseline: String,
    pub extrapolate: bool,
}

/// Variance rows for every (method, cell), with ECM against the uniform
/// (R, 1) curve and RE against uniform at the same (R, K).
pub fn sweep_rows(cfg: &ExperimentConfig) -> Result<(Vec<SweepRow>, SweepManifest)> {
    cfg.validate()?;
    let cells = cfg.cells()?;
    let task = cfg.build_task()?;
    let (book, proposal) = cfg.book(task.as_ref())?;
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();

    let seeds: Vec<CellSeed> = cells
        .iter()
        .enumerate()
        .map(|(index, &(renders, renoise))| CellSeed { index, renders, renoise, seed: child_seed(cfg.seed, &[index as u64]) })
        .collect();
    let jobs: Vec<(Method, &CellSeed)> = methods.iter().flat_map(|&m| seeds.iter().map(move |c| (m, c))).collect();
    let reports = jobs
        .par_iter()
        .map(|&(method, cell)| {
            let spec = cfg.spec(method, cell.renders, cell.renoise, cell.seed, &proposal);
            let estimator = Estimator::new(task.as_ref(), spec, &book)?;
            Ok(converge(&estimator, &cfg.criterion))
        })
        .collect::<Result<Vec<VarianceReport>>>()?;

    let baseline_points: Vec<(f64, f64)> = jobs
        .iter()
        .zip(&reports)
        .filter(|((m, c), _)| *m == Method::Uniform && c.renoise == 1)
        .map(|(_, r)| (r.wall_cost, r.trace_cov))
        .collect();
    if baseline_points.is_empty() {
        return Err(Error::Config("sweep needs uniform cells with K = 1 for the baseline curve".into()));
    }
    let curve = pareto_baseline(&baseline_points)?;
    let uniform_var = |cell: &CellSeed| {
        jobs.iter()
            .zip(&reports)
            .find(|((m, c), _)| *m == Method::Uniform && c.index == cell.index)
            .map(|(_, r)| r.trace_cov)
    };

    let rows = jobs
        .iter()
        .zip(&reports)
        .map(|(&(method, cell), r)| {
            let ecm = match ecm_with((r.wall_cost, r.trace_cov), &curve, cfg.extrapolate) {
                Ok(v) => Some(v),
                Err(e) => {
                    log::warn!("{} R={} K={}: ECM unavailable ({e})", method.as_str(), cell.renders, cell.renoise);
                    None
                }
            };
            let re = uniform_var(cell).and_then(|vu| relative_efficiency(vu, r.trace_cov).ok());
            SweepRow {
                method,
                renders: cell.renders,
                renoise: cell.renoise,
                cost: r.wall_cost,
                variance: r.trace_cov,
                ecm,
                re,
                samples: r.samples,
                converged_at: r.converged_at,
            }
        })
        .collect();
    let manifest = SweepManifest {
        task: cfg.task.clone(),
        seed: cfg.seed,
        methods,
        cells: seeds,
        criterion: cfg.criterion,
        cost: cfg.cost.clone(),
        proposal,
        baseline: BASELINE_ANCHOR.into(),
        extrapolate: cfg.extrapolate,
    };
    Ok((rows, manifest))
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.method.as_str(),
            r.renders,
            r.renoise,
            fmt_sig(r.cost),
            fmt_sig(r.variance),
            opt_sig(r.ecm),
            opt_sig(r.re)
        );
    }
    s
}

/// `sweep.csv` (or `sweep.json`) plus `manifest.json`.
pub fn cmd_sweep(cfg: &ExperimentConfig, format: Format) -> Result<Vec<PathBuf>> {
    let (rows, manifest) = sweep_rows(cfg)?;
    let mut out = Outputs::new(&cfg.out);
    match format {
        Format::Csv => out.add("sweep.csv", sweep_csv(&rows)),
        Format::Json => out.add("sweep.json", to_json(&rows)?),
    }
    out.add("manifest.json", to_json(&manifest)?);
    out.commit()
}

// ---------------------------------------------------------------------------
// pairprob

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub kind: PairKind,
    #[serde(rename = "N")]
    pub n: usize,
    pub marginals: Option<Vec<f64>>,
    pub variance: Option<f64>,
    pub ecm_vs_iid: Option<f64>,
    /// 1 = lowest variance among the kinds that succeeded.
    pub rank: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTable {
    pub instance: u64,
    /// Kinds sorted by variance, lowest first.
    pub ordering: String,
    /// Var(sinkhorn) <= Var(iw_strat) <= Var(iid).
    pub ordering_holds: bool,
    pub rows: Vec<PairRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub instances: u64,
    pub ordering_holds: u64,
    pub sinkhorn_failures: u64,
    pub sinkhorn: SinkhornParams,
}

pub fn pair_table(index: u64, inst: &PairInstance, params: &SinkhornParams) -> PairTable {
    let mut rows: Vec<PairRow> = compare_designs(inst, params)
        .into_iter()
        .map(|(kind, res)| match res {
            Ok(r) => PairRow {
                kind,
                n: r.n,
                marginals: Some(r.marginals),
                variance: Some(r.variance),
                ecm_vs_iid: r.ecm_vs_iid,
                rank: None,
                error: None,
            },
            Err(e) => PairRow {
                kind,
                n: inst.len(),
                marginals: None,
                variance: None,
                ecm_vs_iid: None,
                rank: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let mut order: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].variance.is_some()).collect();
    // stable sort keeps the kind order for ties
    order.sort_by(|&a, &b| rows[a].variance.unwrap().total_cmp(&rows[b].variance.unwrap()));
    for (rank, &i) in order.iter().enumerate() {
        rows[i].rank = Some(rank + 1);
    }
    let ordering = order.iter().map(|&i| rows[i].kind.as_str()).collect::<Vec<_>>().join("<");
    let var = |k: PairKind| rows.iter().find(|r| r.kind == k).and_then(|r| r.variance);
    let ordering_holds = match (var(PairKind::Sinkhorn), var(PairKind::IwStrat), var(PairKind::Iid)) {
        (Some(s), Some(w), Some(d)) => s <= w && w <= d,
        _ => false,
    };
    PairTable { instance: index, ordering, ordering_holds, rows }
}

fn matrix_csv(n: usize, dense: &[f64]) -> String {
    let mut s = String::new();
    for row in dense.chunks(n) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

/// Per-kind variance tables (`pairprob.csv` or `pairprob.json`), a summary,
/// and optional dense matrix dumps.
pub fn cmd_pairprob(cfg: &ExperimentConfig, format: Format) -> Result<Vec<PathBuf>> {
    let pc = &cfg.pairprob;
    let instances: Vec<(u64, PairInstance)> = match &pc.instance_file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let inst: PairInstance = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            inst.validate().map_err(config)?;
            vec![(0, inst)]
        }
        None => {
            if pc.instances == 0 {
                return Err(Error::Config("pairprob.instances must be positive".into()));
            }
            (0..pc.instances)
                .map(|i| pc.family.instance(cfg.seed, i).map(|inst| (i, inst)))
                .collect::<Result<_>>()
                .map_err(config)?
        }
    };
    let tables: Vec<PairTable> = instances.par_iter().map(|(i, inst)| pair_table(*i, inst, &pc.sinkhorn)).collect();

    let mut out = Outputs::new(&cfg.out);
    match format {
        Format::Csv => {
            let mut s = String::from("instance,kind,N,variance,ecm_vs_iid,rank,error\n");
            for t in &tables {
                for r in &t.rows {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{},{}",
                        t.instance,
                        r.kind.as_str(),
                        r.n,
                        opt_sig(r.variance),
                        opt_sig(r.ecm_vs_iid),
                        r.rank.map(|v| v.to_string()).unwrap_or_default(),
                        r.error.as_deref().unwrap_or("").replace(',', ";")
                    );
                }
            }
            out.add("pairprob.csv", s);
        }
        Format::Json => out.add("pairprob.json", to_json(&tables)?),
    }
    let summary = PairSummary {
        instances: tables.len() as u64,
        ordering_holds: tables.iter().filter(|t| t.ordering_holds).count() as u64,
        sinkhorn_failures: tables
            .iter()
            .filter(|t| t.rows.iter().any(|r| r.kind == PairKind::Sinkhorn && r.error.is_some()))
            .count() as u64,
        sinkhorn: pc.sinkhorn,
    };
    out.add("pairprob_summary.json", to_json(&summary)?);
    if pc.dump_matrices {
        for (i, inst) in &instances {
            for kind in PairKind::ALL {
                let q = match kind {
                    PairKind::Sinkhorn => crate::pairprob::sinkhorn_optimal(inst, &pc.sinkhorn),
                    _ => build_pair_matrix(kind, inst),
                };
                if let Ok(q) = q {
                    out.add(format!("matrix_{i}_{}.csv", kind.as_str()), matrix_csv(q.n(), q.dense()));
                }
            }
        }
    }
    out.commit()
}

// ---------------------------------------------------------------------------
// attribution

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionEntry {
    pub budget: usize,
    pub scheme: Scheme,
    pub trials: u64,
    pub mean_correlation: f64,
    pub std_correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionSummary {
    pub seed: u64,
    pub field: FieldParams,
    pub reference_budget: usize,
    pub coefficient: Coefficient,
    pub reference_scores: Vec<f64>,
    pub entries: Vec<AttributionEntry>,
}

/// Influence scores for every budget × scheme × trial (`influence.csv` or
/// `influence.json`) and the correlation summary `attribution_summary.json`.
pub fn cmd_attribution(cfg: &ExperimentConfig, format: Format) -> Result<Vec<PathBuf>> {
    let ac = &cfg.attribution;
    if ac.budgets.is_empty() || ac.budgets.contains(&0) || ac.trials == 0 || ac.reference_budget == 0 {
        return Err(Error::Config("attribution needs positive budgets, trials and reference_budget".into()));
    }
    let field = GradientField::random(&ac.field, cfg.seed).map_err(config)?;
    let params = ExperimentParams { seed: cfg.seed, reference_budget: ac.reference_budget, coefficient: ac.coefficient };
    let reference = reference_scores(&field, &params)?;
    let mut entries = Vec::new();
    let mut runs = Vec::new();
    for &budget in &ac.budgets {
        for scheme in [Scheme::Iid, Scheme::StratGlobal] {
            let run = attribution_against(&field, &reference, budget, scheme, ac.trials, &params)?;
            let n = run.reports.len() as f64;
            let var = run.reports.iter().map(|r| (r.correlation_to_reference - run.mean_correlation).powi(2)).sum::<f64>()
                / (n - 1.0).max(1.0);
            entries.push(AttributionEntry {
                budget,
                scheme,
                trials: ac.trials,
                mean_correlation: run.mean_correlation,
                std_correlation: var.sqrt(),
            });
            runs.push(run);
        }
    }
    let mut out = Outputs::new(&cfg.out);
    match format {
        Format::Csv => {
            let mut s = String::from("example_id,score,budget,scheme,trial\n");
            for report in runs.iter().flat_map(|r| &r.reports) {
                for (id, score) in report.scores.iter().enumerate() {
                    let _ = writeln!(s, "{id},{},{},{},{}", fmt_sig(*score), report.budget, report.scheme, report.trial);
                }
            }
            out.add("influence.csv", s);
        }
        Format::Json => {
            let reports: Vec<_> = runs.iter().flat_map(|r| &r.reports).collect();
            out.add("influence.json", to_json(&reports)?);
        }
    }
    let summary = AttributionSummary {
        seed: cfg.seed,
        field: ac.field,
        reference_budget: ac.reference_budget,
        coefficient: ac.coefficient,
        reference_scores: reference,
        entries,
    };
    out.add("attribution_summary.json", to_json(&summary)?);
    out.commit()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(334.7123456), "334.712");
        assert_eq!(fmt_sig(0.15625), "0.15625");
        assert_eq!(fmt_sig(1.234567e-7), "1.23457e-07");
        assert_eq!(fmt_sig(2.21e6), "2.21e+06");
        assert_eq!(fmt_sig(999999.7), "1e+06");
        assert_eq!(fmt_sig(-0.5), "-0.5");
    }

    #[test]
    fn default_grid_enumeration() {
        let cfg = ExperimentConfig::default();
        let cells = cfg.cells().unwrap();
        assert_eq!(cells.len(), 21);
        assert!(cells.iter().all(|&(r, k)| r * k <= 32));
    }

    #[test]
    fn config_errors() {
        let empty = ExperimentConfig::from_toml("grid = []").unwrap();
        assert!(matches!(empty.validate(), Err(Error::Config(_))));
        let unknown = ExperimentConfig::from_toml("task = \"nope{}\"").unwrap();
        assert!(matches!(unknown.validate(), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml("bogus = 1"), Err(Error::Config(_))));
        let too_big = ExperimentConfig::from_toml("grid = [[8, 8]]").unwrap();
        assert!(too_big.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            task = "toy{rho=0.1}"
            seed = 7
            methods = ["uniform", "iw+strat"]
            grid = [[1, 1], [2, 4]]
            [cost.parametric]
            alpha = 100.0
            [criterion]
            cap = 2000
            [run]
            method = "iw"
            R = 2
            K = 4
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.methods, vec![Method::Uniform, Method::IwStrat]);
        assert_eq!(cfg.cost, CostModel::Parametric { alpha: 100.0 });
        assert_eq!(cfg.criterion.cap, 2000);
        assert_eq!(cfg.criterion.warmup, 1000);
        assert_eq!(cfg.run.renoise, 4);
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::SinkhornNonConvergence { iters: 1, residual: 1.0 }), EXIT_NUMERICAL);
    }
}
