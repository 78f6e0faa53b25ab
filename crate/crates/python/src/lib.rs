//! Python bindings for the `mcvr` toolkit.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use mcvr::attribution::{self, Coefficient, ExperimentParams, FieldParams, GradientField, Scheme};
use mcvr::efficiency;
use mcvr::estimators::{self, Allocation, EstimatorSpec, ProposalBook, TimestepMode};
use mcvr::pairprob::{self, PairInstance, PairKind, PairMatrix, SinkhornParams};
use mcvr::sampling::{self, BaseDistribution, ProposalDoc, DEFAULT_GRID};
use mcvr::testbed::{oracle_proposal, Task, TaskSpec};
use mcvr::variance_lab::{self, ConvergenceCriterion};
use mcvr::{rng, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::Json(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => u.into_pyobject(py)?.into_any(),
            (None, Some(i)) => i.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => {
            let items = a.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn serde_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &v)
}

/// Tabulated timestep proposal on a uniform base.
#[pyclass(name = "Proposal", module = "pymcvr", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyProposal {
    inner: sampling::Proposal,
}

#[pymethods]
impl PyProposal {
    /// Build q ∝ p·w from a Python callable `weight(t) -> float`.
    #[staticmethod]
    #[pyo3(signature = (t_min, t_max, weight, grid = DEFAULT_GRID, floor_mix = 0.0))]
    fn build(t_min: f64, t_max: f64, weight: Bound<'_, PyAny>, grid: usize, floor_mix: f64) -> PyResult<Self> {
        let base = BaseDistribution::uniform(t_min, t_max).map_err(py_err)?;
        let failure = std::cell::RefCell::new(None);
        let inner = sampling::build_proposal(
            base,
            |t| match weight.call1((t,)).and_then(|r| r.extract::<f64>()) {
                Ok(v) => v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            },
            grid,
            floor_mix,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        Ok(Self { inner: inner.map_err(py_err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (t_min = 0.0, t_max = 1.0))]
    fn uniform(t_min: f64, t_max: f64) -> PyResult<Self> {
        let base = BaseDistribution::uniform(t_min, t_max).map_err(py_err)?;
        Ok(Self { inner: sampling::Proposal::flat(base) })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let doc: ProposalDoc = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner: sampling::Proposal::from_doc(&doc).map_err(py_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.to_doc()).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn density(&self, t: f64) -> f64 {
        self.inner.density(t)
    }

    fn cdf(&self, t: f64) -> f64 {
        self.inner.cdf(t)
    }

    fn inverse_cdf(&self, u: f64) -> PyResult<f64> {
        self.inner.inverse_cdf(u).map_err(py_err)
    }

    fn importance_weight(&self, t: f64) -> PyResult<f64> {
        self.inner.importance_weight(t).map_err(py_err)
    }

    #[getter]
    fn is_flat(&self) -> bool {
        self.inner.is_flat()
    }

    fn __repr__(&self) -> String {
        let b = self.inner.base();
        format!("Proposal(t_min={}, t_max={}, flat={})", b.t_min(), b.t_max(), self.inner.is_flat())
    }
}

/// Online mean and trace covariance of vector samples.
#[pyclass(name = "Welford", module = "pymcvr", skip_from_py_object)]
#[derive(Clone, Default)]
struct PyWelford {
    inner: variance_lab::WelfordState,
}

#[pymethods]
impl PyWelford {
    #[new]
    fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, x: Vec<f64>) -> PyResult<()> {
        self.inner.push(&x).map_err(py_err)
    }

    fn merge(&self, other: &PyWelford) -> PyResult<PyWelford> {
        Ok(PyWelford { inner: variance_lab::welford_merge(&self.inner, &other.inner).map_err(py_err)? })
    }

    #[getter]
    fn count(&self) -> u64 {
        self.inner.count
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.mean.clone()
    }

    /// Unbiased trace covariance; `None` below two samples.
    #[getter]
    fn trace_cov(&self) -> Option<f64> {
        self.inner.trace_cov()
    }
}

#[pyfunction]
#[pyo3(signature = (m, seed = 0))]
fn stratified_quantiles(m: usize, seed: u64) -> PyResult<Vec<f64>> {
    let mut r = rng::stream(seed, &[rng::tag::AUX]);
    Ok(sampling::stratified_quantiles(m, &mut r).map_err(py_err)?.u_values)
}

#[pyfunction]
fn snap_to_grid(t: f64, steps: usize) -> usize {
    sampling::snap_to_grid(t, steps)
}

/// ECM of `method = (cost, variance)` against baseline `(cost, variance)` points.
#[pyfunction]
#[pyo3(signature = (method, baseline, extrapolate = true))]
fn ecm(method: (f64, f64), baseline: Vec<(f64, f64)>, extrapolate: bool) -> PyResult<f64> {
    let curve = efficiency::pareto_baseline(&baseline).map_err(py_err)?;
    efficiency::ecm_with(method, &curve, extrapolate).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (variance, baseline, extrapolate = true))]
fn baseline_cost(variance: f64, baseline: Vec<(f64, f64)>, extrapolate: bool) -> PyResult<f64> {
    let curve = efficiency::pareto_baseline(&baseline).map_err(py_err)?;
    curve.cost_at_variance(variance, extrapolate).map_err(py_err)
}

#[pyfunction]
fn pareto_front(points: Vec<(f64, f64)>) -> PyResult<Vec<(f64, f64)>> {
    Ok(efficiency::pareto_baseline(&points).map_err(py_err)?.points().to_vec())
}

#[pyfunction]
fn relative_efficiency(var_uniform: f64, var_method: f64) -> PyResult<f64> {
    efficiency::relative_efficiency(var_uniform, var_method).map_err(py_err)
}

fn pair_instance(y: Vec<Vec<f64>>, timesteps: Vec<f64>, weights: Vec<f64>) -> PyResult<PairInstance> {
    PairInstance::new(y, timesteps, weights).map_err(py_err)
}

fn pair_kind(kind: &str) -> PyResult<PairKind> {
    kind.parse().map_err(py_err)
}

fn pair_matrix_for(kind: PairKind, inst: &PairInstance, beta: f64) -> PyResult<PairMatrix> {
    match kind {
        PairKind::Sinkhorn => {
            let params = SinkhornParams { beta, ..SinkhornParams::default() };
            pairprob::sinkhorn_optimal(inst, &params).map_err(py_err)
        }
        _ => pairprob::build_pair_matrix(kind, inst).map_err(py_err),
    }
}

/// Dense N×N pair-probability matrix of one design.
#[pyfunction]
#[pyo3(signature = (kind, y, timesteps, weights, beta = SinkhornParams::default().beta))]
fn pair_matrix(kind: &str, y: Vec<Vec<f64>>, timesteps: Vec<f64>, weights: Vec<f64>, beta: f64) -> PyResult<Vec<Vec<f64>>> {
    let inst = pair_instance(y, timesteps, weights)?;
    let q = pair_matrix_for(pair_kind(kind)?, &inst, beta)?;
    Ok(q.dense().chunks(q.n()).map(|r| r.to_vec()).collect())
}

/// Closed-form Horvitz-Thompson variance of one design.
#[pyfunction]
#[pyo3(signature = (kind, y, timesteps, weights, beta = SinkhornParams::default().beta))]
fn pair_variance(kind: &str, y: Vec<Vec<f64>>, timesteps: Vec<f64>, weights: Vec<f64>, beta: f64) -> PyResult<f64> {
    let inst = pair_instance(y, timesteps, weights)?;
    let q = pair_matrix_for(pair_kind(kind)?, &inst, beta)?;
    pairprob::ht_variance(&inst, &q).map_err(py_err)
}

/// Per-design report (`kind`, `N`, `marginals`, `variance`, `ecm_vs_iid`) or error string.
#[pyfunction]
#[pyo3(signature = (y, timesteps, weights, beta = SinkhornParams::default().beta))]
fn compare_pair_designs<'py>(
    py: Python<'py>,
    y: Vec<Vec<f64>>,
    timesteps: Vec<f64>,
    weights: Vec<f64>,
    beta: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let inst = pair_instance(y, timesteps, weights)?;
    let params = SinkhornParams { beta, ..SinkhornParams::default() };
    let out = PyDict::new(py);
    for (kind, res) in pairprob::compare_designs(&inst, &params) {
        match res {
            Ok(r) => out.set_item(kind.as_str(), serde_to_py(py, &r)?)?,
            Err(e) => out.set_item(kind.as_str(), e.to_string())?,
        }
    }
    Ok(out)
}

fn task_and_book(task: &str, mode: &str, seed: u64) -> PyResult<(Box<dyn Task>, ProposalBook, TimestepMode)> {
    let task = TaskSpec::parse(task).and_then(|s| s.build(Default::default())).map_err(py_err)?;
    let mut book = ProposalBook::for_task(task.as_ref()).map_err(py_err)?;
    let mode = match mode {
        "base" | "uniform" => TimestepMode::Base,
        "oracle" => {
            let q = oracle_proposal(task.as_ref(), 64, 10_000, rng::child_seed(seed, &[rng::tag::ORACLE])).map_err(py_err)?;
            book.insert("oracle", q);
            TimestepMode::Proposal("oracle".into())
        }
        name => TimestepMode::Proposal(name.to_string()),
    };
    Ok((task, book, mode))
}

fn allocation(name: &str) -> PyResult<Allocation> {
    match name {
        "iid" => Ok(Allocation::Iid),
        "strat_per_render" => Ok(Allocation::StratPerRender),
        "strat_global" => Ok(Allocation::StratGlobal),
        _ => Err(PyValueError::new_err(format!("unknown allocation `{name}`"))),
    }
}

/// One gradient estimate for a task string such as `"toy{rho=0.1}"`.
///
/// `mode` is `"base"`, `"heuristic"` or `"oracle"`.
#[pyfunction]
#[pyo3(signature = (task, renders = 1, renoise = 1, mode = "base", allocation = "iid", seed = 0, trial = 0))]
fn run_estimator(
    task: &str,
    renders: usize,
    renoise: usize,
    mode: &str,
    allocation: &str,
    seed: u64,
    trial: u64,
) -> PyResult<Vec<f64>> {
    let (task, book, mode) = task_and_book(task, mode, seed)?;
    let spec = EstimatorSpec::new(renders, renoise, mode, self::allocation(allocation)?, seed);
    let est = estimators::Estimator::new(task.as_ref(), spec, &book).map_err(py_err)?;
    Ok(est.estimate(trial).value)
}

/// Variance report dict (`mean`, `trace_cov`, `samples`, `converged_at`, `wall_cost`).
#[pyfunction]
#[pyo3(signature = (task, renders = 1, renoise = 1, mode = "base", allocation = "iid", seed = 0, cap = 20_000))]
#[allow(clippy::too_many_arguments)]
fn run_until_converged<'py>(
    py: Python<'py>,
    task: &str,
    renders: usize,
    renoise: usize,
    mode: &str,
    allocation: &str,
    seed: u64,
    cap: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let (task, book, mode) = task_and_book(task, mode, seed)?;
    let spec = EstimatorSpec::new(renders, renoise, mode, self::allocation(allocation)?, seed);
    let criterion = ConvergenceCriterion { cap, ..Default::default() };
    let report = py
        .detach(|| variance_lab::run_until_converged(task.as_ref(), &spec, &book, &criterion))
        .map_err(py_err)?;
    serde_to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (scores, reference, spearman = false))]
fn ranking_correlation(scores: Vec<f64>, reference: Vec<f64>, spearman: bool) -> PyResult<f64> {
    let c = if spearman { Coefficient::Spearman } else { Coefficient::Pearson };
    attribution::ranking_correlation(&scores, &reference, c).map_err(py_err)
}

/// Mean correlation to the reference ranking on the default random field.
#[pyfunction]
#[pyo3(signature = (budget, scheme = "strat_global", trials = 100, seed = 0, n_examples = 32, dim = 16, noise = 0.3))]
#[allow(clippy::too_many_arguments)]
fn attribution_experiment<'py>(
    py: Python<'py>,
    budget: usize,
    scheme: &str,
    trials: u64,
    seed: u64,
    n_examples: usize,
    dim: usize,
    noise: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let scheme: Scheme = scheme.parse().map_err(py_err)?;
    let field_params = FieldParams { n_examples, dim, noise, ..FieldParams::default() };
    let field = GradientField::random(&field_params, seed).map_err(py_err)?;
    let params = ExperimentParams { seed, ..ExperimentParams::default() };
    let run = py
        .detach(|| attribution::attribution_experiment(&field, budget, scheme, trials, &params))
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("mean_correlation", run.mean_correlation)?;
    let corr: Vec<f64> = run.reports.iter().map(|r| r.correlation_to_reference).collect();
    out.set_item("correlations", corr)?;
    out.set_item("scores", run.reports.iter().map(|r| r.scores.clone()).collect::<Vec<_>>())?;
    Ok(out)
}

#[pymodule]
fn pymcvr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProposal>()?;
    m.add_class::<PyWelford>()?;
    m.add_function(wrap_pyfunction!(stratified_quantiles, m)?)?;
    m.add_function(wrap_pyfunction!(snap_to_grid, m)?)?;
    m.add_function(wrap_pyfunction!(ecm, m)?)?;
    m.add_function(wrap_pyfunction!(baseline_cost, m)?)?;
    m.add_function(wrap_pyfunction!(pareto_front, m)?)?;
    m.add_function(wrap_pyfunction!(relative_efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(pair_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(pair_variance, m)?)?;
    m.add_function(wrap_pyfunction!(compare_pair_designs, m)?)?;
    m.add_function(wrap_pyfunction!(run_estimator, m)?)?;
    m.add_function(wrap_pyfunction!(run_until_converged, m)?)?;
    m.add_function(wrap_pyfunction!(ranking_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(attribution_experiment, m)?)?;
    Ok(())
}
