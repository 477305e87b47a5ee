//! Python bindings: model parameters, the three solvers, the Monte Carlo
//! estimators and the config-driven task runner.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use creditline::config::{RawConfig, RunConfig};
use creditline::free_boundary::{solve_no_investment as solve_1d, ValueFunction1D as Vf1d};
use creditline::hjb::{
    default_extent, extract_policy, solve_hjb as solve_2d, Grid2D, HJBSolution, HjbMode, HjbOptions, Label, Policy2D,
};
use creditline::mc::{self, BoundedDiffusion, McMethod, SimSpec};
use creditline::tasks::{self, TaskError};
use creditline::zero_cost::{self, ZeroCostOptions, ZeroCostSolution as Zcs};

create_exception!(creditline_py, SolverError, PyException);
create_exception!(creditline_py, ValidationError, PyException);

fn solver_err(e: creditline::Error) -> PyErr {
    match e {
        creditline::Error::InvalidParams(_) | creditline::Error::Domain(_) => PyValueError::new_err(e.to_string()),
        _ => SolverError::new_err(e.to_string()),
    }
}

#[pyclass(name = "ModelParams", frozen, from_py_object)]
#[derive(Clone)]
struct PyModelParams {
    inner: creditline::ModelParams,
}

#[pymethods]
impl PyModelParams {
    /// Fixed-size firm with linear spread `lambda`.
    #[staticmethod]
    fn fixed_size(mu: f64, sigma: f64, r: f64, lam: f64) -> Self {
        PyModelParams { inner: creditline::ModelParams::fixed_size(mu, sigma, r, lam) }
    }

    /// Investment model with exponential productivity and adjustment cost `gamma`.
    #[staticmethod]
    #[pyo3(signature = (mu, sigma, r, lam, beta_max, beta_prime0, gamma = 0.0))]
    fn with_investment(mu: f64, sigma: f64, r: f64, lam: f64, beta_max: f64, beta_prime0: f64, gamma: f64) -> Self {
        PyModelParams {
            inner: creditline::ModelParams::with_investment(mu, sigma, r, lam, beta_max, beta_prime0, gamma),
        }
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }

    #[getter]
    fn r(&self) -> f64 {
        self.inner.r
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn has_investment(&self) -> bool {
        self.inner.beta.is_some()
    }

    /// Constraint violations as strings; empty when the parameters are usable.
    fn violations(&self) -> Vec<String> {
        creditline::validate(&self.inner).violations.iter().map(|v| format!("{}: {}", v.field, v.message)).collect()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

#[pyclass(name = "ValueFunction1D", frozen)]
struct PyValueFunction1D {
    inner: Vf1d,
}

#[pymethods]
impl PyValueFunction1D {
    #[getter]
    fn regime(&self) -> &'static str {
        self.inner.regime.tag()
    }

    #[getter]
    fn a(&self) -> f64 {
        self.inner.a
    }

    #[getter]
    fn b(&self) -> f64 {
        self.inner.b
    }

    fn value(&self, x: f64) -> PyResult<f64> {
        self.inner.value(x).map_err(solver_err)
    }

    /// `(v, v', v'')` at `x`.
    fn eval(&self, x: f64) -> PyResult<(f64, f64, f64)> {
        self.inner.eval(x).map_err(solver_err)
    }

    fn value_at_b(&self) -> f64 {
        self.inner.value_at_b()
    }
}

#[pyclass(name = "ZeroCostSolution", frozen)]
struct PyZeroCostSolution {
    inner: Zcs,
}

#[pymethods]
impl PyZeroCostSolution {
    #[getter]
    fn case(&self) -> &'static str {
        self.inner.case.tag()
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta_exp
    }

    #[getter]
    fn a(&self) -> f64 {
        self.inner.a
    }

    #[getter]
    fn b(&self) -> f64 {
        self.inner.b
    }

    #[getter]
    fn debt_cost_assumption_holds(&self) -> bool {
        self.inner.debt_cost_assumption_holds
    }

    /// `(v, v', v'')` at `x`.
    fn value(&self, x: f64) -> PyResult<(f64, f64, f64)> {
        self.inner.value(x).map_err(solver_err)
    }

    fn value_at_b(&self) -> f64 {
        self.inner.value_at_b()
    }

    /// Optimal capital at cash level `x`.
    fn k_rule(&self, x: f64) -> PyResult<f64> {
        self.inner.k_rule(x).map_err(solver_err)
    }
}

#[pyclass(name = "HJBSolution", frozen)]
struct PyHjbSolution {
    inner: HJBSolution,
    policy: Policy2D,
}

#[pymethods]
impl PyHjbSolution {
    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    /// `(nx, nk, h)`.
    #[getter]
    fn grid(&self) -> (usize, usize, f64) {
        (self.inner.grid.nx, self.inner.grid.nk, self.inner.grid.h)
    }

    /// Bilinear interpolation of the value.
    fn value_at(&self, x: f64, k: f64) -> f64 {
        self.inner.value_at(x, k)
    }

    /// Policy label at the node nearest to `(x, k)`.
    fn label_at(&self, x: f64, k: f64) -> &'static str {
        self.policy.label_at(x, k).tag()
    }

    /// Node count per policy label.
    fn label_counts(&self) -> Vec<(&'static str, usize)> {
        Label::ACTIVE.iter().map(|&l| (l.tag(), self.policy.count(l))).collect()
    }

    /// Discounted dividends of the extracted policy from `(x, k)`, as `(mean, std_error)`.
    #[pyo3(signature = (x, k, n_paths = 2000, dt = 2e-2, seed = 1, horizon = 1000.0))]
    #[allow(clippy::too_many_arguments)]
    fn simulate(
        &self,
        py: Python<'_>,
        x: f64,
        k: f64,
        n_paths: usize,
        dt: f64,
        seed: u64,
        horizon: f64,
    ) -> PyResult<(f64, f64)> {
        let spec = SimSpec { dt, n_paths, seed, horizon, ..SimSpec::default() };
        let e = py
            .detach(|| mc::simulate_2d_policy(self.inner.params(), &self.policy, (x, k), &spec))
            .map_err(solver_err)?;
        Ok((e.mean, e.std_error))
    }
}

#[pyfunction]
fn solve_no_investment(py: Python<'_>, params: PyModelParams) -> PyResult<PyValueFunction1D> {
    let inner = py.detach(|| solve_1d(&params.inner)).map_err(solver_err)?;
    Ok(PyValueFunction1D { inner })
}

/// Frictionless investment model. `relaxed` also runs the construction when
/// debt is cheaper than the marginal product at zero capital.
#[pyfunction]
#[pyo3(signature = (params, relaxed = false))]
fn solve_zero_cost(py: Python<'_>, params: PyModelParams, relaxed: bool) -> PyResult<PyZeroCostSolution> {
    let inner = py
        .detach(|| {
            if relaxed {
                zero_cost::solve_zero_cost_relaxed(&params.inner, &ZeroCostOptions::default())
            } else {
                zero_cost::solve_zero_cost(&params.inner)
            }
        })
        .map_err(solver_err)?;
    Ok(PyZeroCostSolution { inner })
}

/// Two-dimensional problem on an `n x n` grid. `extent` defaults to the
/// solver's own estimate; `degenerate` freezes capital and productivity.
#[pyfunction]
#[pyo3(signature = (params, n = 128, extent = None, degenerate = false))]
fn solve_hjb(
    py: Python<'_>,
    params: PyModelParams,
    n: usize,
    extent: Option<f64>,
    degenerate: bool,
) -> PyResult<PyHjbSolution> {
    let p = params.inner;
    let (inner, policy) = py
        .detach(|| {
            let extent = match extent {
                Some(e) => e,
                None => {
                    let (xe, ke) = default_extent(&p)?;
                    xe.max(ke)
                }
            };
            let grid = Grid2D::square(p.gamma, extent, n)?;
            let mode = if degenerate { HjbMode::Degenerate } else { HjbMode::Full };
            let sol = solve_2d(&p, &grid, &HjbOptions { mode, ..HjbOptions::default() })?;
            let policy = extract_policy(&sol);
            Ok::<_, creditline::Error>((sol, policy))
        })
        .map_err(solver_err)?;
    Ok(PyHjbSolution { inner, policy })
}

/// Barrier policy `(a, b)` of the fixed-size firm from `x0`, as `(mean, std_error)`.
#[pyfunction]
#[pyo3(signature = (params, a, b, x0, n_paths = 100_000, dt = 1e-3, seed = 20240917, horizon = 1000.0, antithetic = true))]
#[allow(clippy::too_many_arguments)]
fn simulate_1d_policy(
    py: Python<'_>,
    params: PyModelParams,
    a: f64,
    b: f64,
    x0: f64,
    n_paths: usize,
    dt: f64,
    seed: u64,
    horizon: f64,
    antithetic: bool,
) -> PyResult<(f64, f64)> {
    let spec = SimSpec { dt, n_paths, seed, horizon, antithetic, method: McMethod::Regenerative, ..SimSpec::default() };
    let e = py.detach(|| mc::simulate_1d_policy(&params.inner, a, b, x0, &spec)).map_err(solver_err)?;
    Ok((e.mean, e.std_error))
}

/// `E[exp(-r tau_b)]` for a diffusion with constant drift, as `(mean, std_error)`.
#[pyfunction]
#[pyo3(signature = (drift, sigma, r, x0, target, n_paths = 40_000, dt = 1e-3, seed = 20240917))]
#[allow(clippy::too_many_arguments)]
fn laplace_hitting(
    py: Python<'_>,
    drift: f64,
    sigma: f64,
    r: f64,
    x0: f64,
    target: f64,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let spec = SimSpec { dt, n_paths, seed, ..SimSpec::default() };
    let process = BoundedDiffusion::constant(drift, sigma, r);
    let e = py.detach(|| mc::laplace_hitting(&process, x0, target, &spec)).map_err(solver_err)?;
    Ok((e.mean, e.std_error))
}

/// Runs a task from config text (the CLI's file format) and returns the
/// manifest facts. `out_dir` overrides `output.dir`.
#[pyfunction]
#[pyo3(signature = (config, out_dir = None))]
fn run_task(py: Python<'_>, config: &str, out_dir: Option<PathBuf>) -> PyResult<Vec<(String, String)>> {
    let mut raw = RawConfig::parse(config).map_err(|e| PyValueError::new_err(e.to_string()))?;
    if let Some(dir) = &out_dir {
        raw.set("output.dir", dir.to_string_lossy());
    }
    let cfg = RunConfig::from_raw(&raw).map_err(|e| PyValueError::new_err(e.to_string()))?;
    match py.detach(|| tasks::run(&cfg)) {
        Ok(m) => Ok(m.facts),
        Err(e @ TaskError::Validation(_)) => Err(ValidationError::new_err(e.to_string())),
        Err(e) => Err(SolverError::new_err(e.to_string())),
    }
}

#[pymodule]
fn creditline_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyValueFunction1D>()?;
    m.add_class::<PyZeroCostSolution>()?;
    m.add_class::<PyHjbSolution>()?;
    m.add_function(wrap_pyfunction!(solve_no_investment, m)?)?;
    m.add_function(wrap_pyfunction!(solve_zero_cost, m)?)?;
    m.add_function(wrap_pyfunction!(solve_hjb, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_1d_policy, m)?)?;
    m.add_function(wrap_pyfunction!(laplace_hitting, m)?)?;
    m.add_function(wrap_pyfunction!(run_task, m)?)?;
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    m.add("ValidationError", m.py().get_type::<ValidationError>())?;
    Ok(())
}
