use std::path::PathBuf;

use degsde::bismut::{self, Component};
use degsde::error::Error;
use degsde::linalg::{self, Mat};
use degsde::linear_flow;
use degsde::model::{build_example, DriftFamily, DriftSpec, ExampleKind, ExampleParams, SpectralModel};
use degsde::observable::Observable;
use degsde::regularization::{self, FieldGrid, GridSpec};
use degsde::scenario::{self, ScenarioConfig};
use degsde::sde::{self, Noise};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(degsde, DegsdeError, PyException);
create_exception!(degsde, ConfigError, DegsdeError);
create_exception!(degsde, HypothesisError, DegsdeError);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config { .. } => ConfigError::new_err(e.to_string()),
        Error::HypothesisViolation { .. } => HypothesisError::new_err(e.to_string()),
        _ => DegsdeError::new_err(e.to_string()),
    }
}

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn drift_family(json: &str) -> PyResult<DriftFamily> {
    serde_json::from_str(json).map_err(|e| ConfigError::new_err(format!("drift: {e}")))
}

/// A linear model `dX = (A1 X + A2 Y) dt`, `dY = (A0 X + B Y) dt + σ dW`
/// and its transition laws.
#[pyclass(frozen)]
struct Model {
    inner: SpectralModel,
    kind: ExampleKind,
    params: ExampleParams,
}

#[pymethods]
impl Model {
    /// Scalar kinetic model `dX = Y dt`, `dY = dW`.
    #[staticmethod]
    fn kinetic() -> Self {
        Model { inner: SpectralModel::kinetic_scalar(), kind: ExampleKind::Kinetic, params: ExampleParams::default() }
    }

    /// Galerkin truncation of the stochastic wave equation.
    #[staticmethod]
    #[pyo3(signature = (theta, d_space = 1, n_modes = 16))]
    fn wave(theta: f64, d_space: usize, n_modes: usize) -> PyResult<Self> {
        let params = ExampleParams::wave(theta, d_space, n_modes);
        let (inner, _) = build_example(ExampleKind::Wave, &params, &DriftFamily::Zero).map_err(py_err)?;
        Ok(Model { inner, kind: ExampleKind::Wave, params })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    /// Mean and covariance of `Z_t` given `Z_s = z`.
    fn transition_law(&self, s: f64, t: f64, z: Vec<f64>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let law = linear_flow::transition_law(&self.inner, s, t, &z).map_err(py_err)?;
        Ok((law.mean.iter().copied().collect(), rows(&law.cov)))
    }

    /// Operator norm of the inverse controllability Gramian over `[0, t]`.
    fn gramian_inverse_norm(&self, t: f64) -> PyResult<f64> {
        Ok(linalg::op_norm(&bismut::gramian_q(&self.inner, t).map_err(py_err)?.q_inv))
    }

    /// Hilbert–Schmidt size of the stochastic convolution over `[s, t]` and
    /// the constant `c2` of its power bound.
    fn noise_integral(&self, s: f64, t: f64) -> PyResult<(f64, f64)> {
        let r = linear_flow::hs_noise_integral(&self.inner, s, t).map_err(py_err)?;
        Ok((r.value, r.bound_c2))
    }

    /// Drift of the given family (a JSON object tagged by `family`) for this model.
    fn drift(&self, family_json: &str) -> PyResult<Drift> {
        let family = drift_family(family_json)?;
        let (_, inner) = build_example(self.kind, &self.params, &family).map_err(py_err)?;
        Ok(Drift { inner })
    }

    /// Bismut estimate of `∇_v E f(Z_t)` from `Z_s = z`, as `(value, stderr)`.
    #[pyo3(signature = (observable, z, v, s = 0.0, t = 1.0, n_paths = 100_000, n_steps = 64, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn bismut_gradient(
        &self,
        py: Python<'_>,
        observable: &str,
        z: Vec<f64>,
        v: Vec<f64>,
        s: f64,
        t: f64,
        n_paths: usize,
        n_steps: usize,
        seed: u64,
    ) -> PyResult<(f64, f64)> {
        let f = Observable::parse(observable, self.inner.m(), self.inner.d()).map_err(py_err)?;
        let est = py
            .detach(|| bismut::bismut_gradient(&self.inner, s, t, &f, &z, &v, n_paths, n_steps, seed))
            .map_err(py_err)?;
        Ok((est.value, est.stderr))
    }

    /// Fitted small-gap exponent of the `x` or `y` gradient of a bounded observable.
    #[pyo3(signature = (observable, component, gaps, n_paths = 20_000, n_steps = 16, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn scaling_exponent(
        &self,
        py: Python<'_>,
        observable: &str,
        component: &str,
        gaps: Vec<f64>,
        n_paths: usize,
        n_steps: usize,
        seed: u64,
    ) -> PyResult<f64> {
        let c = match component {
            "x" => Component::X,
            "y" => Component::Y,
            _ => return Err(DegsdeError::new_err("component must be `x` or `y`")),
        };
        let f = Observable::parse(observable, self.inner.m(), self.inner.d()).map_err(py_err)?;
        let r = py.detach(|| bismut::scaling_exponent(&self.inner, &f, c, &gaps, n_paths, n_steps, seed)).map_err(py_err)?;
        Ok(r.slope)
    }

    /// Exponential-Euler trajectory of the nonlinear system as a list of states.
    #[pyo3(signature = (drift, z0, horizon = 1.0, n_steps = 256, seed = 0, path = 0))]
    fn integrate(&self, drift: &Drift, z0: Vec<f64>, horizon: f64, n_steps: usize, seed: u64, path: u64) -> PyResult<Vec<Vec<f64>>> {
        let traj = sde::integrate_mild(&self.inner, &drift.inner, &z0, horizon, n_steps, Noise::Seed { seed, index: path }).map_err(py_err)?;
        Ok((0..traj.len()).map(|i| traj.state(i).to_vec()).collect())
    }

    /// `(n_steps, sup_gap, terminal_gap)` rows for two solutions from `z0` and
    /// a perturbation of size `eps` driven by common noise.
    #[pyo3(signature = (drift, z0, eps, n_steps, horizon = 1.0, seed = 0))]
    fn uniqueness_gaps(
        &self,
        drift: &Drift,
        z0: Vec<f64>,
        eps: f64,
        n_steps: Vec<usize>,
        horizon: f64,
        seed: u64,
    ) -> PyResult<Vec<(usize, f64, Option<f64>)>> {
        let t = sde::uniqueness_experiment(&self.inner, &drift.inner, &z0, eps, horizon, &n_steps, seed).map_err(py_err)?;
        Ok(t.rows.iter().map(|r| (r.n_steps, r.sup_gap, r.terminal_gap)).collect())
    }

    /// Fixed point of the regularizing equation on a uniform box grid.
    #[pyo3(signature = (drift, lam, lo = -4.0, hi = 4.0, nodes = 33, time_nodes = 17, horizon = 1.0, tol = 1e-10, max_iter = 200))]
    #[allow(clippy::too_many_arguments)]
    fn solve_field(
        &self,
        py: Python<'_>,
        drift: &Drift,
        lam: f64,
        lo: f64,
        hi: f64,
        nodes: usize,
        time_nodes: usize,
        horizon: f64,
        tol: f64,
        max_iter: usize,
    ) -> PyResult<Field> {
        let spec = GridSpec::uniform(self.inner.dim(), lo, hi, nodes, time_nodes, horizon);
        let (grid, report) = py
            .detach(|| regularization::picard_solve(&self.inner, &drift.inner, lam, &spec, tol, max_iter))
            .map_err(py_err)?;
        Ok(Field { grid, iterations: report.iterations, converged: report.converged })
    }

    fn __repr__(&self) -> String {
        format!("Model({:?}, dim={})", self.kind, self.inner.dim())
    }
}

#[pyclass(frozen)]
struct Drift {
    inner: DriftSpec,
}

#[pymethods]
impl Drift {
    /// Constant drift `b ≡ c` for a model with `m` position coordinates.
    #[staticmethod]
    fn constant(m: usize, c: Vec<f64>) -> Self {
        Drift { inner: DriftSpec::constant(m, c) }
    }

    fn __call__(&self, t: f64, z: Vec<f64>) -> PyResult<Vec<f64>> {
        if z.len() != self.inner.m + self.inner.d {
            return Err(DegsdeError::new_err(format!("expected a state of length {}", self.inner.m + self.inner.d)));
        }
        Ok(self.inner.eval(t, &z))
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }
}

/// Grid solution `u` of the regularizing equation and the transform
/// `Θ_s(x, y) = (x, y + u_s(x, y))`.
#[pyclass(frozen)]
struct Field {
    grid: FieldGrid,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    converged: bool,
}

#[pymethods]
impl Field {
    fn __call__(&self, s: f64, z: Vec<f64>) -> Vec<f64> {
        self.grid.eval(s, &z)
    }

    /// `y`-Jacobian of `u_s` at `z`.
    fn grad_y(&self, s: f64, z: Vec<f64>) -> Vec<Vec<f64>> {
        rows(&self.grid.interp_grad2(s, &z))
    }

    #[getter]
    fn grad_y_sup(&self) -> f64 {
        self.grid.grad2_sup()
    }

    fn theta(&self, s: f64, z: Vec<f64>) -> Vec<f64> {
        regularization::theta_forward(&self.grid, s, &z)
    }

    fn theta_inverse(&self, s: f64, w: Vec<f64>) -> PyResult<Vec<f64>> {
        regularization::theta_inverse(&self.grid, s, &w).map_err(py_err)
    }
}

/// Upper envelope of `sup |Y - ξ|²` for growth `ell`, at `n_points` times.
#[pyfunction]
#[pyo3(signature = (ell, eta, horizon = 1.0, c_env = 2.0, n_points = 65))]
fn bihari_bound(ell: &Bound<'_, PyAny>, eta: f64, horizon: f64, c_env: f64, n_points: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let failure = std::cell::RefCell::new(None);
    let f = |r: f64| match ell.call1((r,)).and_then(|v| v.extract::<f64>()) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let curve = sde::bihari_bound(&f, eta, horizon, c_env, n_points);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let curve = curve.map_err(py_err)?;
    Ok((curve.times, curve.values))
}

#[pyfunction]
fn list_scenarios() -> Vec<(String, Vec<String>, String)> {
    scenario::Scenario::ALL
        .iter()
        .map(|s| (s.name().to_string(), s.anchors().iter().map(|a| a.tag().to_string()).collect(), s.description().to_string()))
        .collect()
}

/// Runs a scenario config; returns `(passed, summary, output_dir)`.
#[pyfunction]
#[pyo3(signature = (config, output_dir = None))]
fn run_scenario(py: Python<'_>, config: PathBuf, output_dir: Option<PathBuf>) -> PyResult<(bool, String, PathBuf)> {
    let cfg = ScenarioConfig::from_file(&config).map_err(py_err)?;
    let (out, dir) = py.detach(|| scenario::run(&cfg, output_dir.as_deref())).map_err(py_err)?;
    Ok((out.all_passed(), out.summary_text(), dir))
}

#[pymodule(name = "degsde")]
fn degsde_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Drift>()?;
    m.add_class::<Field>()?;
    m.add_function(wrap_pyfunction!(bihari_bound, m)?)?;
    m.add_function(wrap_pyfunction!(list_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add("DegsdeError", m.py().get_type::<DegsdeError>())?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("HypothesisError", m.py().get_type::<HypothesisError>())?;
    Ok(())
}
