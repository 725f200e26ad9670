//! Python bindings: parameter classes, densities, samplers, fitters and the simulation study.

use std::path::PathBuf;

use glfit::circular::{self, AngleSample};
use glfit::estimate::{self, FitOptions, Method};
use glfit::gl::{self, ObservationMatrix};
use glfit::quadrature::gamma_rule;
use glfit::simharness::{self, HarnessMethod, RunOptions};
use glfit::GlError;
use nalgebra::{DMatrix, DVector, Matrix2};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn to_py(e: GlError) -> PyErr {
    match e {
        GlError::Numeric(_) | GlError::Singularity(_) => PyArithmeticError::new_err(e.to_string()),
        GlError::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn square(rows: Vec<Vec<f64>>, name: &str) -> PyResult<DMatrix<f64>> {
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err(format!("{name} must be a square list of rows")));
    }
    Ok(DMatrix::from_row_iterator(d, d, rows.into_iter().flatten()))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Generalized Laplace law GL(θ, Σ, μ, α).
#[pyclass(name = "GLParams", frozen)]
struct PyGLParams {
    inner: gl::GLParams,
}

#[pymethods]
impl PyGLParams {
    #[new]
    fn new(theta: Vec<f64>, sigma: Vec<Vec<f64>>, mu: Vec<f64>, alpha: f64) -> PyResult<Self> {
        let sigma = square(sigma, "sigma")?;
        let inner = gl::GLParams::new(DVector::from_vec(theta), sigma, DVector::from_vec(mu), alpha).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Univariate law with scale σ (standard deviation of the normal kernel).
    #[staticmethod]
    fn univariate(theta: f64, sigma: f64, mu: f64, alpha: f64) -> PyResult<Self> {
        Ok(Self { inner: gl::GLParams::univariate(theta, sigma, mu, alpha).map_err(to_py)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.theta().iter().copied().collect()
    }

    #[getter]
    fn sigma(&self) -> Vec<Vec<f64>> {
        matrix_rows(self.inner.sigma())
    }

    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.inner.mu().iter().copied().collect()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    /// Log-density at one point (a list of length d).
    fn logpdf(&self, y: Vec<f64>) -> PyResult<f64> {
        gl::GlDensity::new(&self.inner).and_then(|d| d.logpdf(&y)).map_err(to_py)
    }

    /// (mean, covariance rows).
    fn moments(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (m, c) = gl::gl_moments(&self.inner);
        (m.iter().copied().collect(), matrix_rows(&c))
    }

    /// n draws as a list of rows.
    #[pyo3(signature = (n, seed = 0))]
    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = gl::sample_gl(&self.inner, n, &mut rng).map_err(to_py)?;
        Ok(y.rows().map(<[f64]>::to_vec).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "GLParams(theta={:?}, sigma={:?}, mu={:?}, alpha={})",
            self.theta(),
            self.sigma(),
            self.mu(),
            self.inner.alpha()
        )
    }
}

/// Projected generalized Laplace law with Σ = [[φ², ρφ], [ρφ, 1]].
#[pyclass(name = "PGLParams", frozen)]
struct PyPGLParams {
    inner: circular::PGLParams,
}

#[pymethods]
impl PyPGLParams {
    #[new]
    fn new(theta: [f64; 2], phi: f64, rho: f64, alpha: f64) -> PyResult<Self> {
        Ok(Self { inner: circular::PGLParams::new(theta, phi, rho, alpha).map_err(to_py)? })
    }

    #[getter]
    fn theta(&self) -> [f64; 2] {
        self.inner.theta()
    }

    #[getter]
    fn phi(&self) -> f64 {
        self.inner.phi()
    }

    #[getter]
    fn rho(&self) -> f64 {
        self.inner.rho()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    /// Log-density at angle ω; `exact` integrates the mixture adaptively instead of using `nodes` points.
    #[pyo3(signature = (omega, nodes = 20, exact = false))]
    fn logpdf(&self, omega: f64, nodes: usize, exact: bool) -> PyResult<f64> {
        if exact {
            return circular::pgl_logpdf_exact(omega, &self.inner).map_err(to_py);
        }
        let rule = gamma_rule(self.inner.alpha(), nodes).map_err(to_py)?;
        circular::pgl_logpdf(omega, &self.inner, &rule).map_err(to_py)
    }

    #[pyo3(signature = (n, seed = 0))]
    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(circular::sample_pgl(&self.inner, n, &mut rng).map_err(to_py)?.as_slice().to_vec())
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!("PGLParams(theta={:?}, phi={}, rho={}, alpha={})", p.theta(), p.phi(), p.rho(), p.alpha())
    }
}

/// Result of a maximum-likelihood fit.
#[pyclass(name = "FitResult", frozen)]
struct PyFitResult {
    inner: estimate::FitResult,
}

#[pymethods]
impl PyFitResult {
    #[getter]
    fn loglik(&self) -> f64 {
        self.inner.loglik
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn reason(&self) -> &'static str {
        self.inner.reason.code()
    }

    #[getter]
    fn method(&self) -> String {
        self.inner.method.name()
    }

    #[getter]
    fn eta(&self) -> Vec<f64> {
        self.inner.eta_hat.as_slice().to_vec()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn elapsed_seconds(&self) -> f64 {
        self.inner.elapsed_seconds
    }

    /// The JSON document also written by `glfit fit`.
    fn to_json(&self) -> String {
        self.inner.to_json().to_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "FitResult(method={:?}, loglik={}, converged={}, reason={:?})",
            self.method(),
            self.inner.loglik,
            self.inner.converged,
            self.reason()
        )
    }
}

fn angles(data: Vec<f64>) -> PyResult<AngleSample> {
    AngleSample::from_radians(data).map_err(to_py)
}

/// Fit a GL law to rows of observations by `method` (gq-nm, gq-bfgs, gq-qn, direct-ml).
#[pyfunction]
#[pyo3(signature = (data, method = "gq-qn", nodes = None, max_iter = 5000))]
fn fit_gl(py: Python<'_>, data: Vec<Vec<f64>>, method: &str, nodes: Option<usize>, max_iter: usize) -> PyResult<PyFitResult> {
    let method = Method::parse(method, nodes).map_err(to_py)?;
    let y = ObservationMatrix::from_rows(&data).map_err(to_py)?;
    let opts = FitOptions { max_iter, init: None };
    let inner = py.detach(|| estimate::fit_gl(&y, method, &opts)).map_err(to_py)?;
    Ok(PyFitResult { inner })
}

/// Fit a PGL law to angles in radians.
#[pyfunction]
#[pyo3(signature = (data, method = "gq-qn", nodes = None, max_iter = 5000))]
fn fit_pgl(py: Python<'_>, data: Vec<f64>, method: &str, nodes: Option<usize>, max_iter: usize) -> PyResult<PyFitResult> {
    let method = Method::parse(method, nodes).map_err(to_py)?;
    let w = angles(data)?;
    let opts = FitOptions { max_iter, init: None };
    let inner = py.detach(|| estimate::fit_pgl(&w, method, &opts)).map_err(to_py)?;
    Ok(PyFitResult { inner })
}

/// Fit a projected normal law to angles in radians.
#[pyfunction]
#[pyo3(signature = (data, max_iter = 5000))]
fn fit_pn(py: Python<'_>, data: Vec<f64>, max_iter: usize) -> PyResult<PyFitResult> {
    let w = angles(data)?;
    let opts = FitOptions { max_iter, init: None };
    let inner = py.detach(|| estimate::fit_pn(&w, &opts)).map_err(to_py)?;
    Ok(PyFitResult { inner })
}

/// Fit a von Mises law to angles in radians.
#[pyfunction]
fn fit_vm(data: Vec<f64>) -> PyResult<PyFitResult> {
    Ok(PyFitResult { inner: estimate::fit_vm(&angles(data)?).map_err(to_py)? })
}

/// Log-density of the projected normal PN(θ, Σ).
#[pyfunction]
fn pn_logpdf(omega: f64, theta: [f64; 2], sigma: [[f64; 2]; 2]) -> PyResult<f64> {
    let s = Matrix2::new(sigma[0][0], sigma[0][1], sigma[1][0], sigma[1][1]);
    circular::pn_logpdf(omega, theta, &s).map_err(to_py)
}

/// Log-density of the von Mises law.
#[pyfunction]
fn vm_logpdf(omega: f64, location: f64, kappa: f64) -> PyResult<f64> {
    let p = circular::VMParams::new(location, kappa).map_err(to_py)?;
    circular::vm_logpdf(omega, &p).map_err(to_py)
}

/// (nodes, weights) of the H-point Gauss rule for the gamma(α, 1) law.
#[pyfunction(name = "gamma_rule")]
fn py_gamma_rule(alpha: f64, order: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let r = gamma_rule(alpha, order).map_err(to_py)?;
    Ok((r.nodes().to_vec(), r.weights().to_vec()))
}

/// Modified Bessel function of the third kind K_ν(x).
#[pyfunction]
fn bessel_k(nu: f64, x: f64) -> PyResult<f64> {
    glfit::specfun::bessel_k(nu, x).map_err(to_py)
}

/// Run built-in study scenarios and write summary.csv and replications.csv to `out_dir`.
/// Returns the summary rows as dicts.
#[pyfunction]
#[pyo3(signature = (part, out_dir, reps = 500, base_seed = simharness::DEFAULT_BASE_SEED, jobs = 1, scenarios = None, methods = None, timings = true))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    part: u8,
    out_dir: PathBuf,
    reps: usize,
    base_seed: u64,
    jobs: usize,
    scenarios: Option<Vec<String>>,
    methods: Option<Vec<String>>,
    timings: bool,
) -> PyResult<Vec<Py<pyo3::types::PyDict>>> {
    let methods = methods
        .unwrap_or_default()
        .iter()
        .map(|m| HarnessMethod::parse(m))
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_py)?;
    let mut list = simharness::builtin_scenarios(part).map_err(to_py)?;
    if let Some(filter) = scenarios {
        list.retain(|s| filter.iter().any(|f| s.id.contains(f.as_str())));
    }
    for s in &mut list {
        s.replications = reps;
        s.base_seed = base_seed;
        if !methods.is_empty() {
            s.methods = methods.clone();
        }
    }
    let table = py
        .detach(|| -> glfit::Result<_> {
            let records = simharness::run_scenarios(&list, &RunOptions { jobs, timings })?;
            let table = simharness::summarize(&records)?;
            simharness::emit_report(&table, &records, &out_dir)?;
            Ok(table)
        })
        .map_err(to_py)?;
    table
        .rows
        .iter()
        .map(|r| {
            let d = pyo3::types::PyDict::new(py);
            d.set_item("scenario", &r.scenario)?;
            d.set_item("method", &r.method)?;
            d.set_item("n", r.n)?;
            d.set_item("mse_ev", r.mse_ev)?;
            d.set_item("mse_var", r.mse_var)?;
            d.set_item("mean_loglik", r.mean_loglik)?;
            d.set_item("mean_time_s", r.mean_time)?;
            d.set_item("failure_prop", r.failure_proportion)?;
            Ok(d.unbind())
        })
        .collect()
}

#[pymodule]
fn pyglfit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGLParams>()?;
    m.add_class::<PyPGLParams>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(fit_gl, m)?)?;
    m.add_function(wrap_pyfunction!(fit_pgl, m)?)?;
    m.add_function(wrap_pyfunction!(fit_pn, m)?)?;
    m.add_function(wrap_pyfunction!(fit_vm, m)?)?;
    m.add_function(wrap_pyfunction!(pn_logpdf, m)?)?;
    m.add_function(wrap_pyfunction!(vm_logpdf, m)?)?;
    m.add_function(wrap_pyfunction!(py_gamma_rule, m)?)?;
    m.add_function(wrap_pyfunction!(bessel_k, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
