//! Python bindings for `trex-core`.
//!
//! Matrices cross the boundary as lists of rows, vectors as lists of floats.
//! Variable indices are 0-based on both sides.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use trex_core::btrex::DEFAULT_BOOTSTRAPS;
use trex_core::lasso::default_sqrt_lasso_gamma;
use trex_core::{Error, LassoParams, SynthConfig, TrexParams};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::DimensionMismatch { .. }
        | Error::DegenerateColumn(_)
        | Error::NonFinite(_)
        | Error::TooFewObservations { .. }
        | Error::InvalidParameter(_)
        | Error::Parse { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != p) {
        return Err(PyValueError::new_err(format!(
            "row {i} has {} entries, expected {p}",
            rows[i].len()
        )));
    }
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Standardized design and response. Columns are scaled to norm `sqrt(n)`.
#[pyclass(name = "Dataset", module = "trex", frozen)]
struct PyDataset(trex_core::Dataset);

#[pymethods]
impl PyDataset {
    #[new]
    fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<Self> {
        let x = matrix(x)?;
        trex_core::standardize(x, DVector::from_vec(y)).map(Self).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.0.p()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        rows_of(self.0.x())
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        vec_of(self.0.y())
    }

    /// Divisors applied to the raw columns.
    #[getter]
    fn col_scales(&self) -> Vec<f64> {
        vec_of(self.0.col_scales())
    }

    /// Maps coefficients fitted on this dataset back to the raw column scale.
    fn to_raw_scale(&self, beta: Vec<f64>) -> PyResult<Vec<f64>> {
        if beta.len() != self.0.p() {
            return Err(PyValueError::new_err(format!("expected {} coefficients, got {}", self.0.p(), beta.len())));
        }
        Ok(vec_of(&self.0.to_raw_scale(&DVector::from_vec(beta))))
    }

    fn predict(&self, beta: Vec<f64>) -> PyResult<Vec<f64>> {
        if beta.len() != self.0.p() {
            return Err(PyValueError::new_err(format!("expected {} coefficients, got {}", self.0.p(), beta.len())));
        }
        Ok(vec_of(&self.0.predict(&DVector::from_vec(beta))))
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, p={})", self.0.n(), self.0.p())
    }
}

#[pyclass(name = "Fit", module = "trex", frozen, get_all)]
struct PyFit {
    beta: Vec<f64>,
    support: Vec<usize>,
    objective: f64,
    iterations: usize,
    converged: bool,
    runtime_secs: f64,
    objective_trace: Vec<f64>,
    exact_objective: Option<f64>,
    lambda_: Option<f64>,
    sigma_hat: Option<f64>,
}

impl From<trex_core::SparseFit> for PyFit {
    fn from(f: trex_core::SparseFit) -> Self {
        Self {
            beta: vec_of(&f.beta),
            support: f.support,
            objective: f.objective,
            iterations: f.iterations,
            converged: f.converged,
            runtime_secs: f.runtime_secs,
            objective_trace: f.diagnostics.objective_trace,
            exact_objective: f.diagnostics.exact_objective,
            lambda_: f.diagnostics.lambda,
            sigma_hat: f.diagnostics.sigma_hat,
        }
    }
}

#[pymethods]
impl PyFit {
    fn __repr__(&self) -> String {
        format!(
            "Fit(support={:?}, objective={}, converged={})",
            self.support, self.objective, self.converged
        )
    }
}

#[pyclass(name = "BtrexResult", module = "trex", frozen)]
struct PyBtrex(trex_core::BtrexResult);

#[pymethods]
impl PyBtrex {
    #[getter]
    fn b(&self) -> usize {
        self.0.b
    }

    #[getter]
    fn frequencies(&self) -> Vec<usize> {
        self.0.frequencies.clone()
    }

    #[getter]
    fn majority_support(&self) -> Vec<usize> {
        self.0.majority_support.clone()
    }

    #[getter]
    fn per_bootstrap_supports(&self) -> Vec<Vec<usize>> {
        self.0.per_bootstrap_supports.clone()
    }

    #[getter]
    fn seeds(&self) -> Vec<u64> {
        self.0.seeds.clone()
    }

    #[getter]
    fn sample_sizes(&self) -> Vec<usize> {
        self.0.sample_sizes.clone()
    }

    /// `(bootstrap index, message)` for every fit that errored.
    #[getter]
    fn failures(&self) -> Vec<(usize, String)> {
        self.0.failures.clone()
    }

    fn selection_fractions(&self) -> Vec<f64> {
        self.0.selection_fractions()
    }

    /// The `k` most frequently selected variables.
    fn threshold_support(&self, k: usize) -> Vec<usize> {
        trex_core::threshold_support(&self.0, k)
    }

    fn __repr__(&self) -> String {
        format!("BtrexResult(b={}, majority_support={:?})", self.0.b, self.0.majority_support)
    }
}

fn trex_params(q: u32, max_iter: Option<usize>, opt_tol: f64, prog_tol: f64) -> TrexParams {
    TrexParams {
        q,
        max_iter,
        opt_tol,
        prog_tol,
        ..TrexParams::default()
    }
}

#[pyfunction]
fn standardize(x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<PyDataset> {
    PyDataset::new(x, y)
}

#[pyfunction]
#[pyo3(signature = (data, q = 40, max_iter = None, opt_tol = 1e-7, prog_tol = 1e-9))]
fn trex_fit(py: Python<'_>, data: &PyDataset, q: u32, max_iter: Option<usize>, opt_tol: f64, prog_tol: f64) -> PyResult<PyFit> {
    let params = trex_params(q, max_iter, opt_tol, prog_tol);
    let d = &data.0;
    py.detach(|| trex_core::trex_fit(d, &params)).map(PyFit::from).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (data, b = DEFAULT_BOOTSTRAPS, seed = 0, q = 40))]
fn btrex_fit(py: Python<'_>, data: &PyDataset, b: usize, seed: u64, q: u32) -> PyResult<PyBtrex> {
    let params = TrexParams { q, ..TrexParams::default() };
    let d = &data.0;
    py.detach(|| trex_core::btrex_fit(d, b, &params, seed)).map(PyBtrex).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (data, lam, init = None))]
fn lasso_fit(py: Python<'_>, data: &PyDataset, lam: f64, init: Option<Vec<f64>>) -> PyResult<PyFit> {
    let d = &data.0;
    let init = DVector::from_vec(init.unwrap_or_else(|| vec![0.0; d.p()]));
    py.detach(|| trex_core::lasso_fit(d, lam, &LassoParams::default(), &init))
        .map(PyFit::from)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (data, lambdas = None))]
fn lasso_path(py: Python<'_>, data: &PyDataset, lambdas: Option<Vec<f64>>) -> PyResult<Vec<PyFit>> {
    let params = LassoParams {
        lambda_grid: lambdas,
        ..LassoParams::default()
    };
    let d = &data.0;
    py.detach(|| trex_core::lasso_path(d, &params))
        .map(|fits| fits.into_iter().map(PyFit::from).collect())
        .map_err(to_py)
}

/// Returns `(fit, lambda_star)`.
#[pyfunction]
#[pyo3(signature = (data, folds = 10, seed = 0))]
fn lasso_cv(py: Python<'_>, data: &PyDataset, folds: usize, seed: u64) -> PyResult<(PyFit, f64)> {
    let d = &data.0;
    py.detach(|| trex_core::lasso_cv(d, folds, &LassoParams::default(), seed))
        .map(|cv| (PyFit::from(cv.fit), cv.lambda_star))
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (data, gamma = None))]
fn sqrt_lasso_fit(py: Python<'_>, data: &PyDataset, gamma: Option<f64>) -> PyResult<PyFit> {
    let d = &data.0;
    let gamma = gamma.unwrap_or_else(|| default_sqrt_lasso_gamma(d.n(), d.p()));
    py.detach(|| trex_core::sqrt_lasso_fit(d, gamma, &LassoParams::default()))
        .map(PyFit::from)
        .map_err(to_py)
}

/// Equicorrelated Gaussian design with `beta* = (1,1,1,1,1,0,...)`.
/// Returns `(dataset, beta_star)`.
#[pyfunction]
#[pyo3(signature = (n, p, sigma, kappa = 0.0, seed = 0))]
fn generate_synthetic(n: usize, p: usize, sigma: f64, kappa: f64, seed: u64) -> PyResult<(PyDataset, Vec<f64>)> {
    let data = trex_core::generate_synthetic(&SynthConfig::with_sparse_signal(n, p, sigma, kappa, seed)).map_err(to_py)?;
    Ok((PyDataset(data.dataset), vec_of(&data.beta_star)))
}

#[pyfunction]
fn hamming_distance(estimated: Vec<usize>, truth: Vec<usize>, p: usize) -> PyResult<usize> {
    for s in [&estimated, &truth] {
        if s.windows(2).any(|w| w[1] <= w[0]) || s.last().is_some_and(|&j| j >= p) {
            return Err(PyValueError::new_err("supports must be sorted, distinct and below p"));
        }
    }
    Ok(trex_core::hamming_distance(&estimated, &truth, p))
}

#[pyfunction]
fn least_squares_refit(data: &PyDataset, support: Vec<usize>) -> PyResult<Vec<f64>> {
    trex_core::least_squares_refit(&data.0, &support).map(|b| vec_of(&b)).map_err(to_py)
}

#[pymodule]
pub fn trex(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFit>()?;
    m.add_class::<PyBtrex>()?;
    m.add_function(wrap_pyfunction!(standardize, m)?)?;
    m.add_function(wrap_pyfunction!(trex_fit, m)?)?;
    m.add_function(wrap_pyfunction!(btrex_fit, m)?)?;
    m.add_function(wrap_pyfunction!(lasso_fit, m)?)?;
    m.add_function(wrap_pyfunction!(lasso_path, m)?)?;
    m.add_function(wrap_pyfunction!(lasso_cv, m)?)?;
    m.add_function(wrap_pyfunction!(sqrt_lasso_fit, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(hamming_distance, m)?)?;
    m.add_function(wrap_pyfunction!(least_squares_refit, m)?)?;
    Ok(())
}
