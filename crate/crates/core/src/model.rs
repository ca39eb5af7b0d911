//! Data containers and the linear-algebra kernels shared by every solver.
//!
//! A [`Dataset`] always lives in the standardized scale: each design column has
//! Euclidean norm `sqrt(n)`, so that `(X^T X)_jj = n`. The divisors applied to the
//! raw columns are kept in `col_scales` and are only used when a caller asks for
//! coefficients on the raw scale. No intercept is fitted and the response is left
//! untouched.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Columns whose norm falls below this multiple of `sqrt(n)` are rejected.
pub const DEGENERATE_COLUMN_RTOL: f64 = 1e-12;

/// Largest admissible condition number of a restricted Gram matrix in
/// [`least_squares_refit`].
pub const REFIT_MAX_CONDITION: f64 = 1e12;

/// Response vector plus column-standardized design.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    col_scales: DVector<f64>,
    names: Option<Vec<String>>,
}

impl Dataset {
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Divisors applied to the raw columns: `x_std[:, j] = x_raw[:, j] / col_scales[j]`.
    pub fn col_scales(&self) -> &DVector<f64> {
        &self.col_scales
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Column names, if the dataset was loaded from a CSV with a header row.
    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::DimensionMismatch {
                what: "column names",
                expected: self.p(),
                got: names.len(),
            });
        }
        self.names = Some(names);
        Ok(self)
    }

    /// Display label for variable `j` (1-based index when no names are known).
    pub fn label(&self, j: usize) -> String {
        match &self.names {
            Some(names) => names[j].clone(),
            None => (j + 1).to_string(),
        }
    }

    /// Maps standardized-scale coefficients back to the raw column scale.
    pub fn to_raw_scale(&self, beta: &DVector<f64>) -> DVector<f64> {
        beta.component_div(&self.col_scales)
    }

    /// Replaces the response, keeping the design.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::DimensionMismatch {
                what: "response length",
                expected: self.n(),
                got: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response"));
        }
        Ok(Self { y, ..self.clone() })
    }

    /// Rows `rows` (repetitions allowed) of the design and response, with the
    /// column scaling left as-is. Column norms are no longer `sqrt(n)`.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let x = self.x.select_rows(rows.iter());
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        Dataset {
            x,
            y,
            col_scales: self.col_scales.clone(),
            names: self.names.clone(),
        }
    }

    /// Selects `rows` and re-standardizes the result. Columns that vanish on the
    /// selected rows are set to zero (and can therefore never enter a support)
    /// instead of raising; their indices are returned alongside. The scales of
    /// the result are relative to `self`.
    pub fn resample(&self, rows: &[usize]) -> (Dataset, Vec<usize>) {
        let sub = self.select_rows(rows);
        let n = sub.n();
        let target = (n as f64).sqrt();
        let mut x = sub.x;
        let mut scales = DVector::from_element(x.ncols(), 1.0);
        let mut dropped = Vec::new();
        for j in 0..x.ncols() {
            let norm = x.column(j).norm();
            if norm < DEGENERATE_COLUMN_RTOL * target {
                x.column_mut(j).fill(0.0);
                dropped.push(j);
            } else {
                let s = norm / target;
                x.column_mut(j).unscale_mut(s);
                scales[j] = s;
            }
        }
        (
            Dataset {
                x,
                y: sub.y,
                col_scales: scales,
                names: sub.names,
            },
            dropped,
        )
    }

    /// `X beta`.
    pub fn predict(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.x * beta
    }
}

/// Scales every column of `raw_x` to Euclidean norm `sqrt(n)`.
pub fn standardize(raw_x: DMatrix<f64>, raw_y: DVector<f64>) -> Result<Dataset> {
    let (n, p) = raw_x.shape();
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    if p < 1 {
        return Err(Error::InvalidParameter("design has no columns".into()));
    }
    if raw_y.len() != n {
        return Err(Error::DimensionMismatch {
            what: "response length vs design rows",
            expected: n,
            got: raw_y.len(),
        });
    }
    if raw_x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design"));
    }
    if raw_y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response"));
    }

    let target = (n as f64).sqrt();
    let mut x = raw_x;
    let mut scales = DVector::zeros(p);
    for j in 0..p {
        let norm = x.column(j).norm();
        if norm < DEGENERATE_COLUMN_RTOL * target {
            return Err(Error::DegenerateColumn(j));
        }
        let s = norm / target;
        // Leave columns that are already normalized bit-for-bit untouched.
        if s != 1.0 {
            x.column_mut(j).unscale_mut(s);
        }
        scales[j] = s;
    }
    Ok(Dataset {
        x,
        y: raw_y,
        col_scales: scales,
        names: None,
    })
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

/// `Y - X beta`.
pub fn residual(d: &Dataset, beta: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("coefficient vector", d.p(), beta.len())?;
    Ok(&d.y - &d.x * beta)
}

/// `||X^T r||_inf`.
pub fn sup_correlation(d: &Dataset, r: &DVector<f64>) -> Result<f64> {
    check_len("residual vector", d.n(), r.len())?;
    Ok(d.x.tr_mul(r).amax())
}

/// `sign(z) * max(|z| - t, 0)`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Indices of the exactly non-zero entries of `beta`, ascending.
pub fn support_of(beta: &DVector<f64>) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(j, _)| j)
        .collect()
}

/// Ordinary least squares restricted to the columns in `support`; every other
/// coefficient is zero.
pub fn least_squares_refit(d: &Dataset, support: &[usize]) -> Result<DVector<f64>> {
    let p = d.p();
    let mut beta = DVector::zeros(p);
    if support.is_empty() {
        return Ok(beta);
    }
    if let Some(&j) = support.iter().find(|&&j| j >= p) {
        return Err(Error::InvalidParameter(format!(
            "support index {j} out of range for p = {p}"
        )));
    }
    let k = support.len();
    if k > d.n() {
        return Err(Error::SingularSubmatrix(f64::INFINITY));
    }

    let xs = d.x.select_columns(support.iter());
    let gram = xs.tr_mul(&xs);
    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(cond <= REFIT_MAX_CONDITION) {
        return Err(Error::SingularSubmatrix(cond));
    }
    let chol = gram
        .cholesky()
        .ok_or(Error::SingularSubmatrix(cond))?;
    let mut coef = chol.solve(&xs.tr_mul(&d.y));
    // One round of iterative refinement on the normal equations.
    let r = &d.y - &xs * &coef;
    coef += chol.solve(&xs.tr_mul(&r));

    for (c, &j) in coef.iter().zip(support) {
        beta[j] = *c;
    }
    Ok(beta)
}

/// Result of a sparse solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFit {
    pub beta: DVector<f64>,
    /// `{ j : beta[j] != 0 }`, ascending.
    pub support: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub runtime_secs: f64,
    pub diagnostics: FitDiagnostics,
}

/// Solver-specific extras attached to a [`SparseFit`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitDiagnostics {
    /// Objective after every accepted iterate (or sweep), starting at the initial point.
    pub objective_trace: Vec<f64>,
    /// Smoothed TREX objective at the solution.
    pub smooth_objective: Option<f64>,
    /// Exact (sup-norm) TREX objective at the solution.
    pub exact_objective: Option<f64>,
    /// Tuning parameter the fit was computed at, for the Lasso family.
    pub lambda: Option<f64>,
    /// Estimated noise level, for the Square-Root Lasso.
    pub sigma_hat: Option<f64>,
    pub message: Option<String>,
}

impl SparseFit {
    pub fn new(beta: DVector<f64>, objective: f64, iterations: usize, converged: bool) -> Self {
        let support = support_of(&beta);
        Self {
            beta,
            support,
            objective,
            iterations,
            converged,
            runtime_secs: 0.0,
            diagnostics: FitDiagnostics::default(),
        }
    }
}
