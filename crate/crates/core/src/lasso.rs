//! Lasso baselines: coordinate descent, regularization paths, K-fold
//! cross-validation and the Square-Root Lasso.
//!
//! The Lasso criterion used throughout is
//!
//! ```text
//! ||Y - X b||_2^2 / n + lambda * ||b||_1
//! ```
//!
//! so its smooth part has gradient `-2 X^T r / n`. KKT conditions and the
//! `lambda_max = 2 ||X^T Y||_inf / n` convention carry that factor of two.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{residual, Dataset, SparseFit};
use crate::rng::{complement, kfold_partition};

pub const DEFAULT_GRID_COUNT: usize = 100;
pub const DEFAULT_GRID_RATIO: f64 = 1e-4;

/// Relative KKT tolerance a converged coordinate-descent fit must meet.
pub const KKT_RTOL: f64 = 1e-4;
/// Tighter internal target, so that the public tolerance holds with margin.
const KKT_TARGET: f64 = 1e-5;
/// Relative eigenvalue below which a Gram direction counts as null.
const NULL_DIRECTION_RTOL: f64 = 1e-10;

/// Active-set sweeps tried before switching to a direct active-set solve.
const INNER_SWEEP_BUDGET: usize = 20;

const SQRT_LASSO_RTOL: f64 = 1e-6;
const SQRT_LASSO_MAX_OUTER: usize = 100;
const EXACT_FIT_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoParams {
    /// Strictly decreasing, positive. `None` uses [`default_lambda_grid`] with
    /// [`DEFAULT_GRID_COUNT`] points down to [`DEFAULT_GRID_RATIO`].
    pub lambda_grid: Option<Vec<f64>>,
    /// Convergence tolerance on the largest coefficient change over a sweep.
    pub cd_tol: f64,
    pub max_sweeps: usize,
    pub warm_start: bool,
}

impl Default for LassoParams {
    fn default() -> Self {
        Self {
            lambda_grid: None,
            cd_tol: 1e-7,
            max_sweeps: 10_000,
            warm_start: true,
        }
    }
}

impl LassoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cd_tol > 0.0) {
            return Err(Error::InvalidParameter("cd_tol must be positive".into()));
        }
        if self.max_sweeps < 1 {
            return Err(Error::InvalidParameter("max_sweeps must be >= 1".into()));
        }
        if let Some(grid) = &self.lambda_grid {
            validate_grid(grid)?;
        }
        Ok(())
    }

    /// The configured grid, or the default one for `d`.
    pub fn grid_for(&self, d: &Dataset) -> Result<Vec<f64>> {
        match &self.lambda_grid {
            Some(g) => Ok(g.clone()),
            None => default_lambda_grid(d, DEFAULT_GRID_COUNT, DEFAULT_GRID_RATIO),
        }
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("lambda grid is empty".into()));
    }
    if grid.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidParameter(
            "lambda grid must be positive and finite".into(),
        ));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter(
            "lambda grid must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// Smallest `lambda` for which zero is a Lasso solution: `2 ||X^T Y||_inf / n`.
pub fn lambda_max(d: &Dataset) -> f64 {
    2.0 * d.x().tr_mul(d.y()).amax() / d.n() as f64
}

/// Geometric grid from `lambda_max` down to `ratio * lambda_max`.
pub fn default_lambda_grid(d: &Dataset, count: usize, ratio: f64) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::InvalidParameter("grid count must be >= 2".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter("grid ratio must lie in (0, 1)".into()));
    }
    let top = lambda_max(d);
    if !(top > 0.0) {
        return Err(Error::InvalidParameter(
            "response is orthogonal to every column; lambda_max is zero".into(),
        ));
    }
    let step = ratio.ln() / (count - 1) as f64;
    let mut grid: Vec<f64> = (0..count).map(|k| top * (step * k as f64).exp()).collect();
    grid[count - 1] = top * ratio;
    Ok(grid)
}

pub fn lasso_objective(d: &Dataset, beta: &DVector<f64>, lambda: f64) -> Result<f64> {
    let r = residual(d, beta)?;
    Ok(r.norm_squared() / d.n() as f64 + lambda * beta.lp_norm(1))
}

/// Largest KKT violation of `beta` relative to `lambda`. Active coordinates
/// must satisfy `2 X_j^T r / n = lambda * sign(beta_j)` and inactive ones
/// `2 |X_j^T r| / n <= lambda`.
pub fn kkt_violation(d: &Dataset, beta: &DVector<f64>, lambda: f64) -> Result<f64> {
    let r = residual(d, beta)?;
    let corr = d.x().tr_mul(&r);
    let n = d.n() as f64;
    let worst = corr
        .iter()
        .zip(beta.iter())
        .map(|(&c, &b)| {
            let g = 2.0 * c / n;
            if b != 0.0 {
                (g - lambda * b.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max);
    Ok(worst / lambda)
}

struct CdState<'a> {
    d: &'a Dataset,
    col_sq: Vec<f64>,
    beta: DVector<f64>,
    r: DVector<f64>,
    threshold: f64,
}

impl CdState<'_> {
    /// One coordinate update; returns the absolute change.
    fn update(&mut self, j: usize) -> f64 {
        let c = self.col_sq[j];
        if c == 0.0 {
            return 0.0;
        }
        let col = self.d.x().column(j);
        let old = self.beta[j];
        let z = col.dot(&self.r) + c * old;
        let new = crate::model::soft_threshold(z, self.threshold) / c;
        if new != old {
            self.r.axpy(old - new, &col, 1.0);
            self.beta[j] = new;
        }
        (new - old).abs()
    }

    fn objective(&self, lambda: f64) -> f64 {
        self.r.norm_squared() / self.d.n() as f64 + lambda * self.beta.lp_norm(1)
    }

    /// Active-set step: solves the stationarity equations on `active` with the
    /// current signs held fixed, then moves toward that solution as far as the
    /// signs allow. Coordinates reaching zero on the way are set to zero. The
    /// move never increases the objective (it is a piecewise-quadratic descent
    /// along a segment).
    fn polish(&mut self, active: &[usize], lambda: f64) -> Polish {
        if active.is_empty() || active.len() > 2 * self.d.n() {
            return Polish::Unchanged;
        }
        let xa = self.d.x().select_columns(active.iter());
        let signs = DVector::from_iterator(active.len(), active.iter().map(|&j| self.beta[j].signum()));
        let gram = xa.tr_mul(&xa);
        let chol = if active.len() > self.d.n() {
            None
        } else {
            gram.clone().cholesky()
        };
        let Some(chol) = chol else {
            return self.null_step(active, gram, &signs, lambda);
        };
        let sol = chol.solve(&(xa.tr_mul(self.d.y()) - &signs * self.threshold));
        if sol.iter().any(|b| !b.is_finite()) {
            return Polish::Unchanged;
        }
        // Largest step in [0, 1] keeping every active sign.
        let mut t = 1.0f64;
        for (&j, &target) in active.iter().zip(sol.iter()) {
            let cur = self.beta[j];
            if target * cur <= 0.0 {
                t = t.min(cur / (cur - target));
            }
        }
        let mut beta = self.beta.clone();
        for (&j, &target) in active.iter().zip(sol.iter()) {
            let cur = self.beta[j];
            let next = cur + t * (target - cur);
            let blocking = target * cur <= 0.0 && cur / (cur - target) <= t;
            beta[j] = if blocking || next * cur <= 0.0 { 0.0 } else { next };
        }
        let r = self.d.y() - self.d.x() * &beta;
        let n = self.d.n() as f64;
        let candidate = r.norm_squared() / n + lambda * beta.lp_norm(1);
        if !(candidate <= self.objective(lambda)) {
            return Polish::Unchanged;
        }
        self.beta = beta;
        self.r = r;
        if t < 1.0 {
            Polish::Improved
        } else {
            Polish::Exact
        }
    }

    /// Rank-deficient active set (typically more active columns than rows):
    /// moving along a null direction `v` of `X_A` leaves the residual alone and
    /// changes the penalty by `lambda * s^T v` per unit step, so walking with
    /// `s^T v <= 0` until the first coefficient hits zero cannot increase the
    /// objective and shrinks the active set.
    fn null_step(
        &mut self,
        active: &[usize],
        gram: DMatrix<f64>,
        signs: &DVector<f64>,
        lambda: f64,
    ) -> Polish {
        let eig = gram.symmetric_eigen();
        let (k, &smallest) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("active set is non-empty");
        let largest = eig.eigenvalues.amax();
        if smallest > NULL_DIRECTION_RTOL * largest {
            return Polish::Unchanged;
        }
        let mut v = eig.eigenvectors.column(k).into_owned();
        if signs.dot(&v) > 0.0 {
            v.neg_mut();
        }
        let mut t = f64::INFINITY;
        let mut blocking = usize::MAX;
        for (i, &j) in active.iter().enumerate() {
            if v[i] * self.beta[j] < 0.0 {
                let ti = -self.beta[j] / v[i];
                if ti < t {
                    t = ti;
                    blocking = i;
                }
            }
        }
        if !t.is_finite() {
            return Polish::Unchanged;
        }
        let mut beta = self.beta.clone();
        for (i, &j) in active.iter().enumerate() {
            let next = beta[j] + t * v[i];
            beta[j] = if i == blocking || next * beta[j] <= 0.0 { 0.0 } else { next };
        }
        let r = self.d.y() - self.d.x() * &beta;
        let candidate = r.norm_squared() / self.d.n() as f64 + lambda * beta.lp_norm(1);
        if !(candidate <= self.objective(lambda)) {
            return Polish::Unchanged;
        }
        self.beta = beta;
        self.r = r;
        Polish::Improved
    }
}

enum Polish {
    Unchanged,
    Improved,
    /// Reached the restricted stationary point with signs intact.
    Exact,
}

/// Coordinate-descent Lasso at a single `lambda`, started from `init`.
///
/// Sweeps alternate between the full coordinate set and the current active set.
/// When the largest change in a full sweep drops below `cd_tol` the KKT
/// conditions are checked; if they do not yet hold the tolerance is tightened
/// and sweeping continues. When sweeps over the active set stall, an
/// active-set step (a direct solve of the stationarity equations with signs
/// held fixed) is taken instead. Hitting `max_sweeps` returns the current iterate with
/// `converged = false`.
pub fn lasso_fit(
    d: &Dataset,
    lambda: f64,
    params: &LassoParams,
    init: &DVector<f64>,
) -> Result<SparseFit> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter("lambda must be positive".into()));
    }
    params.validate()?;
    let start = Instant::now();
    let n = d.n() as f64;
    let r = residual(d, init)?;
    let mut st = CdState {
        d,
        col_sq: d.x().column_iter().map(|c| c.norm_squared()).collect(),
        beta: init.clone(),
        r,
        threshold: n * lambda / 2.0,
    };
    // Zero columns cannot carry a coefficient.
    for j in 0..d.p() {
        if st.col_sq[j] == 0.0 && st.beta[j] != 0.0 {
            st.beta[j] = 0.0;
        }
    }
    st.r = residual(d, &st.beta)?;

    let mut trace = vec![st.objective(lambda)];
    let mut tol = params.cd_tol;
    let mut sweeps = 0;
    let mut converged = false;

    'outer: while sweeps < params.max_sweeps {
        let mut max_change = 0.0f64;
        for j in 0..d.p() {
            max_change = max_change.max(st.update(j));
        }
        sweeps += 1;
        trace.push(st.objective(lambda));

        if max_change < tol {
            if kkt_violation(d, &st.beta, lambda)? <= KKT_TARGET {
                converged = true;
                break;
            }
            tol /= 10.0;
            continue;
        }

        let active: Vec<usize> = (0..d.p()).filter(|&j| st.beta[j] != 0.0).collect();
        let mut inner = 0;
        let settled = loop {
            if sweeps >= params.max_sweeps {
                break 'outer;
            }
            let mut change = 0.0f64;
            for &j in &active {
                change = change.max(st.update(j));
            }
            sweeps += 1;
            inner += 1;
            trace.push(st.objective(lambda));
            if change < tol {
                break true;
            }
            if inner >= INNER_SWEEP_BUDGET {
                break false;
            }
        };
        if !settled {
            // Each blocked step removes a coordinate; keep going until the
            // restricted problem is solved or no progress is possible.
            for _ in 0..d.n() {
                let active: Vec<usize> = (0..d.p()).filter(|&j| st.beta[j] != 0.0).collect();
                match st.polish(&active, lambda) {
                    Polish::Unchanged => break,
                    Polish::Improved => trace.push(st.objective(lambda)),
                    Polish::Exact => {
                        trace.push(st.objective(lambda));
                        break;
                    }
                }
            }
        }
    }

    let objective = st.objective(lambda);
    let mut fit = SparseFit::new(st.beta, objective, sweeps, converged);
    fit.runtime_secs = start.elapsed().as_secs_f64();
    fit.diagnostics.objective_trace = trace;
    fit.diagnostics.lambda = Some(lambda);
    if !converged {
        fit.diagnostics.message = Some(format!("max_sweeps ({}) reached", params.max_sweeps));
    }
    Ok(fit)
}

/// One fit per grid value, in grid order. With `warm_start` each fit starts
/// from the previous solution, otherwise from zero.
pub fn lasso_path(d: &Dataset, params: &LassoParams) -> Result<Vec<SparseFit>> {
    params.validate()?;
    let grid = params.grid_for(d)?;
    let mut fits: Vec<SparseFit> = Vec::with_capacity(grid.len());
    let zero = DVector::zeros(d.p());
    for &lambda in &grid {
        let init = match fits.last() {
            Some(prev) if params.warm_start => &prev.beta,
            _ => &zero,
        };
        let fit = lasso_fit(d, lambda, params, init)?;
        fits.push(fit);
    }
    Ok(fits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub lambda_star: f64,
    pub lambda_grid: Vec<f64>,
    /// Mean held-out squared prediction error per grid point.
    pub cv_errors: Vec<f64>,
    /// Fit on the full dataset at `lambda_star`.
    pub fit: SparseFit,
    pub fold_count: usize,
}

/// K-fold cross-validated Lasso. Folds are a seeded shuffle cut into contiguous
/// blocks; every fold is fitted along the same grid (computed on the full data)
/// and the grid point with the smallest mean held-out error wins, ties going to
/// the larger `lambda`.
pub fn lasso_cv(d: &Dataset, folds: usize, params: &LassoParams, seed: u64) -> Result<CvResult> {
    let start = Instant::now();
    let n = d.n();
    if folds < 2 || folds > n {
        return Err(Error::InvalidParameter(format!(
            "folds must lie in [2, n = {n}], got {folds}"
        )));
    }
    params.validate()?;
    let grid = params.grid_for(d)?;
    let blocks = kfold_partition(n, folds, seed);
    if let Some(b) = blocks.iter().find(|b| n - b.len() < 2) {
        return Err(Error::FoldTooSmall(n - b.len()));
    }

    let fold_params = LassoParams {
        lambda_grid: Some(grid.clone()),
        ..params.clone()
    };
    let per_fold: Vec<Vec<f64>> = blocks
        .par_iter()
        .map(|held_out| -> Result<Vec<f64>> {
            let train = d.select_rows(&complement(n, held_out));
            let test = d.select_rows(held_out);
            let path = lasso_path(&train, &fold_params)?;
            path.iter()
                .map(|fit| residual(&test, &fit.beta).map(|r| r.norm_squared() / test.n() as f64))
                .collect()
        })
        .collect::<Result<_>>()?;

    let cv_errors: Vec<f64> = (0..grid.len())
        .map(|k| per_fold.iter().map(|e| e[k]).sum::<f64>() / folds as f64)
        .collect();
    let best = cv_errors
        .iter()
        .enumerate()
        .fold(0, |best, (k, &e)| if e < cv_errors[best] { k } else { best });

    let full_params = LassoParams {
        lambda_grid: Some(grid[..=best].to_vec()),
        ..params.clone()
    };
    let mut fit = lasso_path(d, &full_params)?
        .pop()
        .expect("non-empty grid");
    fit.runtime_secs = start.elapsed().as_secs_f64();
    Ok(CvResult {
        lambda_star: grid[best],
        lambda_grid: grid,
        cv_errors,
        fit,
        fold_count: folds,
    })
}

pub fn sqrt_lasso_objective(d: &Dataset, beta: &DVector<f64>, gamma: f64) -> Result<f64> {
    let r = residual(d, beta)?;
    Ok(r.norm() / (d.n() as f64).sqrt() + gamma * beta.lp_norm(1))
}

/// Square-Root Lasso `||Y - X b||_2 / sqrt(n) + gamma ||b||_1`, solved by
/// alternating the noise-level estimate `sigma = ||r||_2 / sqrt(n)` with a Lasso
/// fit at `lambda = 2 gamma sigma` until `sigma` settles.
pub fn sqrt_lasso_fit(d: &Dataset, gamma: f64, params: &LassoParams) -> Result<SparseFit> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter("gamma must be positive".into()));
    }
    params.validate()?;
    let start = Instant::now();
    let sqrt_n = (d.n() as f64).sqrt();
    let y_norm = d.y().norm();
    let mut beta = DVector::zeros(d.p());
    if y_norm == 0.0 {
        let mut fit = SparseFit::new(beta, 0.0, 0, true);
        fit.diagnostics.sigma_hat = Some(0.0);
        return Ok(fit);
    }

    let mut sigma = y_norm / sqrt_n;
    let mut trace = vec![sqrt_lasso_objective(d, &beta, gamma)?];
    let mut converged = false;
    let mut inner_ok = true;
    let mut outer = 0;
    while outer < SQRT_LASSO_MAX_OUTER {
        outer += 1;
        let fit = lasso_fit(d, 2.0 * gamma * sigma, params, &beta)?;
        inner_ok &= fit.converged;
        beta = fit.beta;
        let r_norm = residual(d, &beta)?.norm();
        if r_norm < EXACT_FIT_RTOL * y_norm {
            return Err(Error::ExactFit);
        }
        let next = r_norm / sqrt_n;
        trace.push(next + gamma * beta.lp_norm(1));
        let settled = (next - sigma).abs() < SQRT_LASSO_RTOL * sigma;
        sigma = next;
        if settled {
            converged = true;
            break;
        }
    }

    let objective = sqrt_lasso_objective(d, &beta, gamma)?;
    let mut fit = SparseFit::new(beta, objective, outer, converged && inner_ok);
    fit.runtime_secs = start.elapsed().as_secs_f64();
    fit.diagnostics.objective_trace = trace;
    fit.diagnostics.sigma_hat = Some(sigma);
    fit.diagnostics.lambda = Some(2.0 * gamma * sigma);
    Ok(fit)
}

/// Standard pivotal choice `gamma = c * Phi^{-1}(1 - alpha / (2p)) / sqrt(n)`
/// with `c = 1.1`, `alpha = 0.05`.
pub fn default_sqrt_lasso_gamma(n: usize, p: usize) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let z = Normal::standard().inverse_cdf(1.0 - 0.05 / (2.0 * p as f64));
    1.1 * z / (n as f64).sqrt()
}

/// Outcome of checking the Lasso prediction bound
/// `||X b_hat - X b*||^2 / n <= 2 lambda ||b*||_1`, valid whenever
/// `lambda >= 2 sigma ||X^T eps||_inf / n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionBoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub condition: bool,
    pub pass: bool,
}

pub fn lemma1_check(
    d: &Dataset,
    beta_star: &DVector<f64>,
    sigma: f64,
    eps: &DVector<f64>,
    lambda: f64,
    fit: &SparseFit,
) -> Result<PredictionBoundReport> {
    let (n, p) = (d.n(), d.p());
    for (what, expected, got) in [
        ("true coefficient vector", p, beta_star.len()),
        ("fitted coefficient vector", p, fit.beta.len()),
        ("noise vector", n, eps.len()),
    ] {
        if expected != got {
            return Err(Error::DimensionMismatch {
                what,
                expected,
                got,
            });
        }
    }
    let diff = d.predict(&(&fit.beta - beta_star));
    let lhs = diff.norm_squared() / n as f64;
    let rhs = 2.0 * lambda * beta_star.lp_norm(1);
    let threshold = 2.0 * sigma * d.x().tr_mul(eps).amax() / n as f64;
    let condition = lambda >= threshold;
    let pass = !condition || lhs <= rhs * (1.0 + 1e-6);
    Ok(PredictionBoundReport {
        lhs,
        rhs,
        condition,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{least_squares_refit, soft_threshold, standardize};
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_dataset(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = crate::rng::rng_from_seed(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        standardize(x, y).unwrap()
    }

    /// Orthogonal design with `X^T X = n I`: scaled columns of a Hadamard matrix.
    fn hadamard_dataset(p: usize, seed: u64) -> Dataset {
        let n = 32;
        let h = DMatrix::from_fn(n, n, |i, j| {
            if (i & j).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        });
        let x = h.columns(1, p).into_owned();
        let mut rng = crate::rng::rng_from_seed(seed);
        let y = DVector::from_fn(n, |_, _| 2.0 * rng.sample::<f64, _>(StandardNormal));
        standardize(x, y).unwrap()
    }

    /// Brute-force scalar minimization of `(1/n)||r_j - X_j b||^2 + lambda |b|`
    /// over a fine grid, for the orthogonal case where coordinates decouple.
    fn scalar_grid_min(d: &Dataset, j: usize, lambda: f64) -> f64 {
        let xj = d.x().column(j);
        let n = d.n() as f64;
        let f = |b: f64| (d.y() - xj * b).norm_squared() / n + lambda * b.abs();
        let centre = xj.dot(d.y()) / n;
        let mut best = (f(0.0), 0.0);
        let mut lo = centre - 2.0;
        let mut hi = centre + 2.0;
        for _ in 0..60 {
            let step = (hi - lo) / 200.0;
            for k in 0..=200 {
                let b = lo + step * k as f64;
                let v = f(b);
                if v < best.0 {
                    best = (v, b);
                }
            }
            lo = best.1 - step;
            hi = best.1 + step;
        }
        if f(0.0) <= best.0 {
            0.0
        } else {
            best.1
        }
    }

    #[test]
    fn zero_solution_above_lambda_max() {
        let d = random_dataset(20, 8, 1);
        let top = lambda_max(&d);
        let fit = lasso_fit(&d, top, &LassoParams::default(), &DVector::zeros(8)).unwrap();
        assert!(fit.support.is_empty());
        // Any scalar deflection from zero increases the criterion.
        for j in 0..8 {
            for delta in [-1e-3, -1e-6, 1e-6, 1e-3] {
                let mut b = DVector::zeros(8);
                b[j] = delta;
                assert!(
                    lasso_objective(&d, &b, top).unwrap()
                        >= lasso_objective(&d, &fit.beta, top).unwrap() - 1e-15
                );
            }
        }
    }

    #[test]
    fn orthogonal_design_closed_form() {
        let d = hadamard_dataset(10, 3);
        let lambda = 0.3 * lambda_max(&d);
        let fit = lasso_fit(&d, lambda, &LassoParams::default(), &DVector::zeros(10)).unwrap();
        assert!(fit.converged);
        let n = d.n() as f64;
        for j in 0..10 {
            let closed = soft_threshold(d.x().column(j).dot(d.y()) / n, lambda / 2.0);
            assert!((fit.beta[j] - closed).abs() < 1e-9);
            assert!((scalar_grid_min(&d, j, lambda) - closed).abs() < 1e-7);
        }
    }

    #[test]
    fn small_lambda_approaches_least_squares() {
        let d = random_dataset(30, 5, 5);
        let fit = lasso_fit(&d, 1e-8, &LassoParams::default(), &DVector::zeros(5)).unwrap();
        let ls = least_squares_refit(&d, &[0, 1, 2, 3, 4]).unwrap();
        assert!((fit.beta - ls).amax() < 1e-3);
    }

    #[test]
    fn kkt_holds_on_converged_fits() {
        let d = random_dataset(40, 60, 9);
        let fits = lasso_path(&d, &LassoParams::default()).unwrap();
        assert_eq!(fits.len(), DEFAULT_GRID_COUNT);
        for fit in fits.iter().filter(|f| f.converged) {
            let lambda = fit.diagnostics.lambda.unwrap();
            assert!(kkt_violation(&d, &fit.beta, lambda).unwrap() <= KKT_RTOL);
        }
    }

    #[test]
    fn sweep_objective_non_increasing() {
        let d = random_dataset(25, 40, 11);
        let fit = lasso_fit(&d, 0.05, &LassoParams::default(), &DVector::zeros(40)).unwrap();
        for w in fit.diagnostics.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
        }
    }

    #[test]
    fn single_point_grid_at_lambda_max() {
        let d = random_dataset(15, 6, 2);
        let params = LassoParams {
            lambda_grid: Some(vec![lambda_max(&d)]),
            ..Default::default()
        };
        let path = lasso_path(&d, &params).unwrap();
        assert_eq!(path.len(), 1);
        assert!(path[0].support.is_empty());
    }

    #[test]
    fn support_grows_along_orthogonal_path() {
        let d = hadamard_dataset(12, 8);
        let path = lasso_path(&d, &LassoParams::default()).unwrap();
        for w in path.windows(2) {
            assert!(w[0].support.len() <= w[1].support.len());
        }
    }

    #[test]
    fn warm_and_cold_paths_agree() {
        let d = random_dataset(5, 3, 4);
        let warm = lasso_path(&d, &LassoParams::default()).unwrap();
        let cold = lasso_path(
            &d,
            &LassoParams {
                warm_start: false,
                ..Default::default()
            },
        )
        .unwrap();
        for (a, b) in warm.iter().zip(&cold) {
            assert!((&a.beta - &b.beta).amax() < 1e-6);
        }
    }

    #[test]
    fn grid_shape() {
        let d = random_dataset(10, 4, 6);
        let top = lambda_max(&d);
        assert_eq!(default_lambda_grid(&d, 2, 0.01).unwrap(), vec![top, 0.01 * top]);
        let g = default_lambda_grid(&d, 50, 1e-3).unwrap();
        let ratio = g[1] / g[0];
        for w in g.windows(2) {
            assert!(w[1] < w[0]);
            assert!((w[1] / w[0] - ratio).abs() < 1e-12);
        }
        assert!(default_lambda_grid(&d, 1, 0.5).is_err());
        assert!(default_lambda_grid(&d, 5, 1.0).is_err());
    }

    #[test]
    fn rejects_bad_params() {
        let d = random_dataset(10, 4, 6);
        let z = DVector::zeros(4);
        assert!(lasso_fit(&d, 0.0, &LassoParams::default(), &z).is_err());
        assert!(lasso_fit(&d, 0.1, &LassoParams::default(), &DVector::zeros(3)).is_err());
        let bad = LassoParams {
            lambda_grid: Some(vec![0.1, 0.2]),
            ..Default::default()
        };
        assert!(lasso_path(&d, &bad).is_err());
    }

    #[test]
    fn max_sweeps_flags_non_convergence() {
        let d = random_dataset(30, 50, 12);
        let params = LassoParams {
            max_sweeps: 1,
            ..Default::default()
        };
        let fit = lasso_fit(&d, 1e-3, &params, &DVector::zeros(50)).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
    }

    #[test]
    fn cv_is_deterministic() {
        let d = random_dataset(30, 10, 13);
        let a = lasso_cv(&d, 5, &LassoParams::default(), 77).unwrap();
        let b = lasso_cv(&d, 5, &LassoParams::default(), 77).unwrap();
        assert_eq!(a.lambda_star, b.lambda_star);
        assert_eq!(a.cv_errors, b.cv_errors);
        assert!(a.lambda_grid.contains(&a.lambda_star));
        let min = a.cv_errors.iter().cloned().fold(f64::INFINITY, f64::min);
        let k = a.lambda_grid.iter().position(|&l| l == a.lambda_star).unwrap();
        assert_eq!(a.cv_errors[k], min);
        assert!(a.cv_errors[..k].iter().all(|&e| e > min));
    }

    #[test]
    fn cv_rejects_bad_folds() {
        let d = random_dataset(3, 2, 14);
        assert!(lasso_cv(&d, 1, &LassoParams::default(), 0).is_err());
        assert!(lasso_cv(&d, 4, &LassoParams::default(), 0).is_err());
        assert!(matches!(
            lasso_cv(&d, 2, &LassoParams::default(), 0),
            Err(Error::FoldTooSmall(1))
        ));
    }

    #[test]
    fn sqrt_lasso_zero_above_threshold() {
        let d = random_dataset(20, 6, 15);
        let n = d.n() as f64;
        let gamma = d.x().tr_mul(d.y()).amax() / (n.sqrt() * d.y().norm());
        let fit = sqrt_lasso_fit(&d, gamma * 1.0001, &LassoParams::default()).unwrap();
        assert!(fit.support.is_empty());
        // Subgradient condition at zero: ||X^T Y||_inf / (sqrt(n) ||Y||) <= gamma.
        let g0 = d.x().tr_mul(d.y()).amax() / (n.sqrt() * d.y().norm());
        assert!(g0 <= gamma * 1.0001);
    }

    #[test]
    fn sqrt_lasso_beats_other_candidates() {
        for seed in 0..5 {
            let d = random_dataset(20, 10, 100 + seed);
            let gamma = 0.3 * d.x().tr_mul(d.y()).amax() / ((20f64).sqrt() * d.y().norm());
            let fit = sqrt_lasso_fit(&d, gamma, &LassoParams::default()).unwrap();
            assert!(fit.converged);
            let cv = lasso_cv(&d, 5, &LassoParams::default(), seed).unwrap();
            let other = sqrt_lasso_objective(&d, &cv.fit.beta, gamma).unwrap();
            assert!(fit.objective <= other + 1e-8);
        }
    }

    #[test]
    fn sqrt_lasso_scale_equivariance() {
        let d = random_dataset(30, 12, 16);
        let gamma = 0.4 * d.x().tr_mul(d.y()).amax() / ((30f64).sqrt() * d.y().norm());
        let base = sqrt_lasso_fit(&d, gamma, &LassoParams::default()).unwrap();
        assert!(!base.support.is_empty());
        for c in [0.5, 2.0, 10.0] {
            let scaled = d.with_response(d.y() * c).unwrap();
            let fit = sqrt_lasso_fit(&scaled, gamma, &LassoParams::default()).unwrap();
            assert_eq!(fit.support, base.support);
            assert!((&fit.beta - &base.beta * c).amax() < 1e-4 * c.max(1.0));
        }
    }

    #[test]
    fn sqrt_lasso_exact_fit_is_reported() {
        // p > n: tiny gamma lets the Lasso interpolate.
        let d = random_dataset(5, 20, 17);
        let res = sqrt_lasso_fit(&d, 1e-9, &LassoParams::default());
        assert!(matches!(res, Err(Error::ExactFit)) || !res.unwrap().converged);
    }

    #[test]
    fn prediction_bound_branches() {
        let d = random_dataset(20, 5, 18);
        let zero = DVector::zeros(5);
        let eps = DVector::from_element(20, 0.1);
        let fit = lasso_fit(&d, 0.5, &LassoParams::default(), &zero).unwrap();
        let rep = lemma1_check(&d, &zero, 1.0, &eps, 1e-9, &fit).unwrap();
        assert!(!rep.condition && rep.pass);
        assert!(lemma1_check(&d, &DVector::zeros(4), 1.0, &eps, 0.5, &fit).is_err());
    }

    #[test]
    fn prediction_bound_zero_signal() {
        let mut rng = crate::rng::rng_from_seed(19);
        let x = DMatrix::from_fn(30, 8, |_, _| rng.sample::<f64, _>(StandardNormal));
        let eps = DVector::from_fn(30, |_, _| rng.sample::<f64, _>(StandardNormal));
        let sigma = 0.7;
        let d = standardize(x, &eps * sigma).unwrap();
        let lambda = 2.0 * sigma * d.x().tr_mul(&eps).amax() / 30.0;
        let fit = lasso_fit(&d, lambda, &LassoParams::default(), &DVector::zeros(8)).unwrap();
        let rep = lemma1_check(&d, &DVector::zeros(8), sigma, &eps, lambda, &fit).unwrap();
        assert_eq!(rep.rhs, 0.0);
        assert!(rep.lhs <= 1e-20);
        assert!(rep.condition && rep.pass);
    }
}
