//! The TREX estimator.
//!
//! TREX minimizes
//!
//! ```text
//! ||Y - X b||_2^2 / (0.5 ||X^T (Y - X b)||_inf) + ||b||_1
//! ```
//!
//! The sup-norm in the denominator is replaced by an `l_q` norm with even `q`,
//! which sandwiches it within a factor `p^(1/q)` and makes the data-fit term
//! differentiable. The smoothed criterion is minimized with [`pss_minimize`].
//!
//! `l_q` norms are evaluated with the largest magnitude factored out, so every
//! power that is formed lies in `[0, 1]` and nothing overflows for large `q`.

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{residual, Dataset, SparseFit};
use crate::pss::{pss_minimize, PssOptions, PssStop};

pub const DEFAULT_Q: u32 = 40;
pub const DEFAULT_DENOM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TrexParams {
    /// Smoothing exponent; even, in `[2, 1000]`.
    pub q: u32,
    pub opt_tol: f64,
    pub prog_tol: f64,
    /// `None` applies `max(ceil(0.2 p), 200)`.
    pub max_iter: Option<usize>,
    /// Starting point; `None` is the all-zeros vector.
    pub init: Option<DVector<f64>>,
    pub denom_floor: f64,
    /// L-BFGS correction pairs used by the optimizer.
    pub memory: usize,
    /// Extra starts at scaled unit vectors for the most correlated columns.
    /// The fit with the smallest smoothed objective wins. Zero disables.
    pub extra_starts: usize,
}

impl Default for TrexParams {
    fn default() -> Self {
        Self {
            q: DEFAULT_Q,
            opt_tol: 1e-7,
            prog_tol: 1e-9,
            max_iter: None,
            init: None,
            denom_floor: DEFAULT_DENOM_FLOOR,
            memory: 10,
            extra_starts: 0,
        }
    }
}

impl TrexParams {
    pub fn validate(&self, p: usize) -> Result<()> {
        if !self.q.is_multiple_of(2) || !(2..=1000).contains(&self.q) {
            return Err(Error::InvalidParameter(format!(
                "q must be even and in [2, 1000], got {}",
                self.q
            )));
        }
        if !(self.opt_tol > 0.0 && self.prog_tol > 0.0 && self.denom_floor > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if self.max_iter == Some(0) {
            return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
        }
        if let Some(init) = &self.init {
            if init.len() != p {
                return Err(Error::DimensionMismatch {
                    what: "initial coefficient vector",
                    expected: p,
                    got: init.len(),
                });
            }
        }
        Ok(())
    }

    pub fn max_iter_for(&self, p: usize) -> usize {
        self.max_iter.unwrap_or_else(|| default_max_iter(p))
    }

    pub fn pss_options(&self, p: usize) -> PssOptions {
        PssOptions {
            opt_tol: self.opt_tol,
            prog_tol: self.prog_tol,
            max_iter: self.max_iter_for(p),
            memory: self.memory,
        }
    }
}

/// `max(ceil(0.2 p), 200)`.
pub fn default_max_iter(p: usize) -> usize {
    p.div_ceil(5).max(200)
}

/// `l_q` norm of `v` as `(m, s)` with `||v||_q = m * s^(1/q)`, `m = ||v||_inf`
/// and `s = sum (v_j / m)^q`.
fn lq_parts(v: &DVector<f64>, q: u32) -> (f64, f64) {
    let m = v.amax();
    if m == 0.0 {
        return (0.0, 0.0);
    }
    let q = q as i32;
    let s = v.iter().map(|&a| (a / m).powi(q)).sum();
    (m, s)
}

/// Overflow-safe `l_q` norm (`q` even).
pub fn lq_norm(v: &DVector<f64>, q: u32) -> f64 {
    let (m, s) = lq_parts(v, q);
    m * s.powf(1.0 / q as f64)
}

/// Exact TREX objective.
pub fn trex_objective_exact(d: &Dataset, beta: &DVector<f64>) -> Result<f64> {
    trex_objective_exact_with_floor(d, beta, DEFAULT_DENOM_FLOOR)
}

pub fn trex_objective_exact_with_floor(
    d: &Dataset,
    beta: &DVector<f64>,
    denom_floor: f64,
) -> Result<f64> {
    let r = residual(d, beta)?;
    let corr = d.x().tr_mul(&r).amax();
    if !(corr > denom_floor) {
        return Err(Error::DegenerateDenominator(corr));
    }
    Ok(r.norm_squared() / (0.5 * corr) + beta.lp_norm(1))
}

/// Smoothed TREX objective (data-fit term with the `l_q` norm, plus `||b||_1`).
pub fn trex_objective_smooth(d: &Dataset, beta: &DVector<f64>, q: u32) -> Result<f64> {
    let mut f = SmoothTrex::new(d, q, DEFAULT_DENOM_FLOOR);
    Ok(f.data_fit(beta)? + beta.lp_norm(1))
}

/// Gradient of the smoothed data-fit term only; the `l1` part is left to the
/// optimizer.
pub fn trex_gradient_smooth(d: &Dataset, beta: &DVector<f64>, q: u32) -> Result<DVector<f64>> {
    let mut f = SmoothTrex::new(d, q, DEFAULT_DENOM_FLOOR);
    Ok(f.data_fit_and_gradient(beta)?.1)
}

/// Smoothed TREX data-fit term `2 ||r||^2 / ||X^T r||_q` as a [`SmoothObjective`].
///
/// With `v = X^T r`, `m = ||v||_inf`, `u = v / m` and `s = sum u_j^q`, the
/// gradient
///
/// ```text
/// 2 ||r||^2 X^T X v^(q-1) / ||v||_q^(q+1) - 4 v / ||v||_q
/// ```
///
/// is evaluated as `2 ||r||^2 X^T X u^(q-1) / (m^2 s^((q+1)/q)) - 4 u / s^(1/q)`.
///
/// [`SmoothObjective`]: crate::pss::SmoothObjective
pub struct SmoothTrex<'a> {
    d: &'a Dataset,
    q: u32,
    denom_floor: f64,
}

impl<'a> SmoothTrex<'a> {
    pub fn new(d: &'a Dataset, q: u32, denom_floor: f64) -> Self {
        Self { d, q, denom_floor }
    }

    fn parts(&self, beta: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, f64, f64)> {
        let r = residual(self.d, beta)?;
        let v = self.d.x().tr_mul(&r);
        let (m, s) = lq_parts(&v, self.q);
        let norm = m * s.powf(1.0 / self.q as f64);
        if !(norm > self.denom_floor) {
            return Err(Error::DegenerateDenominator(norm));
        }
        Ok((r, v, m, s))
    }

    pub fn data_fit(&mut self, beta: &DVector<f64>) -> Result<f64> {
        let (r, _, m, s) = self.parts(beta)?;
        Ok(2.0 * r.norm_squared() / (m * s.powf(1.0 / self.q as f64)))
    }

    pub fn data_fit_and_gradient(&mut self, beta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let (r, v, m, s) = self.parts(beta)?;
        let q = self.q as f64;
        let rss = r.norm_squared();
        let s_root = s.powf(1.0 / q);
        let value = 2.0 * rss / (m * s_root);

        let u = v / m;
        let powered = u.map(|a| a.powi(self.q as i32 - 1));
        let x = self.d.x();
        let gram_term = x.tr_mul(&(x * &powered));
        let a = 2.0 * rss / (m * m * s.powf((q + 1.0) / q));
        let b = 4.0 / s_root;
        let grad = gram_term * a - u * b;
        Ok((value, grad))
    }
}

impl crate::pss::SmoothObjective for SmoothTrex<'_> {
    fn value_and_gradient(&mut self, beta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self.data_fit_and_gradient(beta)
    }
}

fn fit_from(d: &Dataset, params: &TrexParams, init: &DVector<f64>) -> (SparseFit, Option<PssStop>) {
    let mut smooth = SmoothTrex::new(d, params.q, params.denom_floor);
    match pss_minimize(&mut smooth, 1.0, init, &params.pss_options(d.p())) {
        Ok((fit, stop)) => (fit, Some(stop)),
        // The starting point itself is outside the domain (e.g. Y = 0): keep it.
        Err(e) => {
            let mut fit = SparseFit::new(init.clone(), f64::NAN, 0, false);
            fit.diagnostics.message = Some(e.to_string());
            (fit, None)
        }
    }
}

/// TREX fit on a standardized dataset.
///
/// `objective` is the smoothed criterion that was minimized; the diagnostics
/// carry both the smoothed and the exact criterion at the solution.
pub fn trex_fit(d: &Dataset, params: &TrexParams) -> Result<SparseFit> {
    params.validate(d.p())?;
    let start = Instant::now();
    let zero = DVector::zeros(d.p());
    let init = params.init.as_ref().unwrap_or(&zero);
    let (mut best, _) = fit_from(d, params, init);

    if params.extra_starts > 0 {
        let n = d.n() as f64;
        let corr = d.x().tr_mul(d.y());
        let mut order: Vec<usize> = (0..d.p()).collect();
        order.sort_by(|&a, &b| corr[b].abs().total_cmp(&corr[a].abs()).then(a.cmp(&b)));
        for &j in order.iter().take(params.extra_starts) {
            let mut start_j = DVector::zeros(d.p());
            start_j[j] = corr[j] / n;
            let (fit, _) = fit_from(d, params, &start_j);
            if fit.objective < best.objective || best.objective.is_nan() {
                best = fit;
            }
        }
    }

    if best.objective.is_finite() {
        best.diagnostics.smooth_objective = Some(best.objective);
    }
    best.diagnostics.exact_objective =
        trex_objective_exact_with_floor(d, &best.beta, params.denom_floor).ok();
    best.runtime_secs = start.elapsed().as_secs_f64();
    Ok(best)
}
