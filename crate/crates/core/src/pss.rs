//! Projected scaled sub-gradient minimization of `smooth(b) + w * ||b||_1`.
//!
//! Two-metric projection in the Gafni-Bertsekas style: a pseudo-gradient picks
//! the minimum-norm element of the subdifferential, an L-BFGS scaling is applied
//! on the working set (non-zero variables plus zeros whose pseudo-gradient is
//! non-zero), an Armijo backtracking search enforces sufficient decrease, and
//! each trial point is projected onto the orthant of the current iterate so that
//! coordinates crossing zero land exactly on zero.

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::DVector;

use crate::error::Result;
use crate::model::SparseFit;

/// Sufficient-decrease constant of the Armijo test.
pub const ARMIJO_C: f64 = 1e-4;
/// Step halvings allowed before the line search is declared failed.
pub const MAX_BACKTRACKS: usize = 50;
const CURVATURE_EPS: f64 = 1e-10;

/// Smooth part of a composite objective: returns its value and gradient, or an
/// error when the point lies outside its domain.
pub trait SmoothObjective {
    fn value_and_gradient(&mut self, beta: &DVector<f64>) -> Result<(f64, DVector<f64>)>;
}

impl<F> SmoothObjective for F
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    fn value_and_gradient(&mut self, beta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self(beta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PssOptions {
    /// Stop when `|f_k - f_{k+1}| < opt_tol * |f_k|`.
    pub opt_tol: f64,
    /// Stop when the largest coordinate change, or the largest pseudo-gradient
    /// entry, falls below this.
    pub prog_tol: f64,
    pub max_iter: usize,
    /// Number of L-BFGS correction pairs kept.
    pub memory: usize,
}

impl Default for PssOptions {
    fn default() -> Self {
        Self {
            opt_tol: 1e-7,
            prog_tol: 1e-9,
            max_iter: 500,
            memory: 10,
        }
    }
}

/// Why [`pss_minimize`] stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PssStop {
    FirstOrderOptimal,
    RelativeProgress,
    ParameterChange,
    MaxIter,
    LineSearchFailure,
}

impl PssStop {
    pub fn converged(self) -> bool {
        matches!(
            self,
            PssStop::FirstOrderOptimal | PssStop::RelativeProgress | PssStop::ParameterChange
        )
    }
}

/// Minimum-norm subgradient of `smooth + w ||.||_1` given the smooth gradient.
pub fn pseudo_gradient(beta: &DVector<f64>, grad: &DVector<f64>, l1_weight: f64) -> DVector<f64> {
    beta.zip_map(grad, |b, g| {
        if b > 0.0 {
            g + l1_weight
        } else if b < 0.0 {
            g - l1_weight
        } else if g < -l1_weight {
            g + l1_weight
        } else if g > l1_weight {
            g - l1_weight
        } else {
            0.0
        }
    })
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

struct Lbfgs {
    pairs: VecDeque<(DVector<f64>, DVector<f64>)>,
    memory: usize,
}

impl Lbfgs {
    fn push(&mut self, s: DVector<f64>, y: DVector<f64>) {
        if s.dot(&y) > CURVATURE_EPS {
            if self.pairs.len() == self.memory {
                self.pairs.pop_front();
            }
            self.pairs.push_back((s, y));
        }
    }

    /// `-H v` restricted to `mask`, using the two-loop recursion on the masked
    /// coordinates only.
    fn direction(&self, v: &DVector<f64>, mask: &[bool]) -> Option<DVector<f64>> {
        let masked = |x: &DVector<f64>| {
            DVector::from_iterator(x.len(), x.iter().zip(mask).map(|(&a, &m)| if m { a } else { 0.0 }))
        };
        let pairs: Vec<(DVector<f64>, DVector<f64>, f64)> = self
            .pairs
            .iter()
            .filter_map(|(s, y)| {
                let (s, y) = (masked(s), masked(y));
                let sy = s.dot(&y);
                (sy > CURVATURE_EPS).then(|| (s, y, 1.0 / sy))
            })
            .collect();
        let (s_last, y_last, _) = pairs.last()?;
        let mut q = masked(v);
        let mut alpha = vec![0.0; pairs.len()];
        for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
            alpha[k] = rho * s.dot(&q);
            q.axpy(-alpha[k], y, 1.0);
        }
        q *= s_last.dot(y_last) / y_last.norm_squared();
        for (k, (s, y, rho)) in pairs.iter().enumerate() {
            let b = rho * y.dot(&q);
            q.axpy(alpha[k] - b, s, 1.0);
        }
        Some(-q)
    }
}

/// Minimizes `smooth(b) + l1_weight * ||b||_1` from `init`.
///
/// The returned fit carries the full composite objective after every accepted
/// iterate in `diagnostics.objective_trace`. A failed line search (no
/// sufficient decrease after [`MAX_BACKTRACKS`] halvings) returns the current
/// iterate with `converged = false`; so does hitting `max_iter`. Trial points
/// at which `smooth` errors are treated as failed trials.
pub fn pss_minimize<F: SmoothObjective>(
    smooth: &mut F,
    l1_weight: f64,
    init: &DVector<f64>,
    opts: &PssOptions,
) -> Result<(SparseFit, PssStop)> {
    let start = Instant::now();
    let p = init.len();
    let mut w = init.clone();
    let (fs, mut g) = smooth.value_and_gradient(&w)?;
    let mut f = fs + l1_weight * w.lp_norm(1);
    let mut trace = vec![f];
    let mut lbfgs = Lbfgs {
        pairs: VecDeque::with_capacity(opts.memory),
        memory: opts.memory.max(1),
    };

    let mut iterations = 0;
    let stop = loop {
        let pg = pseudo_gradient(&w, &g, l1_weight);
        if pg.amax() <= opts.prog_tol {
            break PssStop::FirstOrderOptimal;
        }
        if iterations >= opts.max_iter {
            break PssStop::MaxIter;
        }
        iterations += 1;

        let working: Vec<bool> = (0..p).map(|j| w[j] != 0.0 || pg[j] != 0.0).collect();
        let steepest = || {
            let scale = (1.0 / pg.lp_norm(1)).min(1.0);
            -&pg * scale
        };
        let mut d = lbfgs.direction(&pg, &working).unwrap_or_else(steepest);
        // Keep only components that agree in sign with the negative pseudo-gradient.
        for j in 0..p {
            if !working[j] || d[j] * pg[j] >= 0.0 {
                d[j] = 0.0;
            }
        }
        if d.iter().all(|&v| v == 0.0) {
            d = steepest();
        }

        let orthant: Vec<f64> = (0..p)
            .map(|j| if w[j] != 0.0 { sign(w[j]) } else { -sign(pg[j]) })
            .collect();

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACKS {
            let mut trial = &w + &d * t;
            for j in 0..p {
                if sign(trial[j]) != orthant[j] {
                    trial[j] = 0.0;
                }
            }
            if let Ok((fs_new, g_new)) = smooth.value_and_gradient(&trial) {
                let f_new = fs_new + l1_weight * trial.lp_norm(1);
                let decrease = pg.dot(&(&trial - &w));
                if f_new.is_finite() && f_new <= f + ARMIJO_C * decrease {
                    accepted = Some((trial, f_new, g_new));
                    break;
                }
            }
            t *= 0.5;
        }

        let Some((w_new, f_new, g_new)) = accepted else {
            break PssStop::LineSearchFailure;
        };
        let s = &w_new - &w;
        let max_change = s.amax();
        lbfgs.push(s, &g_new - &g);
        let progress = (f - f_new).abs();
        let f_old = f;
        w = w_new;
        f = f_new;
        g = g_new;
        trace.push(f);

        if max_change < opts.prog_tol {
            break PssStop::ParameterChange;
        }
        if progress < opts.opt_tol * f_old.abs() {
            break PssStop::RelativeProgress;
        }
    };

    let mut fit = SparseFit::new(w, f, iterations, stop.converged());
    fit.runtime_secs = start.elapsed().as_secs_f64();
    fit.diagnostics.objective_trace = trace;
    if !stop.converged() {
        fit.diagnostics.message = Some(format!("{stop:?}"));
    }
    Ok((fit, stop))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::soft_threshold;
    use nalgebra::DMatrix;

    fn prox_quadratic(b: DVector<f64>) -> impl FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)> {
        move |x: &DVector<f64>| {
            let diff = x - &b;
            Ok((0.5 * diff.norm_squared(), diff))
        }
    }

    #[test]
    fn pseudo_gradient_cases() {
        let beta = DVector::from_vec(vec![1.0, -1.0, 0.0, 0.0, 0.0]);
        let grad = DVector::from_vec(vec![0.5, 0.5, -3.0, 3.0, 0.2]);
        let pg = pseudo_gradient(&beta, &grad, 1.0);
        assert_eq!(pg.as_slice(), &[1.5, -0.5, -2.0, 2.0, 0.0]);
    }

    #[test]
    fn soft_threshold_fixed_point() {
        let b = DVector::from_vec(vec![3.0, -0.2, 0.7, -5.0, 0.0, 1.0]);
        let mut f = prox_quadratic(b.clone());
        let (fit, stop) =
            pss_minimize(&mut f, 0.5, &DVector::zeros(6), &PssOptions::default()).unwrap();
        assert!(stop.converged(), "{stop:?}");
        for j in 0..6 {
            assert!((fit.beta[j] - soft_threshold(b[j], 0.5)).abs() < 1e-8);
        }
        assert_eq!(fit.support, vec![0, 2, 3, 5]);
    }

    #[test]
    fn unpenalized_quadratic_matches_linear_solve() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let c = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let a2 = a.clone();
        let c2 = c.clone();
        let mut f = move |x: &DVector<f64>| {
            let ax = &a2 * x;
            Ok((0.5 * x.dot(&ax) - c2.dot(x), ax - &c2))
        };
        let opts = PssOptions {
            opt_tol: 1e-14,
            ..Default::default()
        };
        let (fit, _) = pss_minimize(&mut f, 0.0, &DVector::zeros(3), &opts).unwrap();
        let exact = a.lu().solve(&c).unwrap();
        assert!((fit.beta - exact).amax() < 1e-6);
    }

    #[test]
    fn trace_is_monotone() {
        let b = DVector::from_fn(30, |i, _| ((i * 7919) % 13) as f64 - 6.0);
        let mut f = move |x: &DVector<f64>| {
            let diff = x - &b;
            let w = DVector::from_fn(30, |i, _| 1.0 + i as f64 / 3.0);
            Ok((0.5 * diff.component_mul(&w).dot(&diff), diff.component_mul(&w)))
        };
        let (fit, _) = pss_minimize(&mut f, 2.0, &DVector::zeros(30), &PssOptions::default()).unwrap();
        for w in fit.diagnostics.objective_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn max_iter_flags_non_convergence() {
        let b = DVector::from_vec(vec![3.0, -2.0, 1.5]);
        let mut f = prox_quadratic(b);
        let opts = PssOptions {
            max_iter: 1,
            ..Default::default()
        };
        let (fit, stop) = pss_minimize(&mut f, 0.1, &DVector::zeros(3), &opts).unwrap();
        assert_eq!(stop, PssStop::MaxIter);
        assert!(!fit.converged);
    }

    #[test]
    fn line_search_failure_keeps_iterate() {
        // Smooth part undefined everywhere except the starting point.
        let mut calls = 0;
        let mut f = |x: &DVector<f64>| {
            calls += 1;
            if calls == 1 {
                Ok((0.0, DVector::from_element(x.len(), -5.0)))
            } else {
                Err(crate::error::Error::DegenerateDenominator(0.0))
            }
        };
        let init = DVector::zeros(2);
        let (fit, stop) = pss_minimize(&mut f, 1.0, &init, &PssOptions::default()).unwrap();
        assert_eq!(stop, PssStop::LineSearchFailure);
        assert_eq!(fit.beta, init);
        assert!(!fit.converged);
    }
}
