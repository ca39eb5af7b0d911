#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use trex_core::{standardize, Dataset};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Standardized Gaussian design with response `X b + noise`.
pub fn random_dataset(n: usize, p: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let x = DMatrix::from_fn(n, p, |_, _| r.sample(StandardNormal));
    let b = gaussian_vec(p, &mut r);
    let y = &x * &b + gaussian_vec(n, &mut r) * 0.5;
    standardize(x, y).unwrap()
}

/// `||v||_q` summed in order of decreasing magnitude after dividing by the max.
pub fn lq(v: &[f64], q: u32) -> f64 {
    let m = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if m == 0.0 {
        return 0.0;
    }
    let mut terms: Vec<f64> = v.iter().map(|x| (x.abs() / m).powi(q as i32)).collect();
    terms.sort_by(|a, b| b.total_cmp(a));
    m * terms.iter().sum::<f64>().powf(1.0 / q as f64)
}

fn residual_and_corr(d: &Dataset, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (n, p) = (d.n(), d.p());
    let x = d.x();
    let r: Vec<f64> = (0..n)
        .map(|i| d.y()[i] - (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>())
        .collect();
    let c: Vec<f64> = (0..p)
        .map(|j| (0..n).map(|i| x[(i, j)] * r[i]).sum())
        .collect();
    (r, c)
}

/// `||r||^2 / (||X^T r||_q / 2)` from explicit loops.
pub fn smooth_fit(d: &Dataset, beta: &[f64], q: u32) -> f64 {
    let (r, c) = residual_and_corr(d, beta);
    r.iter().map(|v| v * v).sum::<f64>() / (0.5 * lq(&c, q))
}

/// `||r||^2 / (||X^T r||_inf / 2)` from explicit loops.
pub fn exact_fit(d: &Dataset, beta: &[f64]) -> f64 {
    let (r, c) = residual_and_corr(d, beta);
    let m = c.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    r.iter().map(|v| v * v).sum::<f64>() / (0.5 * m)
}

/// Richardson-extrapolated central difference of `f` at `x`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let central = |j: usize, h: f64| {
        let mut a = x.to_vec();
        let mut b = x.to_vec();
        a[j] += h;
        b[j] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    };
    (0..x.len())
        .map(|j| {
            let h = 1e-4 * x[j].abs().max(1.0);
            (4.0 * central(j, h / 2.0) - central(j, h)) / 3.0
        })
        .collect()
}

pub fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Columns `0..p` of the `n x n` Sylvester-Hadamard matrix (`n` a power of two):
/// `X^T X = n I`.
pub fn hadamard_columns(n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |i, j| if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}
