//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use trex_core::btrex::{sequential_bootstrap_sample, BtrexResult};
use trex_core::lasso::{lasso_fit, lasso_path, LassoParams, KKT_RTOL};
use trex_core::pss::{pss_minimize, PssOptions};
use trex_core::simbench::{
    generate_synthetic, run_experiment, runtime_scaling, Method, MethodSettings, SynthConfig,
    TimedMethod,
};
use trex_core::trex::{trex_fit, trex_gradient_smooth, TrexParams};
use trex_core::{standardize, Dataset};

use common::*;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let qs = [4u32, 20, 40];
    let mut worst = 0.0f64;
    for k in 0..50u64 {
        let mut r = rng(1000 + k);
        let n = r.random_range(3..=10);
        let p = r.random_range(2..=8);
        let q = qs[k as usize % 3];
        let d = random_dataset(n, p, 2000 + k);
        let beta: Vec<f64> = gaussian_vec(p, &mut r).iter().map(|v| 0.3 * v).collect();
        let analytic = trex_gradient_smooth(&d, &DVector::from_vec(beta.clone()), q).unwrap();
        let numeric = fd_gradient(|b| smooth_fit(&d, b, q), &beta);
        for j in 0..p {
            let rel = (analytic[j] - numeric[j]).abs() / numeric[j].abs().max(1e-12);
            worst = worst.max(rel);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-5 && secs < 5.0,
        format!("max relative component error {worst:.2e} over 50 instances in {secs:.2} s"),
    )
}

fn norm_sandwich() -> Outcome {
    let mut violations = 0;
    let mut worst_ratio = 0.0f64;
    for k in 0..1000u64 {
        let mut r = rng(5000 + k);
        let n = r.random_range(5..=40);
        let p = r.random_range(1..=60);
        let q = [2u32, 4, 8, 20, 40, 100][k as usize % 6];
        let d = random_dataset(n, p, 7000 + k);
        let beta = gaussian_vec(p, &mut r) * r.random_range(0.0..1.0);
        let l1 = beta.lp_norm(1);
        let smooth = trex_core::trex::trex_objective_smooth(&d, &beta, q).unwrap() - l1;
        let exact = trex_core::trex::trex_objective_exact(&d, &beta).unwrap() - l1;
        // smooth <= exact <= p^(1/q) smooth, up to rounding.
        let factor = (p as f64).powf(1.0 / q as f64);
        let tol = 1e-10;
        if smooth > exact * (1.0 + tol) || exact > factor * smooth * (1.0 + tol) {
            violations += 1;
        }
        worst_ratio = worst_ratio.max(exact / (factor * smooth));
    }
    check(
        violations == 0,
        format!("{violations} violations in 1000 pairs; max exact/(p^(1/q) smooth) = {worst_ratio:.6}"),
    )
}

fn prediction_bound_suite() -> Outcome {
    let mut passed = 0;
    let mut worst = 0.0f64;
    for k in 0..100u64 {
        let sigma = if k % 2 == 0 { 0.5 } else { 1.0 };
        let data = generate_synthetic(&SynthConfig::with_sparse_signal(50, 100, sigma, 0.0, 300 + k)).unwrap();
        let d = &data.dataset;
        let n = d.n() as f64;
        let lambda = 2.0 * sigma * d.x().tr_mul(&data.eps).amax() / n;
        let fit = lasso_fit(d, lambda, &LassoParams::default(), &DVector::zeros(d.p())).unwrap();
        let diff = d.x() * (&fit.beta - &data.beta_star);
        let lhs = diff.norm_squared() / n;
        let rhs = 2.0 * lambda * data.beta_star.lp_norm(1);
        worst = worst.max(lhs / rhs);
        if lhs <= rhs * (1.0 + 1e-6) {
            passed += 1;
        }
    }
    check(
        passed == 100,
        format!("{passed}/100 instances satisfy the prediction bound; max lhs/rhs = {worst:.4}"),
    )
}

/// `max_j` KKT residual of `||r||^2 / n + lambda ||b||_1`, relative to `lambda`.
fn kkt_residual(d: &Dataset, beta: &DVector<f64>, lambda: f64) -> f64 {
    let n = d.n() as f64;
    let r = d.y() - d.x() * beta;
    let g = d.x().tr_mul(&r) * (2.0 / n);
    (0..d.p())
        .map(|j| {
            if beta[j] != 0.0 {
                (g[j] - lambda * beta[j].signum()).abs() / lambda
            } else {
                (g[j].abs() - lambda).max(0.0) / lambda
            }
        })
        .fold(0.0, f64::max)
}

fn lasso_oracle() -> Outcome {
    let mut worst_coef = 0.0f64;
    for k in 0..40u64 {
        let mut r = rng(900 + k);
        let p = r.random_range(1..=20);
        let x = hadamard_columns(32, p);
        let y = &x * gaussian_vec(p, &mut r) + gaussian_vec(32, &mut r);
        let d = standardize(x, y).unwrap();
        let n = d.n() as f64;
        let xty = d.x().tr_mul(d.y());
        let lmax = 2.0 * xty.amax() / n;
        for frac in [0.9, 0.5, 0.2, 0.05, 0.01] {
            let lambda = frac * lmax;
            let fit = lasso_fit(&d, lambda, &LassoParams::default(), &DVector::zeros(p)).unwrap();
            for j in 0..p {
                let closed = soft(xty[j] / n, lambda / 2.0);
                worst_coef = worst_coef.max((fit.beta[j] - closed).abs());
            }
        }
    }

    let mut fits = 0;
    let mut worst_kkt = 0.0f64;
    let mut failing = 0;
    for &p in &[100usize, 500] {
        for &sigma in &[0.1, 0.5, 1.0, 3.0] {
            for &kappa in &[0.0, 0.9] {
                let d = generate_synthetic(&SynthConfig::with_sparse_signal(100, p, sigma, kappa, 11)).unwrap().dataset;
                for fit in lasso_path(&d, &LassoParams::default()).unwrap() {
                    if !fit.converged {
                        continue;
                    }
                    fits += 1;
                    let v = kkt_residual(&d, &fit.beta, fit.diagnostics.lambda.unwrap());
                    worst_kkt = worst_kkt.max(v);
                    if v > KKT_RTOL {
                        failing += 1;
                    }
                }
            }
        }
    }
    check(
        worst_coef <= 1e-6 && failing == 0 && fits > 0,
        format!(
            "orthogonal max |cd - closed form| = {worst_coef:.2e}; KKT: {failing} of {fits} converged path fits above {KKT_RTOL:e} (max {worst_kkt:.2e})"
        ),
    )
}

fn medians(records: &[trex_core::simbench::ExperimentRecord], m: Method, sigma: f64, kappa: f64) -> (f64, f64) {
    let cell: Vec<_> = records
        .iter()
        .filter(|r| r.method == m && r.config.sigma == sigma && r.config.kappa == kappa)
        .collect();
    assert_eq!(cell.len(), 11);
    let ham: Vec<f64> = cell.iter().map(|r| r.hamming as f64).collect();
    let mean_size = cell.iter().map(|r| r.support_size as f64).sum::<f64>() / cell.len() as f64;
    (median(&ham), mean_size)
}

fn desk_selection() -> Outcome {
    let start = Instant::now();
    let sigmas = [0.1, 0.5, 1.0, 3.0];
    let configs: Vec<SynthConfig> = sigmas
        .iter()
        .map(|&s| SynthConfig::with_sparse_signal(100, 100, s, 0.0, 0))
        .collect();
    let methods = [Method::Trex, Method::Btrex, Method::LassoCv];
    let recs = run_experiment(&configs, &methods, 11, 0, &MethodSettings::default()).unwrap();
    let (t01, _) = medians(&recs, Method::Trex, 0.1, 0.0);
    let (t05, _) = medians(&recs, Method::Trex, 0.5, 0.0);
    let (b05, _) = medians(&recs, Method::Btrex, 0.5, 0.0);
    let (b1, _) = medians(&recs, Method::Btrex, 1.0, 0.0);
    let lasso_sizes: Vec<f64> = sigmas
        .iter()
        .map(|&s| medians(&recs, Method::LassoCv, s, 0.0).1)
        .collect();
    let ok = t01 == 0.0 && t05 <= 1.0 && b05 == 0.0 && b1 <= 1.0 && lasso_sizes.iter().all(|&s| s > 5.0);
    check(
        ok,
        format!(
            "median Hamming: TREX s=0.1 {t01}, TREX s=0.5 {t05}, B-TREX s=0.5 {b05}, B-TREX s=1 {b1}; Lasso-CV mean sizes {lasso_sizes:?} ({:.0} s)",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn correlated_ordering() -> Outcome {
    let cfg = SynthConfig::with_sparse_signal(100, 100, 0.5, 0.9, 0);
    let recs = run_experiment(&[cfg], &[Method::Trex, Method::Btrex], 11, 0, &MethodSettings::default()).unwrap();
    let (t, _) = medians(&recs, Method::Trex, 0.5, 0.9);
    let (b, _) = medians(&recs, Method::Btrex, 0.5, 0.9);
    check(b <= t, format!("kappa=0.9 median Hamming: B-TREX {b}, TREX {t}"))
}

fn runtime_shape() -> Outcome {
    let base = SynthConfig::with_sparse_signal(100, 250, 0.5, 0.0, 0);
    let report = runtime_scaling(&[250, 500, 1000, 2000], &base, 5, &MethodSettings::default()).unwrap();
    let trex = report.medians_for(TimedMethod::Trex);
    let monotone = trex.windows(2).all(|w| w[1].1 > w[0].1);
    let et = report.exponent(TimedMethod::Trex).unwrap();
    let el = report.exponent(TimedMethod::LassoPath).unwrap();
    let times: Vec<String> = trex.iter().map(|(p, t)| format!("{p}:{t:.2e}")).collect();
    check(
        monotone && et > el,
        format!("TREX medians [{}], slopes TREX {et:.2} vs Lasso path {el:.2}", times.join(" ")),
    )
}

fn run_cli(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_trex"))
        .args(args)
        .stdout(std::process::Stdio::null())
        .status()
        .expect("failed to launch trex");
    assert!(status.success(), "trex {args:?} exited with {status}");
}

/// CSV lines with the `runtime_secs` column removed.
fn without_runtime(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "runtime_secs").unwrap();
    std::iter::once(header.join(","))
        .chain(lines.map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(col);
            f.join(",")
        }))
        .map(|s| s.replace("runtime_secs,", ""))
        .collect()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let sim = |out: &str, threads: &str| {
        run_cli(&[
            "simulate", "--p", "40", "--sigma", "0.5,1", "--reps", "3", "--seed", "17", "--b", "11",
            "--threads", threads, "--out", out,
        ])
    };
    sim(&path("a.csv"), "1");
    sim(&path("b.csv"), "1");
    sim(&path("c.csv"), "4");
    let a = without_runtime(Path::new(&path("a.csv")));
    let same_seed = a == without_runtime(Path::new(&path("b.csv")));
    let across_threads = a == without_runtime(Path::new(&path("c.csv")));

    let bt = |out: &str, threads: &str| {
        run_cli(&[
            "btrex", "--synthetic", "--p", "60", "--sigma", "1", "--seed", "5", "--threads", threads,
            "--format", "json", "--out", out,
        ])
    };
    bt(&path("b1.json"), "1");
    bt(&path("b4.json"), "4");
    let btrex_same = std::fs::read(path("b1.json")).unwrap() == std::fs::read(path("b4.json")).unwrap();
    check(
        same_seed && across_threads && btrex_same,
        format!(
            "simulate same seed identical: {same_seed}; simulate 1 vs 4 threads: {across_threads}; btrex 1 vs 4 threads byte-identical: {btrex_same}"
        ),
    )
}

fn pss_contract() -> Outcome {
    let opts = PssOptions::default();
    let mut worst = 0.0f64;
    let mut runs = 0;
    let mut non_monotone = 0;
    let mut monotone = |trace: &[f64]| {
        runs += 1;
        if trace.windows(2).any(|w| w[1] > w[0]) {
            non_monotone += 1;
        }
    };
    for k in 0..100u64 {
        let mut r = rng(40_000 + k);
        let p = r.random_range(1..=20);
        // c/2 ||b - z||^2 + t ||b||_1 is minimized by soft(z, t / c); c = 1 is the plain prox.
        let c = if k < 50 { 1.0 } else { r.random_range(0.5..5.0) };
        let z = gaussian_vec(p, &mut r) * 2.0;
        let lambda = r.random_range(0.1..2.0);
        let z2 = z.clone();
        let mut f = move |b: &DVector<f64>| {
            let diff = b - &z2;
            Ok((0.5 * c * diff.norm_squared(), diff * c))
        };
        let init = gaussian_vec(p, &mut r);
        let (fit, _) = pss_minimize(&mut f, lambda, &init, &opts).unwrap();
        for j in 0..p {
            worst = worst.max((fit.beta[j] - soft(z[j], lambda / c)).abs());
        }
        monotone(&fit.diagnostics.objective_trace);
    }
    for k in 0..30u64 {
        let sigma = [0.1, 0.5, 1.0][k as usize % 3];
        let d = generate_synthetic(&SynthConfig::with_sparse_signal(50, 80, sigma, 0.5, 60 + k)).unwrap().dataset;
        let fit = trex_fit(&d, &TrexParams::default()).unwrap();
        monotone(&fit.diagnostics.objective_trace);
    }
    check(
        worst <= 1e-8 && non_monotone == 0,
        format!("max |pss - soft threshold| = {worst:.2e}; {non_monotone} of {runs} logged runs non-monotone"),
    )
}

fn sequential_bootstrap() -> Outcome {
    let mut r = rng(77);
    let mut bad_samples = 0;
    for _ in 0..1000 {
        let n = r.random_range(2..=400);
        let target = (n as f64 * (1.0 - (-1.0f64).exp())).ceil() as usize;
        let s = sequential_bootstrap_sample(n, &mut r);
        let distinct: BTreeSet<usize> = s.iter().copied().collect();
        if distinct.len() != target || s.iter().any(|&i| i >= n) {
            bad_samples += 1;
        }
    }
    let mut bad_votes = 0;
    for _ in 0..1000 {
        let b = r.random_range(1..=60);
        let p = r.random_range(1..=30);
        let rate: f64 = r.random_range(0.0..1.0);
        let supports: Vec<Vec<usize>> = (0..b)
            .map(|_| (0..p).filter(|_| r.random_bool(rate)).collect())
            .collect();
        let expected: Vec<usize> = (0..p)
            .filter(|&j| {
                let count = supports.iter().filter(|s| s.contains(&j)).count();
                count as f64 > b as f64 / 2.0
            })
            .collect();
        if BtrexResult::aggregate(p, supports).majority_support != expected {
            bad_votes += 1;
        }
    }
    check(
        bad_samples == 0 && bad_votes == 0,
        format!("{bad_samples} of 1000 samples with a wrong distinct count; {bad_votes} of 1000 majority votes wrong"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 gradient correctness", gradient_correctness),
        ("2 norm sandwich", norm_sandwich),
        ("3 prediction bound", prediction_bound_suite),
        ("4 lasso oracle equivalence", lasso_oracle),
        ("5 desk-scale selection (n=100, p=100)", desk_selection),
        ("6 kappa=0.9 ordering", correlated_ordering),
        ("7 runtime-scaling shape", runtime_shape),
        ("8 determinism", determinism),
        ("9 pss contract", pss_contract),
        ("10 sequential bootstrap", sequential_bootstrap),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
