//! Synthetic benchmark harness: equicorrelated Gaussian designs, selection
//! metrics, the method-by-configuration experiment matrix, K-fold prediction
//! error and runtime scaling.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::btrex::{btrex_fit, DEFAULT_BOOTSTRAPS};
use crate::error::{Error, Result};
use crate::lasso::{default_sqrt_lasso_gamma, lasso_cv, lasso_path, sqrt_lasso_fit, LassoParams};
use crate::model::{least_squares_refit, standardize, support_of, Dataset};
use crate::rng::{child_seed, combine_seeds, complement, kfold_partition, rng_from_seed};
use crate::trex::{trex_fit, TrexParams};

pub const FULL_SCALE_SIGMAS: [f64; 4] = [0.1, 0.5, 1.0, 3.0];
pub const FULL_SCALE_KAPPAS: [f64; 3] = [0.0, 0.5, 0.9];
pub const FULL_SCALE_REPS: usize = 51;
pub const DESK_REPS: usize = 11;

/// One synthetic design: `n` rows from `N(0, (1 - kappa) I + kappa 11^T)`,
/// columns rescaled to norm `sqrt(n)`, `Y = X beta* + sigma eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub p: usize,
    pub beta_star: Vec<f64>,
    pub sigma: f64,
    pub kappa: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::with_sparse_signal(100, 500, 0.5, 0.0, 0)
    }
}

impl SynthConfig {
    /// `beta* = (1, 1, 1, 1, 1, 0, ..., 0)` (fewer ones when `p < 5`).
    pub fn with_sparse_signal(n: usize, p: usize, sigma: f64, kappa: f64, seed: u64) -> Self {
        let beta_star = (0..p).map(|j| if j < 5 { 1.0 } else { 0.0 }).collect();
        Self {
            n,
            p,
            beta_star,
            sigma,
            kappa,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p < 1 {
            return Err(Error::InvalidParameter(format!(
                "need n >= 2 and p >= 1, got n = {}, p = {}",
                self.n, self.p
            )));
        }
        if self.beta_star.len() != self.p {
            return Err(Error::DimensionMismatch {
                what: "beta_star length",
                expected: self.p,
                got: self.beta_star.len(),
            });
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidParameter("sigma must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.kappa) {
            return Err(Error::InvalidParameter("kappa must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn true_support(&self) -> Vec<usize> {
        support_of(&DVector::from_column_slice(&self.beta_star))
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub beta_star: DVector<f64>,
    pub eps: DVector<f64>,
    pub sigma: f64,
}

impl SyntheticData {
    /// FNV-1a over the bit patterns of design and response.
    pub fn dataset_hash(&self) -> u64 {
        dataset_hash(&self.dataset)
    }
}

pub fn dataset_hash(d: &Dataset) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in d.x().iter().chain(d.y().iter()) {
        for byte in v.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Draws a dataset for `cfg`. Rows use the exact factorization
/// `x = sqrt(1 - kappa) z + sqrt(kappa) g 1` with `z ~ N(0, I_p)`, `g ~ N(0, 1)`.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let (n, p) = (cfg.n, cfg.p);
    let mut rng = rng_from_seed(cfg.seed);
    let a = (1.0 - cfg.kappa).sqrt();
    let c = cfg.kappa.sqrt();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let g: f64 = rng.sample(StandardNormal);
        for j in 0..p {
            let z: f64 = rng.sample(StandardNormal);
            x[(i, j)] = a * z + c * g;
        }
    }
    let eps = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let design = standardize(x, DVector::zeros(n))?;
    let beta_star = DVector::from_column_slice(&cfg.beta_star);
    let y = design.predict(&beta_star) + &eps * cfg.sigma;
    let dataset = design.with_response(y)?;
    Ok(SyntheticData {
        dataset,
        beta_star,
        eps,
        sigma: cfg.sigma,
    })
}

/// `|est Δ truth|`. Both inputs must be sorted and free of duplicates.
pub fn hamming_distance(est_support: &[usize], true_support: &[usize], p: usize) -> usize {
    debug_assert!(est_support.iter().chain(true_support).all(|&j| j < p));
    let (mut i, mut j, mut dist) = (0, 0, 0);
    while i < est_support.len() && j < true_support.len() {
        match est_support[i].cmp(&true_support[j]) {
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => {
                dist += 1;
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                dist += 1;
                j += 1;
            }
        }
    }
    dist + (est_support.len() - i) + (true_support.len() - j)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "lasso-cv")]
    LassoCv,
    #[serde(rename = "trex")]
    Trex,
    #[serde(rename = "btrex")]
    Btrex,
    #[serde(rename = "sqrt-lasso")]
    SqrtLasso,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::LassoCv, Method::Trex, Method::Btrex, Method::SqrtLasso];

    pub fn name(self) -> &'static str {
        match self {
            Method::LassoCv => "lasso-cv",
            Method::Trex => "trex",
            Method::Btrex => "btrex",
            Method::SqrtLasso => "sqrt-lasso",
        }
    }

    /// Stable per-method word used to derive method seeds.
    pub fn tag(self) -> u64 {
        match self {
            Method::LassoCv => 1,
            Method::Trex => 2,
            Method::Btrex => 3,
            Method::SqrtLasso => 4,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lasso-cv" | "lassocv" => Ok(Method::LassoCv),
            "trex" => Ok(Method::Trex),
            "btrex" | "b-trex" => Ok(Method::Btrex),
            "sqrt-lasso" | "sqrtlasso" => Ok(Method::SqrtLasso),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

/// Solver settings shared by every method in an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSettings {
    pub trex: TrexParams,
    pub lasso: LassoParams,
    /// Bootstraps for B-TREX.
    pub b: usize,
    /// Folds for Lasso-CV.
    pub folds: usize,
    /// Square-Root Lasso level; `None` uses [`default_sqrt_lasso_gamma`].
    pub sqrt_gamma: Option<f64>,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            trex: TrexParams::default(),
            lasso: LassoParams::default(),
            b: DEFAULT_BOOTSTRAPS,
            folds: 10,
            sqrt_gamma: None,
        }
    }
}

/// What a method produced on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub support: Vec<usize>,
    /// Coefficients in the dataset's scale. B-TREX has none of its own; it
    /// reports the least-squares refit on its majority support when that exists.
    pub beta: Option<DVector<f64>>,
    pub converged: bool,
    pub runtime_secs: f64,
}

pub fn run_method(
    method: Method,
    d: &Dataset,
    settings: &MethodSettings,
    seed: u64,
) -> Result<MethodOutcome> {
    let start = Instant::now();
    let (support, beta, converged) = match method {
        Method::Trex => {
            let fit = trex_fit(d, &settings.trex)?;
            (fit.support, Some(fit.beta), fit.converged)
        }
        Method::LassoCv => {
            let cv = lasso_cv(d, settings.folds.min(d.n()), &settings.lasso, seed)?;
            (cv.fit.support, Some(cv.fit.beta), cv.fit.converged)
        }
        Method::SqrtLasso => {
            let gamma = settings
                .sqrt_gamma
                .unwrap_or_else(|| default_sqrt_lasso_gamma(d.n(), d.p()));
            let fit = sqrt_lasso_fit(d, gamma, &settings.lasso)?;
            (fit.support, Some(fit.beta), fit.converged)
        }
        Method::Btrex => {
            let res = btrex_fit(d, settings.b, &settings.trex, seed)?;
            let beta = least_squares_refit(d, &res.majority_support).ok();
            let converged = res.failures.is_empty();
            (res.majority_support, beta, converged)
        }
    };
    Ok(MethodOutcome {
        support,
        beta,
        converged,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub method: Method,
    pub config: SynthConfig,
    pub repetition: usize,
    pub hamming: usize,
    pub support_size: usize,
    pub runtime_secs: f64,
    pub converged: bool,
    /// Hash of the dataset the method saw; equal across methods of one repetition.
    pub dataset_hash: u64,
}

/// Seed of the dataset for (`config`, `repetition`) under `master_seed`.
pub fn dataset_seed(master_seed: u64, cfg: &SynthConfig, repetition: usize) -> u64 {
    combine_seeds(&[
        master_seed,
        cfg.seed,
        cfg.n as u64,
        cfg.p as u64,
        cfg.sigma.to_bits(),
        cfg.kappa.to_bits(),
        repetition as u64,
    ])
}

/// Runs every method on one fresh dataset per (config, repetition). Records
/// come back ordered by config, then repetition, then method. A failing method
/// yields a record with `converged = false` and an empty support.
pub fn run_experiment(
    configs: &[SynthConfig],
    methods: &[Method],
    reps: usize,
    master_seed: u64,
    settings: &MethodSettings,
) -> Result<Vec<ExperimentRecord>> {
    if reps < 1 {
        return Err(Error::InvalidParameter("reps must be >= 1".into()));
    }
    for cfg in configs {
        cfg.validate()?;
    }
    let cells: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..reps).map(move |r| (c, r)))
        .collect();

    let nested: Vec<Vec<ExperimentRecord>> = cells
        .par_iter()
        .map(|&(c, rep)| -> Result<Vec<ExperimentRecord>> {
            let seed = dataset_seed(master_seed, &configs[c], rep);
            let cfg = SynthConfig {
                seed,
                ..configs[c].clone()
            };
            let data = generate_synthetic(&cfg)?;
            let hash = data.dataset_hash();
            let truth = configs[c].true_support();
            Ok(methods
                .iter()
                .map(|&m| {
                    let outcome = run_method(m, &data.dataset, settings, child_seed(seed, m.tag()));
                    let (support, runtime, converged) = match outcome {
                        Ok(o) => (o.support, o.runtime_secs, o.converged),
                        Err(e) => {
                            log::warn!("{m} failed on config {c} repetition {rep}: {e}");
                            (Vec::new(), 0.0, false)
                        }
                    };
                    ExperimentRecord {
                        method: m,
                        config: configs[c].clone(),
                        repetition: rep,
                        hamming: hamming_distance(&support, &truth, cfg.p),
                        support_size: support.len(),
                        runtime_secs: runtime,
                        converged,
                        dataset_hash: hash,
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(nested.into_iter().flatten().collect())
}

/// Mean and standard deviation of one (method, config) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub method: Method,
    pub n: usize,
    pub p: usize,
    pub sigma: f64,
    pub kappa: f64,
    pub reps: usize,
    pub mean_hamming: f64,
    pub sd_hamming: f64,
    pub median_hamming: f64,
    pub mean_support_size: f64,
    pub sd_support_size: f64,
    pub mean_runtime_secs: f64,
    pub sd_runtime_secs: f64,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups records by method and configuration, in order of first appearance.
pub fn summarize(records: &[ExperimentRecord]) -> Vec<CellSummary> {
    let mut keys: Vec<(Method, &SynthConfig)> = Vec::new();
    for r in records {
        if !keys.iter().any(|(m, c)| *m == r.method && *c == &r.config) {
            keys.push((r.method, &r.config));
        }
    }
    keys.into_iter()
        .map(|(m, cfg)| {
            let cell: Vec<&ExperimentRecord> = records
                .iter()
                .filter(|r| r.method == m && &r.config == cfg)
                .collect();
            let ham: Vec<f64> = cell.iter().map(|r| r.hamming as f64).collect();
            let sup: Vec<f64> = cell.iter().map(|r| r.support_size as f64).collect();
            let rt: Vec<f64> = cell.iter().map(|r| r.runtime_secs).collect();
            let (mean_hamming, sd_hamming) = mean_sd(&ham);
            let (mean_support_size, sd_support_size) = mean_sd(&sup);
            let (mean_runtime_secs, sd_runtime_secs) = mean_sd(&rt);
            CellSummary {
                method: m,
                n: cfg.n,
                p: cfg.p,
                sigma: cfg.sigma,
                kappa: cfg.kappa,
                reps: cell.len(),
                mean_hamming,
                sd_hamming,
                median_hamming: median(&ham),
                mean_support_size,
                sd_support_size,
                mean_runtime_secs,
                sd_runtime_secs,
            }
        })
        .collect()
}

/// Methods timed by [`runtime_scaling`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TimedMethod {
    #[serde(rename = "trex")]
    Trex,
    /// A single Lasso path on the default grid, without cross-validation.
    #[serde(rename = "lasso-path")]
    LassoPath,
}

impl TimedMethod {
    pub fn name(self) -> &'static str {
        match self {
            TimedMethod::Trex => "trex",
            TimedMethod::LassoPath => "lasso-path",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRecord {
    pub method: TimedMethod,
    pub p: usize,
    pub repetition: usize,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub records: Vec<TimingRecord>,
    /// `(method, p, median runtime)` in grid order.
    pub medians: Vec<(TimedMethod, usize, f64)>,
    /// Log-log least-squares slope per method; `None` for fewer than two grid points.
    pub exponents: Vec<(TimedMethod, Option<f64>)>,
}

impl ScalingReport {
    pub fn medians_for(&self, m: TimedMethod) -> Vec<(usize, f64)> {
        self.medians
            .iter()
            .filter(|(mm, _, _)| *mm == m)
            .map(|&(_, p, t)| (p, t))
            .collect()
    }

    pub fn exponent(&self, m: TimedMethod) -> Option<f64> {
        self.exponents.iter().find(|(mm, _)| *mm == m).and_then(|e| e.1)
    }
}

/// Slope of the least-squares line through `(ln x, ln y)`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Times TREX and a plain Lasso path over `p_grid`, sequentially. `base_cfg`
/// supplies `n`, `sigma`, `kappa` and the seed; `beta*` is the five-ones signal.
pub fn runtime_scaling(
    p_grid: &[usize],
    base_cfg: &SynthConfig,
    reps: usize,
    settings: &MethodSettings,
) -> Result<ScalingReport> {
    if reps < 1 {
        return Err(Error::InvalidParameter("reps must be >= 1".into()));
    }
    if p_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("p grid must be increasing".into()));
    }
    let mut records = Vec::new();
    let mut medians = Vec::new();
    let methods = [TimedMethod::Trex, TimedMethod::LassoPath];
    for &p in p_grid {
        let mut times: Vec<Vec<f64>> = vec![Vec::new(); methods.len()];
        for rep in 0..reps {
            let template = SynthConfig::with_sparse_signal(
                base_cfg.n,
                p,
                base_cfg.sigma,
                base_cfg.kappa,
                base_cfg.seed,
            );
            let cfg = SynthConfig {
                seed: dataset_seed(base_cfg.seed, &template, rep),
                ..template
            };
            let data = generate_synthetic(&cfg)?;
            for (k, &m) in methods.iter().enumerate() {
                let start = Instant::now();
                match m {
                    TimedMethod::Trex => {
                        trex_fit(&data.dataset, &settings.trex)?;
                    }
                    TimedMethod::LassoPath => {
                        lasso_path(&data.dataset, &settings.lasso)?;
                    }
                }
                let secs = start.elapsed().as_secs_f64();
                times[k].push(secs);
                records.push(TimingRecord {
                    method: m,
                    p,
                    repetition: rep,
                    runtime_secs: secs,
                });
            }
        }
        for (k, &m) in methods.iter().enumerate() {
            medians.push((m, p, median(&times[k])));
        }
    }
    let exponents = methods
        .iter()
        .map(|&m| {
            let pts: Vec<(f64, f64)> = medians
                .iter()
                .filter(|(mm, _, _)| *mm == m)
                .map(|&(_, p, t)| (p as f64, t))
                .collect();
            (m, log_log_slope(&pts))
        })
        .collect();
    Ok(ScalingReport {
        records,
        medians,
        exponents,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionErrorReport {
    /// Mean over successful folds of the held-out mean squared error.
    pub mean_error: f64,
    pub median_support_size: f64,
    pub fold_errors: Vec<Option<f64>>,
    pub support_sizes: Vec<Option<usize>>,
    /// Folds whose fit failed and were left out of the mean.
    pub excluded: usize,
}

/// K-fold (LOOCV with `folds = n`) prediction error of `method`.
///
/// Each training block is re-standardized before fitting; coefficients are
/// mapped back to the scale of `d` to predict the held-out rows. With `refit`
/// the selected support is refitted by least squares first. B-TREX always
/// predicts with its least-squares refit.
pub fn kfold_prediction_error(
    d: &Dataset,
    method: Method,
    folds: usize,
    refit: bool,
    seed: u64,
    settings: &MethodSettings,
) -> Result<PredictionErrorReport> {
    let n = d.n();
    if folds < 2 || folds > n {
        return Err(Error::InvalidParameter(format!(
            "folds must lie in [2, n = {n}], got {folds}"
        )));
    }
    let blocks = kfold_partition(n, folds, seed);
    let per_fold: Vec<Result<(f64, usize)>> = blocks
        .par_iter()
        .enumerate()
        .map(|(k, held_out)| {
            let train_rows = complement(n, held_out);
            if train_rows.len() < 2 {
                return Err(Error::FoldTooSmall(train_rows.len()));
            }
            let (train, _) = d.resample(&train_rows);
            let outcome = run_method(method, &train, settings, child_seed(seed, k as u64))?;
            let beta = if refit || method == Method::Btrex {
                least_squares_refit(&train, &outcome.support)?
            } else {
                outcome.beta.ok_or(Error::SingularSubmatrix(f64::INFINITY))?
            };
            let beta_d = train.to_raw_scale(&beta);
            let test = d.select_rows(held_out);
            let err = (test.y() - test.predict(&beta_d)).norm_squared() / test.n() as f64;
            Ok((err, outcome.support.len()))
        })
        .collect();

    let fold_errors: Vec<Option<f64>> = per_fold.iter().map(|r| r.as_ref().ok().map(|v| v.0)).collect();
    let support_sizes: Vec<Option<usize>> = per_fold.iter().map(|r| r.as_ref().ok().map(|v| v.1)).collect();
    let ok: Vec<(f64, usize)> = per_fold.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    if ok.is_empty() {
        return Err(per_fold.into_iter().find_map(|r| r.err()).unwrap_or(Error::AllFitsFailed));
    }
    let mean_error = ok.iter().map(|v| v.0).sum::<f64>() / ok.len() as f64;
    let sizes: Vec<f64> = ok.iter().map(|v| v.1 as f64).collect();
    Ok(PredictionErrorReport {
        mean_error,
        median_support_size: median(&sizes),
        excluded: folds - ok.len(),
        fold_errors,
        support_sizes,
    })
}
