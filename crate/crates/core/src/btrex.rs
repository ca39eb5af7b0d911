//! B-TREX: majority vote over TREX supports fitted on sequential bootstrap
//! samples.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::rng::{child_seed, rng_from_seed};
use crate::trex::{trex_fit, TrexParams};

pub const DEFAULT_BOOTSTRAPS: usize = 31;

/// Number of distinct observations at which a sequential bootstrap stops:
/// `ceil(n (1 - 1/e))`.
pub fn sequential_bootstrap_target(n: usize) -> usize {
    ((n as f64) * (1.0 - (-1.0f64).exp())).ceil() as usize
}

/// Draws indices of `0..n` uniformly with replacement, one at a time, until
/// [`sequential_bootstrap_target`] distinct indices have been seen. Returns the
/// draws in order; the sample size is random.
pub fn sequential_bootstrap_sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    assert!(n >= 2, "sequential bootstrap needs n >= 2");
    let target = sequential_bootstrap_target(n);
    let mut seen = vec![false; n];
    let mut distinct = 0;
    let mut draws = Vec::with_capacity(n + n / 2);
    while distinct < target {
        let i = rng.random_range(0..n);
        if !seen[i] {
            seen[i] = true;
            distinct += 1;
        }
        draws.push(i);
    }
    draws
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtrexResult {
    pub b: usize,
    /// Number of bootstrap supports containing each variable.
    pub frequencies: Vec<usize>,
    /// `{ j : frequencies[j] > b / 2 }`.
    pub majority_support: Vec<usize>,
    /// Supports in bootstrap order. A fit that errored contributes an empty set.
    pub per_bootstrap_supports: Vec<Vec<usize>>,
    pub seeds: Vec<u64>,
    pub sample_sizes: Vec<usize>,
    /// Per-bootstrap optimizer convergence flags.
    pub converged: Vec<bool>,
    /// Bootstraps whose fit returned an error, with the message.
    pub failures: Vec<(usize, String)>,
}

impl BtrexResult {
    /// Builds frequencies and the strict-majority support from per-bootstrap
    /// supports.
    pub fn aggregate(p: usize, supports: Vec<Vec<usize>>) -> Self {
        let b = supports.len();
        let mut frequencies = vec![0usize; p];
        for s in &supports {
            for &j in s {
                frequencies[j] += 1;
            }
        }
        let majority_support = majority_vote(&frequencies, b);
        Self {
            b,
            frequencies,
            majority_support,
            per_bootstrap_supports: supports,
            seeds: Vec::new(),
            sample_sizes: Vec::new(),
            converged: Vec::new(),
            failures: Vec::new(),
        }
    }

    /// Selection frequencies as fractions of `b`.
    pub fn selection_fractions(&self) -> Vec<f64> {
        self.frequencies
            .iter()
            .map(|&f| f as f64 / self.b as f64)
            .collect()
    }
}

/// Variables selected in strictly more than half of `b` bootstraps.
pub fn majority_vote(frequencies: &[usize], b: usize) -> Vec<usize> {
    frequencies
        .iter()
        .enumerate()
        .filter(|(_, &f)| 2 * f > b)
        .map(|(j, _)| j)
        .collect()
}

/// B-TREX with `b` sequential bootstraps. Bootstrap `i` uses seed
/// `child_seed(master_seed, i)`; each resampled design is re-standardized before
/// the TREX fit. Bootstraps run on the current rayon pool and the result does
/// not depend on its size.
pub fn btrex_fit(
    d: &Dataset,
    b: usize,
    trex_params: &TrexParams,
    master_seed: u64,
) -> Result<BtrexResult> {
    if b == 0 {
        return Err(Error::InvalidParameter("b must be >= 1".into()));
    }
    if d.n() < 2 {
        return Err(Error::TooFewObservations {
            needed: 2,
            got: d.n(),
        });
    }
    trex_params.validate(d.p())?;
    if b.is_multiple_of(2) {
        log::warn!("even number of bootstraps ({b}): a variable in exactly b/2 supports is not selected");
    }

    let seeds: Vec<u64> = (0..b as u64).map(|i| child_seed(master_seed, i)).collect();
    let outcomes: Vec<(usize, std::result::Result<(Vec<usize>, bool), String>)> = seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = rng_from_seed(seed);
            let rows = sequential_bootstrap_sample(d.n(), &mut rng);
            let (sample, _dropped) = d.resample(&rows);
            let res = trex_fit(&sample, trex_params)
                .map(|fit| (fit.support, fit.converged))
                .map_err(|e| e.to_string());
            (rows.len(), res)
        })
        .collect();

    let mut supports = Vec::with_capacity(b);
    let mut converged = Vec::with_capacity(b);
    let mut failures = Vec::new();
    let mut sample_sizes = Vec::with_capacity(b);
    for (i, (size, res)) in outcomes.into_iter().enumerate() {
        sample_sizes.push(size);
        match res {
            Ok((s, c)) => {
                supports.push(s);
                converged.push(c);
            }
            Err(msg) => {
                supports.push(Vec::new());
                converged.push(false);
                failures.push((i, msg));
            }
        }
    }
    if failures.len() == b {
        return Err(Error::AllFitsFailed);
    }

    let mut result = BtrexResult::aggregate(d.p(), supports);
    result.seeds = seeds;
    result.sample_sizes = sample_sizes;
    result.converged = converged;
    result.failures = failures;
    Ok(result)
}

/// The `k` variables with the highest selection frequencies (ties to the
/// smaller index), returned in ascending index order.
pub fn threshold_support(result: &BtrexResult, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..result.frequencies.len()).collect();
    order.sort_by(|&a, &b| {
        result.frequencies[b]
            .cmp(&result.frequencies[a])
            .then(a.cmp(&b))
    });
    let mut out: Vec<usize> = order.into_iter().take(k).collect();
    out.sort_unstable();
    out
}
