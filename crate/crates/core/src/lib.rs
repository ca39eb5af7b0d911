//! Tuning-free sparse linear regression.
//!
//! * [`trex`]: the TREX estimator, its smoothed objective and gradient.
//! * [`pss`]: the projected scaled sub-gradient optimizer behind it.
//! * [`btrex`]: bootstrapped TREX with majority-vote support selection.
//! * [`lasso`]: Lasso, cross-validated Lasso and Square-Root Lasso baselines.
//! * [`simbench`]: synthetic benchmark harness.
//! * [`cli`]: CSV ingestion, result files and the `trex` command line.
//!
//! All estimators work on a [`Dataset`] whose design columns have norm
//! `sqrt(n)`; see [`model::standardize`].

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod btrex;
pub mod cli;
pub mod error;
pub mod lasso;
pub mod model;
pub mod pss;
pub mod rng;
pub mod simbench;
pub mod trex;

pub use btrex::{btrex_fit, threshold_support, BtrexResult};
pub use error::{Error, Result};
pub use lasso::{lasso_cv, lasso_fit, lasso_path, sqrt_lasso_fit, CvResult, LassoParams};
pub use model::{least_squares_refit, standardize, Dataset, SparseFit};
pub use simbench::{generate_synthetic, hamming_distance, run_experiment, Method, SynthConfig};
pub use trex::{trex_fit, TrexParams};
