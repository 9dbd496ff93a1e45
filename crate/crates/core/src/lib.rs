//! LASSO-penalized mixtures of factor analyzers (the PGMM family) fitted by a
//! two-stage AECM algorithm, with model selection by BIC and by the
//! LASSO-penalized BIC (LPBIC).
//!
//! * [`density`]: Woodbury log-densities, log-likelihood, responsibilities.
//! * [`aecm`]: penalized fitting engine.
//! * [`selection`]: parameter counts, BIC/LPBIC and grid search.
//! * [`evaluation`]: adjusted Rand index, simulator, replication harness.
//! * [`cli`]: the `lpbic` command-line front end.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aecm;
pub mod cli;
pub mod data;
pub mod density;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod model;
pub mod par;
pub mod params;
pub mod rng;
pub mod selection;

pub use aecm::{fit, resolve_lambda, FitConfig, FitResult, Init, PenaltyConfig};
pub use data::DataMatrix;
pub use density::{log_density_woodbury, log_likelihood, penalty_value, responsibilities};
pub use error::{Error, Result};
pub use evaluation::{adjusted_rand_index, replicate_experiment, simulate, SimSpec};
pub use model::{CovarianceCode, ModelDescriptor};
pub use params::{Loadings, MixtureParams, Noise, Responsibilities};
pub use selection::{compute_bic, compute_lpbic, count_free_parameters, grid_search, CriterionValue, SelectionTable};
