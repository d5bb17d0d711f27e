//! Semiparametric estimation of average causal effects with high-dimensional
//! nuisance models and sensitivity analysis to unobserved confounding.
//!
//! The pipeline: post-lasso nuisance fits ([`glmfit`]) feed an augmented
//! inverse propensity weighting estimator ([`aipw`]); the [`sensitivity`]
//! layer subtracts a confounding-bias estimate indexed by a correlation
//! parameter rho and assembles per-rho confidence intervals plus an
//! uncertainty interval over a plausible rho range; [`simulate`] houses the
//! data-generating process and Monte Carlo coverage harness; [`cli`] exposes
//! everything as a command-line tool over CSV/TOML/JSON files.

pub mod aipw;
pub mod cli;
pub mod data;
pub mod error;
pub mod glmfit;
pub mod mathfn;
pub mod sensitivity;
pub mod simulate;

pub use data::{Dataset, DesignMatrix};
pub use error::{Error, Result};
