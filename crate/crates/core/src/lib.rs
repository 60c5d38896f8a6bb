//! Quantify, test and localize non-Gaussian contributions to pairwise
//! dependence in gridded multivariate time series.
//!
//! The pipeline: load a [`grid::TimeSeriesGrid`], preprocess it
//! ([`preprocess`]), estimate correlation and binned mutual information for
//! every node pair ([`estimators`], [`analysis`]), compare against an ensemble
//! of multivariate Fourier-transform surrogates ([`surrogates`]), and reduce
//! the results to per-pair significance and per-node fields.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod grid;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod surrogates;
pub mod synth;

pub use error::{Error, Result};
