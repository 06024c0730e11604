//! Certified-robustness toolkit for ensembles of small feed-forward classifiers.
//!
//! The crate covers the full pipeline:
//!
//! * [`numstats`]: special functions, Clopper-Pearson bounds and reproducible
//!   Gaussian sampling.
//! * [`autodiff`]: a reverse-mode graph engine whose primitive set is closed
//!   under differentiation, so an input-gradient can itself be differentiated
//!   with respect to model parameters.
//! * [`model`]: softmax MLP classifiers.
//! * [`ensemble`]: weighted (WE) and max-margin (MME) ensembles together with
//!   the gradient/margin robustness conditions.
//! * [`smoothing`]: randomized-smoothing certification (ensemble-before and
//!   ensemble-after smoothing), soft smoothing and smoothness probes.
//! * [`training`]: diversity-regularized training and baseline regularizers.
//! * [`statsim`]: statistical robustness bounds and simulations.
//! * [`data`]: synthetic generators and the IDX reader.

pub mod autodiff;
pub mod data;
pub mod ensemble;
mod error;
pub mod fmt;
pub mod model;
pub mod numstats;
pub mod smoothing;
pub mod statsim;
pub mod training;

pub use error::{Error, Result};
