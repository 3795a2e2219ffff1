//! Adaptive Cook's distance for influence diagnostics in low- and
//! high-dimensional regression.
//!
//! The pipeline standardizes the predictors, fits a penalized kernel-weighted
//! local linear model at every observation, stacks the local estimates into a
//! gradient matrix and measures how far each local estimate sits from the
//! leading right singular direction of that matrix.

pub mod cli;
pub mod influence;
pub mod io;
pub mod classic;
pub mod data;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod penalized;
pub mod sim;

pub use influence::{run_acd, AcdOptions, CutoffRule, InfluenceReport};
pub use classic::{cooks_distance, ols, CookScale, OlsFit};
pub use data::{build_sigma, cholesky_sample, standardize, CorrelationSpec, Dataset, StandardizedData};
pub use error::{AcdError, Result};
pub use kernel::{estimate_tau, weights_at, WeightVector};
pub use penalized::{local_fit, scad_threshold, soft_threshold, Folds, LocalFit, PenaltyFamily, PenaltySpec};
