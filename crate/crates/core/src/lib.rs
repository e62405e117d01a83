//! Local regression distribution estimators.
//!
//! Estimates a CDF, density and density derivatives by local polynomial least squares
//! on the (optionally weighted) empirical distribution function. The estimator is
//! boundary adaptive, comes with sandwich standard errors, supports minimum-distance
//! efficiency improvements through redundant regressors, and provides uniform
//! confidence bands from simulated Gaussian processes.

pub mod band;
pub mod bandwidth;
pub mod basis;
pub mod edf;
pub mod error;
pub mod fit;
pub mod kernel;
pub mod l2fit;
pub mod linalg;
pub mod mindist;
pub mod program_eval;
pub mod quad;
pub mod simulate;

pub use basis::{Basis, BasisSpec, Parity, RedundantSpec};
pub use edf::{edf_at_points, edf_eval, sort_sample, EdfValues, SortedSample};
pub use error::{Error, Result};
pub use fit::{ci_pointwise, fit_grid, fit_point, FitConfig, GridFit, PointFit};
pub use kernel::Kernel;
