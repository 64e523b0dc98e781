//! Deconvolution of multivariate densities with unknown noise.
//!
//! The estimator minimizes an empirical contrast built from the empirical
//! characteristic function of the observations over a class of analytic candidates,
//! then inverts the truncated minimizer on a frequency box.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adaptive;
pub mod bounds;
pub mod cli_io;
pub mod conjecture;
pub mod contrast;
pub mod ecf;
pub mod error;
pub mod gnoise;
pub mod io;
pub mod legendre;
pub mod minimize;
pub mod multiindex;
pub mod quadrature;
pub mod reconstruct;
pub mod runner;
pub mod scenarios;
pub mod spectral;
pub mod taylor;

pub use error::{Error, Result};
