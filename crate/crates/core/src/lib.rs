//! Quantile-frequency analysis of multivariate time series.
//!
//! The pipeline runs from trigonometric quantile regression to the
//! quantile discrete Fourier transform ([`qdft`]), quantile series and
//! quantile auto/cross-covariances ([`qseries`]), lag-window estimates of the
//! quantile spectral matrix ([`spectral`]) and smoothing across quantile
//! levels ([`qsmooth`], [`sqr`]). [`sim`] generates the benchmark mixture
//! process and runs Monte Carlo accuracy experiments.

pub mod bspline;
pub mod error;
pub mod linalg;
pub mod lp;
pub mod qdft;
pub mod qr;
pub mod qseries;
pub mod qsmooth;
pub mod sim;
pub mod spectral;
pub mod sqr;

pub use error::{QfaError, Result};
