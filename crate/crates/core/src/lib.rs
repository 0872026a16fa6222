//! Ergodic mean estimation for wide-sense-stationary graph processes.
//!
//! A random signal on the vertices of a graph is stationary with respect to a
//! nonnegative normal shift operator `S = V Λ Vᴴ` when its mean is aligned with
//! the Perron eigenvector `v_1` and its covariance is diagonalized by `V`. From a
//! *single* realization, the graph shift average
//!
//! ```text
//! μ̂_L = (Σ_{ℓ<L} λ_1^ℓ)⁻¹ Σ_{ℓ<L} S^ℓ x
//! ```
//!
//! is an unbiased estimate of the ensemble mean, and it concentrates as the
//! graph grows on graphs whose non-Perron eigenvalues are small relative to
//! `λ_1` (Erdős–Rényi graphs, the directed cycle). On other graphs a
//! spectrally designed graph filter (the ideal low-pass projection on `v_1`) is
//! the minimum-MSE unbiased estimator.
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`graphs`] | graph families, shift operators, JSON I/O |
//! | [`spectral`] | Perron-first eigendecomposition, GFT, total variation, regime diagnostics |
//! | [`process`] | stationary processes, sampling, GMRF and log-spaced PSDs |
//! | [`estimators`] | shift average, LSI filter estimators, optimal designs |
//! | [`distributed`] | neighbor-exchange simulation of the shift average |
//! | [`bounds`] | estimator PSDs, node variances, Chebyshev bounds |
//! | [`experiments`] | seeded Monte-Carlo harness and CSV reports |
//!
//! Vertex indices are 0-based throughout the Rust API. The JSON and CSV formats
//! use 1-based indices.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod distributed;
mod error;
pub mod estimators;
pub mod experiments;
pub mod graphs;
pub mod io;
pub mod process;
pub mod seeds;
pub mod spectral;

pub use error::{Error, Result};

pub use num_complex::Complex64;
