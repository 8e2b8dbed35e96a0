//! Persistent-excitation (PE) analysis for vector-valued regressor signals.
//!
//! The crate is organised bottom-up:
//!
//! - [`signal`]: uniform time grids, sampled regressors, generators (including the
//!   `2^k` pulse-train construction) and linear transforms.
//! - [`excitation`]: prefix-summed Gram sweeps and the sliding-window PE tests,
//!   excitation-time sets and recurrence classification.
//! - [`geometry`]: subspaces, projection pairs, oblique projectors and the PE
//!   decomposition `w = U_W w_pe + U_V w_perp`.
//! - [`estimator`]: data-driven PE subspace estimation and regularity diagnostics.
//! - [`adaptive`]: the gradient adaptive law under the static error model and the
//!   prior-knowledge retention experiment.
//!
//! Signals are stored as `q × n` matrices (one column per grid point) and all
//! integrals use the trapezoidal rule.

pub mod adaptive;
pub mod error;
pub mod estimator;
pub mod excitation;
pub mod geometry;
pub mod signal;

pub use error::{Error, Result};
