//! Low-rank matrix regression via least-angle regression.
//!
//! Estimates a rank-constrained matrix `X` from linear measurements
//! `Y ≈ Φ X`. Two regimes are covered:
//!
//! * unstructured `X`: a closed-form LAR solution built from two SVDs
//!   ([`unstructured`]), together with truncated-SVD and singular-value
//!   thresholding baselines;
//! * Hankel-structured `X`: a path algorithm over a continuous dictionary
//!   of rank-1/rank-2 pole atoms ([`hankel_lar`], [`atoms`]).
//!
//! Comparison solvers (proximal nuclear-norm regularization, operator
//! splitting for the Hankel-constrained variant, Cadzow's alternating
//! projections) live in [`baselines`].

pub mod atoms;
pub mod baselines;
pub mod error;
pub mod finite_lar;
pub mod hankel_lar;
pub mod matrix;
mod simplex;
pub mod unstructured;

pub use error::{Error, Result};
pub use matrix::{HankelSpec, Matrix, Sequence, SvdFactors};
