//! Factor-augmented treatment effects (FATE): estimation of the effects
//! of unobserved component treatments behind an observed composite
//! treatment.
//!
//! The observed composite treatment (say, college attendance) aggregates
//! several unobserved varieties with their own effects. Each excluded
//! instrument's leave-one-out IV estimate is then a weighted average of
//! component effects with instrument-specific, outcome-invariant weights
//! that sum to one: stacking them gives a K×J matrix with the factor
//! structure Π = ΘΛ. This crate provides:
//!
//! - [`numerics`]: deterministic kernels (rank-revealing least squares,
//!   residualization, chi-square tails, seedable RNG), generic over the
//!   scalar type;
//! - [`iv`]: first-stage diagnostics, leave-one-out just-identified IV,
//!   the stacked Π matrix, and pooled IV-GMM;
//! - [`fate`]: constrained two-step GMM for (Θ, Λ) under the
//!   identity-block normalization with rows summing to one, the
//!   three-step special case, and identification counting;
//! - [`inference`]: moment covariances, GMM sandwich, and the Hansen
//!   overidentification test of the assumed component count;
//! - [`dgp`]: synthetic data generators with latent-data oracles for the
//!   identification theory;
//! - [`mc`]: a reproducible Monte Carlo harness.

pub mod dgp;
pub mod error;
pub mod fate;
pub mod inference;
pub mod iv;
pub mod mc;
pub mod numerics;
mod optim;

pub use error::{Error, Result};

/// Default dense matrix used by the estimators and the CLI.
pub type Matrix = numerics::RealMatrix<f64>;
/// Single-precision variant of the numeric kernels' matrix.
pub type Matrix32 = numerics::RealMatrix<f32>;
