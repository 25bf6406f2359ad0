//! Deterministic numerical kernels shared by all estimators.
//!
//! All operations here are pure functions of their inputs; values carry
//! no interior mutability and are freely shareable across threads.

mod linalg;
mod matrix;
mod prob;
mod rng;
mod scalar;

pub use linalg::{
    cholesky, inverse, inverse_spd, residualize, solve_least_squares, solve_with_cholesky,
    QrFactor, RANK_REL_TOL,
};
pub use matrix::RealMatrix;
pub use prob::{chi_square_sf, ln_gamma, normal_cdf, normal_quantile, regularized_gamma_q};
pub use rng::RngSeed;
pub use scalar::Real;
