//! Three-step estimation for the K=3, L=2 case: read the first two
//! component effects off the defining instruments' just-identified
//! estimates at an anchor outcome, solve the third instrument's weight
//! from that outcome, then carry the weight to every other outcome.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::iv::PiMatrix;
use crate::numerics::RealMatrix;

type Matrix = RealMatrix<f64>;

#[derive(Clone, Debug, Serialize)]
pub struct ThreeStepFit {
    /// Weight the third instrument places on component 1; the component-2
    /// weight is its complement.
    pub theta_31: f64,
    /// Component effects per outcome (2×J).
    pub lambda: Matrix,
    /// Third-row fit residuals π̂_3j - (θ̂ λ̂_1j + (1-θ̂) λ̂_2j); a
    /// specification diagnostic, zero at the anchor by construction.
    pub row3_residuals: Vec<f64>,
    pub anchor: usize,
}

/// Solves the exactly identified anchor system
///   π̂_1j* = λ̂_1j*, π̂_2j* = λ̂_2j*,
///   π̂_3j* = θ̂ λ̂_1j* + (1-θ̂) λ̂_2j*
/// and propagates θ̂ to the remaining outcomes.
pub fn three_step_fit(pi: &PiMatrix, anchor: usize) -> Result<ThreeStepFit> {
    let k = pi.estimates.rows();
    let j = pi.estimates.cols();
    if k != 3 {
        return Err(Error::DimensionMismatch(format!(
            "three-step estimation needs exactly 3 instruments, got {k}"
        )));
    }
    if j < 2 {
        return Err(Error::DimensionMismatch(format!(
            "three-step estimation needs at least 2 outcomes, got {j}"
        )));
    }
    if anchor >= j {
        return Err(Error::DimensionMismatch(format!(
            "anchor outcome {anchor} out of range ({j} outcomes)"
        )));
    }

    let l1 = pi.estimates.get(0, anchor);
    let l2 = pi.estimates.get(1, anchor);
    let denom = l1 - l2;
    if denom.abs() <= 1e-10 * (1.0 + l1.abs() + l2.abs()) {
        return Err(Error::DegenerateAnchor);
    }
    let theta_31 = (pi.estimates.get(2, anchor) - l2) / denom;

    let lambda = Matrix::from_fn(2, j, |m, jj| pi.estimates.get(m, jj));
    let row3_residuals: Vec<f64> = (0..j)
        .map(|jj| {
            pi.estimates.get(2, jj)
                - (theta_31 * lambda.get(0, jj) + (1.0 - theta_31) * lambda.get(1, jj))
        })
        .collect();

    Ok(ThreeStepFit {
        theta_31,
        lambda,
        row3_residuals,
        anchor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pi_from(estimates: Matrix) -> PiMatrix {
        let k = estimates.rows();
        let j = estimates.cols();
        PiMatrix {
            std_errors: Matrix::from_fn(k, j, |_, _| 0.1),
            first_stage_coefs: vec![0.5; k],
            weak_instruments: vec![false; k],
            n_used: 1000,
            estimates,
        }
    }

    #[test]
    fn exact_forward_construction_inverts() {
        let theta = Matrix::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 0.3, 0.7]).unwrap();
        let lambda = Matrix::from_vec(2, 4, vec![1.0, 0.9, 0.7, 1.3, 0.2, 0.5, -0.1, 0.8]).unwrap();
        let pi = pi_from(theta.dot(&lambda));
        let fit = three_step_fit(&pi, 0).unwrap();
        assert!((fit.theta_31 - 0.3).abs() < 1e-12);
        assert!(fit.lambda.max_abs_diff(&lambda) < 1e-12);
        assert!(fit.row3_residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn duplicate_defining_instrument_gets_unit_weight() {
        // Third row equal to the first: θ̂ = 1 with zero residuals.
        let theta = Matrix::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        let lambda = Matrix::from_vec(2, 2, vec![0.8, 1.1, 0.3, -0.4]).unwrap();
        let fit = three_step_fit(&pi_from(theta.dot(&lambda)), 0).unwrap();
        assert!((fit.theta_31 - 1.0).abs() < 1e-12);
        assert!(fit.row3_residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn equal_anchor_effects_are_degenerate() {
        let estimates = Matrix::from_vec(3, 2, vec![0.6, 1.0, 0.6, 0.2, 0.6, 0.7]).unwrap();
        assert!(matches!(
            three_step_fit(&pi_from(estimates), 0),
            Err(Error::DegenerateAnchor)
        ));
        // The second outcome separates the components, so anchoring there
        // succeeds.
        let estimates = Matrix::from_vec(3, 2, vec![0.6, 1.0, 0.6, 0.2, 0.6, 0.7]).unwrap();
        assert!(three_step_fit(&pi_from(estimates), 1).is_ok());
    }

    #[test]
    fn rejects_wrong_shapes() {
        let two_rows = Matrix::from_vec(2, 2, vec![1.0, 0.5, 0.2, 0.4]).unwrap();
        assert!(three_step_fit(&pi_from(two_rows), 0).is_err());
        let one_outcome = Matrix::from_vec(3, 1, vec![1.0, 0.5, 0.2]).unwrap();
        assert!(three_step_fit(&pi_from(one_outcome), 0).is_err());
    }
}
