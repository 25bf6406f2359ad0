//! Factor-augmented treatment effects: constrained GMM estimation of
//! instrument weights Θ and component effects Λ under the identity-block
//! normalization and row-sum-to-one constraints, plus the intuitive
//! three-step estimator for the K=3, L=2 case.
//!
//! The estimated system stacks one outcome equation per outcome with the
//! shared first stage:
//!
//!   Y_j = X β_j + Z γ Θ λ_j + ε_j      j = 1..J
//!   D   = X γ_x + Z γ + u
//!
//! where γ is diagonal, Θ's first L rows are pinned to the identity, and
//! every row of Θ sums to one. Each non-defining row stores L-1 free
//! entries with the last reconstructed as one minus their sum, so the
//! constraint holds exactly at every iterate instead of through a
//! penalty, and the parameter space stays unconstrained for the solver.

mod fit;
mod model;
mod three_step;

pub use fit::{fate_fit, FateEstimate, FateSpec, Weighting};
pub use model::FateModel;
pub use three_step::{three_step_fit, ThreeStepFit};

use serde::Serialize;

/// Closed-form identification accounting. Moments are counted net of the
/// control block: the (J+1)·R control moments exactly absorb the β and
/// γ_x parameters, leaving (J+1)·K instrument moments against the
/// JL + (K-L)(L-1) + K remaining parameters.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct IdentificationReport {
    pub k: usize,
    pub j: usize,
    pub l: usize,
    pub identified: bool,
    /// Net instrument moment count (J+1)·K.
    pub moment_count: usize,
    /// Net parameter count JL + (K-L)(L-1) + K.
    pub parameter_count: usize,
    /// Degrees of freedom of the overidentification test,
    /// (K-L)(J+1-L); negative exactly when the counting fails.
    pub j_df: i64,
}

/// Counts moments against parameters for a model with K instruments,
/// J outcomes, and L components.
pub fn check_identification(k: usize, j: usize, l: usize) -> IdentificationReport {
    assert!(k >= 1 && j >= 1 && l >= 1, "K, J, L must be positive");
    let moment_count = (j + 1) * k;
    let parameter_count = j * l + k.saturating_sub(l) * (l - 1) + k;
    let j_df = (k as i64 - l as i64) * (j as i64 + 1 - l as i64);
    // L = K pins the whole weight matrix to the identity, so any J
    // identifies; otherwise L may not exceed K or J + 1.
    let identified = l <= k && (l <= j + 1 || l == k);
    IdentificationReport {
        k,
        j,
        l,
        identified,
        moment_count,
        parameter_count,
        j_df,
    }
}

/// Validates the row-sum-to-one constraint on a weight row within the
/// reporting tolerance.
pub fn weight_row_sums_to_one(row: &[f64]) -> bool {
    (row.iter().sum::<f64>() - 1.0).abs() <= 1e-8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_case_is_identified() {
        let rep = check_identification(3, 2, 2);
        assert!(rep.identified);
        assert_eq!(rep.j_df, 1);
    }

    #[test]
    fn exactly_identified_boundary() {
        for j in 1..=6 {
            let rep = check_identification(4, j, 4);
            assert!(rep.identified);
            assert_eq!(rep.j_df, 0);
            assert_eq!(rep.moment_count, rep.parameter_count);
        }
    }

    #[test]
    fn counted_df_matches_closed_form() {
        let rep = check_identification(3, 5, 2);
        assert_eq!(rep.j_df, 4);
        assert_eq!(
            rep.moment_count as i64 - rep.parameter_count as i64,
            rep.j_df
        );
    }

    #[test]
    fn too_many_components_not_identified() {
        assert!(!check_identification(2, 5, 3).identified);
        assert!(!check_identification(5, 1, 3).identified);
        assert!(check_identification(3, 1, 2).identified);
    }

    #[test]
    fn published_weight_row_satisfies_constraint() {
        assert!(weight_row_sums_to_one(&[-2.5, 3.5]));
        assert!(weight_row_sums_to_one(&[1.0]));
        assert!(!weight_row_sums_to_one(&[0.4, 0.7]));
    }
}
