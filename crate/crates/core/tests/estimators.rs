//! Estimator-level integration checks: nesting identities, constraint
//! satisfaction, reconstruction of the just-identified matrix, and
//! consistency against the generating truth.

use fate_core::dgp::{simulate_continuous, DgpTruth};
use fate_core::fate::{fate_fit, three_step_fit, FateSpec};
use fate_core::iv::{iv_gmm_fit, pi_matrix};
use fate_core::mc::textbook_generator;
use fate_core::numerics::RngSeed;
use fate_core::Error;

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[test]
fn fate_l1_coincides_with_pooled_iv_gmm() {
    let mut cfg = textbook_generator();
    cfg.n = 4_000;
    let data = simulate_continuous(&cfg, RngSeed::new(100, 0)).unwrap().dataset;

    let fate = fate_fit(&data, &FateSpec::new(1)).unwrap();
    let pooled = iv_gmm_fit(&data).unwrap();
    assert!(fate.converged && pooled.converged);
    for jj in 0..pooled.effects.len() {
        let gap = relative_gap(fate.lambda.get(0, jj), pooled.effects[jj]);
        assert!(gap < 1e-6, "outcome {jj}: gap {gap:.3e}");
    }
    assert_eq!(fate.j_df, pooled.j_df);
    assert!(relative_gap(fate.j_stat, pooled.j_stat) < 1e-4);
}

#[test]
fn fate_lk_coincides_with_just_identified_matrix() {
    let mut cfg = textbook_generator();
    cfg.n = 4_000;
    let data = simulate_continuous(&cfg, RngSeed::new(101, 0)).unwrap().dataset;

    let fate = fate_fit(&data, &FateSpec::new(3)).unwrap();
    let pm = pi_matrix(&data).unwrap();
    assert!(fate.converged);
    assert_eq!(fate.j_df, 0);
    assert!(fate.j_stat < 1e-8, "J = {}", fate.j_stat);
    for ki in 0..3 {
        for jj in 0..5 {
            let gap = relative_gap(fate.lambda.get(ki, jj), pm.estimates.get(ki, jj));
            assert!(gap < 1e-6, "({ki},{jj}): gap {gap:.3e}");
        }
    }
}

#[test]
fn theta_constraints_hold_at_the_estimate() {
    let mut cfg = textbook_generator();
    cfg.n = 3_000;
    let data = simulate_continuous(&cfg, RngSeed::new(102, 0)).unwrap().dataset;
    let fit = fate_fit(&data, &FateSpec::new(2)).unwrap();
    assert!(fit.max_row_sum_violation() < 1e-8);
    for d in 0..2 {
        for m in 0..2 {
            let expected = if d == m { 1.0 } else { 0.0 };
            assert_eq!(fit.theta.get(d, m), expected);
        }
    }
}

#[test]
fn reconstruction_matches_pi_within_two_standard_errors() {
    let mut cfg = textbook_generator();
    cfg.n = 100_000;
    let data = simulate_continuous(&cfg, RngSeed::new(103, 0)).unwrap().dataset;
    let fit = fate_fit(&data, &FateSpec::new(2)).unwrap();
    let pm = pi_matrix(&data).unwrap();
    let recon = fit.theta.dot(&fit.lambda);
    for ki in 0..3 {
        for jj in 0..5 {
            let gap = (recon.get(ki, jj) - pm.estimates.get(ki, jj)).abs();
            let bound = 2.0 * pm.std_errors.get(ki, jj);
            assert!(gap <= bound, "({ki},{jj}): |Δ| = {gap:.4} > {bound:.4}");
        }
    }
}

#[test]
fn just_identified_estimates_are_consistent_for_theta_lambda() {
    let mut cfg = textbook_generator();
    cfg.n = 100_000;
    let out = simulate_continuous(&cfg, RngSeed::new(104, 0)).unwrap();
    let pm = pi_matrix(&out.dataset).unwrap();
    let pi_true = out.truth.pi().unwrap();
    for ki in 0..3 {
        for jj in 0..5 {
            let gap = (pm.estimates.get(ki, jj) - pi_true.get(ki, jj)).abs();
            let bound = 4.0 * pm.std_errors.get(ki, jj);
            assert!(gap <= bound, "({ki},{jj}): |Δ| = {gap:.4} > {bound:.4}");
        }
    }
}

#[test]
fn lambda_recovers_normalized_truth_at_large_n() {
    let mut cfg = textbook_generator();
    cfg.n = 100_000;
    let out = simulate_continuous(&cfg, RngSeed::new(105, 0)).unwrap();
    let fit = fate_fit(&out.dataset, &FateSpec::new(2)).unwrap();
    let (theta_true, lambda_true) = out.truth.normalized(2).unwrap();
    for m in 0..2 {
        for jj in 0..5 {
            let gap = (fit.lambda.get(m, jj) - lambda_true.get(m, jj)).abs();
            let bound = 4.0 * fit.lambda_se.get(m, jj);
            assert!(gap <= bound, "λ({m},{jj}): |Δ| = {gap:.4} > {bound:.4}");
        }
    }
    let gap = (fit.theta.get(2, 0) - theta_true.get(2, 0)).abs();
    assert!(gap <= 4.0 * fit.theta_se.get(2, 0));
}

#[test]
fn defining_instrument_swap_relabels_components() {
    // With K = L = 2 the fit is exactly identified, so swapping which
    // instrument defines which component swaps the effect rows.
    let mut cfg = textbook_generator();
    cfg.n = 3_000;
    let gamma = fate_core::Matrix::from_vec(2, 2, vec![0.6, 0.0, 0.0, 0.6]).unwrap();
    cfg.gamma = gamma;
    cfg.instrument_dists.truncate(2);
    let data = simulate_continuous(&cfg, RngSeed::new(106, 0)).unwrap().dataset;

    let mut spec_a = FateSpec::new(2);
    spec_a.defining_instruments = vec!["z1".into(), "z2".into()];
    let mut spec_b = FateSpec::new(2);
    spec_b.defining_instruments = vec!["z2".into(), "z1".into()];
    let a = fate_fit(&data, &spec_a).unwrap();
    let b = fate_fit(&data, &spec_b).unwrap();
    for jj in 0..5 {
        assert!(relative_gap(a.lambda.get(0, jj), b.lambda.get(1, jj)) < 1e-6);
        assert!(relative_gap(a.lambda.get(1, jj), b.lambda.get(0, jj)) < 1e-6);
    }
}

#[test]
fn unidentified_requests_are_refused() {
    let mut cfg = textbook_generator();
    cfg.n = 1_000;
    let data = simulate_continuous(&cfg, RngSeed::new(107, 0)).unwrap().dataset;
    assert!(matches!(
        fate_fit(&data, &FateSpec::new(4)),
        Err(Error::NotIdentified { .. })
    ));
}

#[test]
fn three_step_agrees_with_full_gmm_at_large_n() {
    let mut cfg = textbook_generator();
    cfg.n = 100_000;
    let data = simulate_continuous(&cfg, RngSeed::new(108, 0)).unwrap().dataset;
    let pm = pi_matrix(&data).unwrap();
    let steps = three_step_fit(&pm, 0).unwrap();
    let full = fate_fit(&data, &FateSpec::new(2)).unwrap();
    for m in 0..2 {
        for jj in 0..5 {
            let gap = (steps.lambda.get(m, jj) - full.lambda.get(m, jj)).abs();
            let bound = 3.0 * full.lambda_se.get(m, jj);
            assert!(gap <= bound, "λ({m},{jj}): {gap:.4} > {bound:.4}");
        }
    }
    assert!((steps.theta_31 - full.theta.get(2, 0)).abs() <= 3.0 * full.theta_se.get(2, 0));
}

#[test]
fn truth_normalization_is_consistent() {
    let cfg = textbook_generator();
    let truth = cfg.truth();
    let (theta_n, lambda_n) = truth.normalized(2).unwrap();
    // Θ_norm Λ_norm must reproduce Π regardless of the rotation.
    let pi = truth.pi().unwrap();
    assert!(theta_n.dot(&lambda_n).max_abs_diff(&pi) < 1e-12);
    // Identity defining block after normalization.
    for a in 0..2 {
        for b in 0..2 {
            let expected = if a == b { 1.0 } else { 0.0 };
            assert!((theta_n.get(a, b) - expected).abs() < 1e-12);
        }
    }
    let DgpTruth::Continuous { .. } = truth else {
        panic!("continuous truth expected")
    };
}
