//! Property tests over the numeric kernels and estimator symmetries.

use fate_core::iv::{just_identified_iv, ColumnNames, Dataset};
use fate_core::numerics::{chi_square_sf, residualize, solve_least_squares, RngSeed};
use fate_core::Matrix;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn random_matrix(seed: u64, rows: usize, cols: usize) -> Matrix {
    let mut rng = RngSeed::new(seed, 0).rng();
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn residualize_is_idempotent_and_orthogonal(seed in 0u64..5000) {
        let m = random_matrix(seed, 20, 3);
        let x = random_matrix(seed.wrapping_add(1), 20, 2);
        let r1 = residualize(&m, &x).unwrap();
        let r2 = residualize(&r1, &x).unwrap();
        prop_assert!(r1.max_abs_diff(&r2) < 1e-10);
        // Each output column orthogonal to every column of X.
        for c in 0..3 {
            for xc in 0..2 {
                let dot: f64 = (0..20).map(|i| r1.get(i, c) * x.get(i, xc)).sum();
                let bound = 1e-8 * r1.col_matrix(c).norm() * x.col_matrix(xc).norm() + 1e-12;
                prop_assert!(dot.abs() < bound);
            }
        }
    }

    #[test]
    fn square_nonsingular_systems_solve_exactly(seed in 0u64..5000) {
        let a = random_matrix(seed, 4, 4);
        // Gaussian squares are almost surely well conditioned enough; skip
        // the rare degenerate draw.
        let x_true = random_matrix(seed.wrapping_add(9), 4, 2);
        let b = a.dot(&x_true);
        if let Ok(x) = solve_least_squares(&a, &b) {
            let rel = x.max_abs_diff(&x_true) / (1.0 + x_true.max_abs());
            prop_assert!(rel < 1e-10, "rel = {rel:.3e}");
        }
    }

    #[test]
    fn chi_square_sf_is_monotone(x in 0.01f64..50.0, bump in 0.01f64..10.0, df in 1usize..40) {
        let base: f64 = chi_square_sf(x, df);
        prop_assert!(chi_square_sf(x + bump, df) <= base);
        let up: f64 = chi_square_sf(x, df + 1);
        prop_assert!(up >= base);
    }

    #[test]
    fn iv_estimate_is_invariant_to_instrument_scale(seed in 0u64..2000, scale in prop::sample::select(vec![-3.0f64, -0.5, 0.25, 2.0, 10.0])) {
        let n = 60;
        let z = random_matrix(seed, n, 2);
        let x = Matrix::from_fn(n, 1, |_, _| 1.0);
        let noise = random_matrix(seed.wrapping_add(3), n, 1);
        let d = Matrix::from_fn(n, 1, |i, _| 0.8 * z.get(i, 0) + 0.3 * z.get(i, 1) + noise.get(i, 0));
        let e = random_matrix(seed.wrapping_add(4), n, 1);
        let y = Matrix::from_fn(n, 1, |i, _| 1.5 * d.get(i, 0) + e.get(i, 0));
        let names = ColumnNames::generic(1, 2, 1);
        let data = Dataset::new(y.clone(), d.clone(), z.clone(), x.clone(), names.clone()).unwrap();
        let base = just_identified_iv(&data, 0).unwrap();

        let mut z2 = z.clone();
        for i in 0..n {
            z2.set(i, 0, z.get(i, 0) * scale);
        }
        let data2 = Dataset::new(y, d, z2, x, names).unwrap();
        let scaled = just_identified_iv(&data2, 0).unwrap();
        prop_assert!((base.pi[0] - scaled.pi[0]).abs() < 1e-10 * (1.0 + base.pi[0].abs()));
        prop_assert!((base.se[0] - scaled.se[0]).abs() < 1e-10 * (1.0 + base.se[0]));
    }
}
