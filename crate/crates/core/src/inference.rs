//! Covariance estimation and the overidentification test for the number
//! of unobserved component treatments.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{chi_square_sf, inverse, RealMatrix};

type Matrix = RealMatrix<f64>;

/// Overidentification test outcome. For an exactly identified fit the
/// degrees of freedom are zero, the statistic is numerically zero, and
/// the p-value is defined as one.
#[derive(Clone, Debug, Serialize)]
pub struct JTestResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub n: usize,
    /// Set when a tiny negative quadratic form was clamped to zero.
    pub clamped_negative: bool,
}

/// Stacks per-observation instrument moments: row i is the Kronecker
/// layout `[s_i * e_i1, ..., s_i * e_iQ]` for instrument row `s_i` and
/// residual columns `e_i`.
pub fn instrument_moment_rows(s: &Matrix, resid: &Matrix) -> Matrix {
    assert_eq!(s.rows(), resid.rows(), "instrument/residual row mismatch");
    let n = s.rows();
    let m = s.cols();
    let q = resid.cols();
    let mut out = Matrix::zeros(n, m * q);
    for i in 0..n {
        let si = s.row(i);
        let ei = resid.row(i);
        let row = out.row_mut(i);
        for (block, &e) in ei.iter().enumerate() {
            for (a, &sv) in si.iter().enumerate() {
                row[block * m + a] = sv * e;
            }
        }
    }
    out
}

/// Centered second-moment matrix of per-observation moment rows:
/// `S = N^{-1} Σ (g_i - ḡ)(g_i - ḡ)'`. Symmetric positive semidefinite
/// by construction.
pub fn moment_covariance(per_obs: &Matrix) -> Matrix {
    let n = per_obs.rows();
    let m = per_obs.cols();
    let inv_n = 1.0 / n as f64;
    let mut mean = vec![0.0; m];
    for i in 0..n {
        for (a, &v) in per_obs.row(i).iter().enumerate() {
            mean[a] += v;
        }
    }
    for v in &mut mean {
        *v *= inv_n;
    }
    let mut cov = Matrix::zeros(m, m);
    let mut centered = vec![0.0; m];
    for i in 0..n {
        for (a, &v) in per_obs.row(i).iter().enumerate() {
            centered[a] = v - mean[a];
        }
        for a in 0..m {
            let ca = centered[a];
            if ca == 0.0 {
                continue;
            }
            let row = cov.row_mut(a);
            for b in a..m {
                row[b] += ca * centered[b];
            }
        }
    }
    // Fill the lower triangle symmetrically, scaling once.
    for a in 0..m {
        for b in a..m {
            let v = cov[(a, b)] * inv_n;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    cov
}

/// GMM sandwich covariance of the parameter estimates:
/// `(G'WG)^{-1} G'W S W G (G'WG)^{-1} / N`. Collapses to
/// `(G'S^{-1}G)^{-1}/N` under efficient weighting `W = S^{-1}`.
pub fn sandwich_vcov(g: &Matrix, w: &Matrix, s: &Matrix, n: usize) -> Result<Matrix> {
    let gw = g.t_dot(w); // P×M
    let bread = inverse(&gw.dot(g))?;
    let meat = gw.dot(s).dot(&gw.transpose());
    Ok(bread.dot(&meat).dot(&bread).scale(1.0 / n as f64))
}

/// Hansen J statistic `N · ḡ'Wḡ` with its chi-square p-value. Small
/// negative quadratic forms (numerical) are clamped to zero; anything
/// below -1e-10 is an error.
pub fn hansen_j(gbar: &[f64], w: &Matrix, n: usize, df: usize) -> Result<JTestResult> {
    let g = Matrix::column(gbar);
    let quad = g.t_dot(&w.dot(&g)).get(0, 0);
    let mut statistic = n as f64 * quad;
    let mut clamped = false;
    if statistic < 0.0 {
        if statistic > -1e-10 {
            statistic = 0.0;
            clamped = true;
        } else {
            return Err(Error::NegativeStatistic(statistic));
        }
    }
    let p_value = if df == 0 {
        1.0
    } else {
        chi_square_sf(statistic, df)
    };
    Ok(JTestResult {
        statistic,
        df,
        p_value,
        n,
        clamped_negative: clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{inverse_spd, RngSeed};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_moments_have_zero_covariance() {
        let rows = Matrix::from_vec(5, 2, vec![[3.0, -1.0]; 5].concat()).unwrap();
        let cov = moment_covariance(&rows);
        assert!(cov.max_abs() < 1e-14);
    }

    #[test]
    fn two_point_variance_by_hand() {
        let rows = Matrix::from_vec(2, 1, vec![1.0, -1.0]).unwrap();
        let cov = moment_covariance(&rows);
        assert!((cov.get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn covariance_is_symmetric() {
        let mut rng = RngSeed::new(11, 0).rng();
        let rows = Matrix::from_fn(40, 5, |_, _| StandardNormal.sample(&mut rng));
        let cov = moment_covariance(&rows);
        assert_eq!(cov, cov.transpose());
    }

    #[test]
    fn efficient_weighting_identity() {
        let mut rng = RngSeed::new(12, 0).rng();
        let g = Matrix::from_fn(6, 3, |_, _| StandardNormal.sample(&mut rng));
        // Random SPD S.
        let a = Matrix::from_fn(6, 6, |_, _| StandardNormal.sample(&mut rng));
        let s = a.t_dot(&a).add(&Matrix::identity(6).scale(0.5));
        let w = inverse_spd(&s).unwrap();
        let n = 250;
        let full = sandwich_vcov(&g, &w, &s, n).unwrap();
        let short = inverse(&g.t_dot(&w).dot(&g)).unwrap().scale(1.0 / n as f64);
        assert!(full.max_abs_diff(&short) < 1e-8);
    }

    #[test]
    fn scalar_sandwich_by_hand() {
        // G = g, W = w, S = s: the weight cancels and vcov = s / (g² N).
        let g = Matrix::from_vec(1, 1, vec![2.0]).unwrap();
        let w = Matrix::from_vec(1, 1, vec![0.7]).unwrap();
        let s = Matrix::from_vec(1, 1, vec![3.0]).unwrap();
        let v = sandwich_vcov(&g, &w, &s, 10).unwrap();
        assert!((v.get(0, 0) - 3.0 / (4.0 * 10.0)).abs() < 1e-14);
    }

    #[test]
    fn doubling_n_halves_vcov() {
        let mut rng = RngSeed::new(13, 0).rng();
        let g = Matrix::from_fn(4, 2, |_, _| StandardNormal.sample(&mut rng));
        let a = Matrix::from_fn(4, 4, |_, _| StandardNormal.sample(&mut rng));
        let s = a.t_dot(&a).add(&Matrix::identity(4));
        let w = Matrix::identity(4);
        let v1 = sandwich_vcov(&g, &w, &s, 100).unwrap();
        let v2 = sandwich_vcov(&g, &w, &s, 200).unwrap();
        assert!(v1.scale(0.5).max_abs_diff(&v2) < 1e-14);
    }

    #[test]
    fn zero_moments_give_unit_pvalue() {
        let w = Matrix::identity(3);
        let jt = hansen_j(&[0.0, 0.0, 0.0], &w, 50, 2).unwrap();
        assert_eq!(jt.statistic, 0.0);
        assert_eq!(jt.p_value, 1.0);
    }

    #[test]
    fn df_zero_defines_pvalue_one() {
        let w = Matrix::identity(2);
        let jt = hansen_j(&[1e-9, -1e-9], &w, 1000, 0).unwrap();
        assert!(jt.statistic < 1e-8);
        assert_eq!(jt.p_value, 1.0);
    }

    #[test]
    fn negative_statistic_clamps_or_errors() {
        // A slightly negative quadratic form is clamped...
        let w = Matrix::from_vec(1, 1, vec![-1e-16]).unwrap();
        let jt = hansen_j(&[1e-3], &w, 10, 1).unwrap();
        assert_eq!(jt.statistic, 0.0);
        assert!(jt.clamped_negative);
        // ...a substantively negative one is an error.
        let w = Matrix::from_vec(1, 1, vec![-1.0]).unwrap();
        assert!(matches!(
            hansen_j(&[1.0], &w, 10, 1),
            Err(Error::NegativeStatistic(_))
        ));
    }

    #[test]
    fn j_statistic_invariant_to_moment_reordering() {
        let mut rng = RngSeed::new(14, 0).rng();
        let m = 5;
        let gbar: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        let a = Matrix::from_fn(m, m, |_, _| StandardNormal.sample(&mut rng));
        let w = a.t_dot(&a).add(&Matrix::identity(m).scale(0.1));
        let base = hansen_j(&gbar, &w, 77, 3).unwrap();
        for _ in 0..10 {
            // Random permutation of moment rows with consistently permuted W.
            let mut perm: Vec<usize> = (0..m).collect();
            for i in (1..m).rev() {
                let j = rng.random_range(0..=i);
                perm.swap(i, j);
            }
            let gp: Vec<f64> = perm.iter().map(|&i| gbar[i]).collect();
            let wp = Matrix::from_fn(m, m, |a2, b| w[(perm[a2], perm[b])]);
            let jt = hansen_j(&gp, &wp, 77, 3).unwrap();
            assert!((jt.statistic - base.statistic).abs() < 1e-10);
        }
    }

    #[test]
    fn pvalue_monotone_in_statistic() {
        let w = Matrix::identity(1);
        let mut prev = hansen_j(&[0.0], &w, 100, 4).unwrap().p_value;
        for i in 1..20 {
            let g = (i as f64 * 0.02).sqrt() / 10.0;
            let cur = hansen_j(&[g], &w, 100, 4).unwrap().p_value;
            assert!(cur < prev);
            prev = cur;
        }
    }
}
