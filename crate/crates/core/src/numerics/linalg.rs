//! Least-squares and factorization kernels.
//!
//! Least squares goes through a rank-revealing Householder QR with column
//! pivoting rather than normal equations: the Monte Carlo scenarios
//! deliberately include near-collinear instruments, and squaring the
//! condition number there would contaminate the downstream estimates.

use crate::error::{Error, Result};
use crate::numerics::{Real, RealMatrix};

/// Relative tolerance for declaring a design matrix rank deficient:
/// a pivot smaller than this fraction of the largest pivot fails.
pub const RANK_REL_TOL: f64 = 1e-10;

/// Householder QR factorization with column pivoting of an n×p matrix,
/// n ≥ p. Reusable for repeated solves against the same design.
pub struct QrFactor<T: Real> {
    /// Packed factorization: R on and above the diagonal, Householder
    /// vectors (scaled so the head entry is 1) below it.
    qr: RealMatrix<T>,
    beta: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Real> QrFactor<T> {
    /// Factorizes `a`, failing with `RankDeficient` when the smallest
    /// retained pivot falls below `rel_tol` times the largest.
    pub fn new(a: &RealMatrix<T>, rel_tol: T) -> Result<Self> {
        let n = a.rows();
        let p = a.cols();
        if n < p {
            return Err(Error::DimensionMismatch(format!(
                "least squares needs rows >= cols, got {n}x{p}"
            )));
        }
        let mut qr = a.clone();
        let mut beta = vec![T::zero(); p];
        let mut perm: Vec<usize> = (0..p).collect();
        let mut col_norms: Vec<T> = (0..p)
            .map(|j| (0..n).map(|i| qr.get(i, j) * qr.get(i, j)).sum::<T>())
            .collect();

        for k in 0..p {
            // Pivot: move the column with the largest remaining norm to k.
            let (jmax, _) = col_norms
                .iter()
                .enumerate()
                .skip(k)
                .fold((k, T::neg_infinity()), |acc, (j, &v)| {
                    if v > acc.1 {
                        (j, v)
                    } else {
                        acc
                    }
                });
            if jmax != k {
                for i in 0..n {
                    let t = qr.get(i, k);
                    qr.set(i, k, qr.get(i, jmax));
                    qr.set(i, jmax, t);
                }
                perm.swap(k, jmax);
                col_norms.swap(k, jmax);
            }

            // Householder vector for column k.
            let norm = (k..n)
                .map(|i| qr.get(i, k) * qr.get(i, k))
                .sum::<T>()
                .sqrt();
            if norm == T::zero() {
                beta[k] = T::zero();
                qr.set(k, k, T::zero());
            } else {
                let alpha = if qr.get(k, k) >= T::zero() {
                    -norm
                } else {
                    norm
                };
                let v0 = qr.get(k, k) - alpha;
                // v has head 1 after scaling by v0; beta = -v0/alpha gives
                // H = I - beta v v' with v = (1, A[k+1..,k]/v0).
                for i in k + 1..n {
                    qr.set(i, k, qr.get(i, k) / v0);
                }
                beta[k] = -v0 / alpha;
                qr.set(k, k, alpha);

                // Apply the reflector to the trailing columns.
                for j in k + 1..p {
                    let mut s = qr.get(k, j);
                    for i in k + 1..n {
                        s += qr.get(i, k) * qr.get(i, j);
                    }
                    s *= beta[k];
                    let t = qr.get(k, j) - s;
                    qr.set(k, j, t);
                    for i in k + 1..n {
                        let t = qr.get(i, j) - s * qr.get(i, k);
                        qr.set(i, j, t);
                    }
                }
            }

            // Downdate trailing column norms.
            for (j, cn) in col_norms.iter_mut().enumerate().skip(k + 1) {
                let r = qr.get(k, j);
                *cn = *cn - r * r;
                if *cn < T::zero() {
                    // Cancellation; recompute from scratch.
                    *cn = (k + 1..n)
                        .map(|i| qr.get(i, j) * qr.get(i, j))
                        .sum::<T>();
                }
            }
        }

        // Rank test on the pivoted diagonal.
        let max_diag = qr.get(0, 0).abs();
        let tol = rel_tol * max_diag;
        for k in 0..p {
            if qr.get(k, k).abs() <= tol {
                return Err(Error::RankDeficient { effective_rank: k });
            }
        }

        Ok(Self { qr, beta, perm })
    }

    /// Least-squares solve for every column of `b`: returns the p×m
    /// minimizer of the squared residual norm.
    pub fn solve(&self, b: &RealMatrix<T>) -> Result<RealMatrix<T>> {
        let n = self.qr.rows();
        let p = self.qr.cols();
        if b.rows() != n {
            return Err(Error::DimensionMismatch(format!(
                "solve: rhs has {} rows, expected {n}",
                b.rows()
            )));
        }
        let m = b.cols();
        let mut work = b.clone();

        // Q' b via the stored reflectors.
        for k in 0..p {
            if self.beta[k] == T::zero() {
                continue;
            }
            for j in 0..m {
                let mut s = work.get(k, j);
                for i in k + 1..n {
                    s += self.qr.get(i, k) * work.get(i, j);
                }
                s *= self.beta[k];
                let t = work.get(k, j) - s;
                work.set(k, j, t);
                for i in k + 1..n {
                    let t = work.get(i, j) - s * self.qr.get(i, k);
                    work.set(i, j, t);
                }
            }
        }

        // Back-substitute R x = (Q'b)[0..p], then undo the pivoting.
        let mut x = RealMatrix::zeros(p, m);
        for j in 0..m {
            for k in (0..p).rev() {
                let mut s = work.get(k, j);
                for l in k + 1..p {
                    s -= self.qr.get(k, l) * x.get(l, j);
                }
                x.set(k, j, s / self.qr.get(k, k));
            }
        }
        let mut out = RealMatrix::zeros(p, m);
        for k in 0..p {
            for j in 0..m {
                out.set(self.perm[k], j, x.get(k, j));
            }
        }
        Ok(out)
    }

    /// Fitted values `A x̂` for the stored design.
    pub fn fitted(&self, a: &RealMatrix<T>, b: &RealMatrix<T>) -> Result<RealMatrix<T>> {
        Ok(a.dot(&self.solve(b)?))
    }
}

/// Solves `argmin_x ||A x - b||` column by column via rank-revealing QR.
pub fn solve_least_squares<T: Real>(a: &RealMatrix<T>, b: &RealMatrix<T>) -> Result<RealMatrix<T>> {
    QrFactor::new(a, T::of(RANK_REL_TOL))?.solve(b)
}

/// Residual maker: `M - X (X'X)^{-1} X' M`, leaving every output column
/// orthogonal to the columns of `X`.
pub fn residualize<T: Real>(m: &RealMatrix<T>, x: &RealMatrix<T>) -> Result<RealMatrix<T>> {
    let coef = solve_least_squares(x, m)?;
    Ok(m.sub(&x.dot(&coef)))
}

/// Inverse of a square full-rank matrix via QR.
pub fn inverse<T: Real>(a: &RealMatrix<T>) -> Result<RealMatrix<T>> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "inverse of non-square {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    solve_least_squares(a, &RealMatrix::identity(a.rows()))
}

/// Cholesky factor (lower triangular L with A = L L') of a symmetric
/// positive definite matrix. Fails on non-positive pivots.
pub fn cholesky<T: Real>(a: &RealMatrix<T>) -> Result<RealMatrix<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "cholesky of non-square {}x{}",
            n,
            a.cols()
        )));
    }
    let mut l = RealMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if s <= T::zero() {
                    return Err(Error::RankDeficient { effective_rank: j });
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solves `A x = b` for symmetric positive definite `A` given its
/// Cholesky factor.
pub fn solve_with_cholesky<T: Real>(l: &RealMatrix<T>, b: &RealMatrix<T>) -> RealMatrix<T> {
    let n = l.rows();
    let m = b.cols();
    // Forward: L y = b
    let mut y = RealMatrix::zeros(n, m);
    for j in 0..m {
        for i in 0..n {
            let mut s = b.get(i, j);
            for k in 0..i {
                s -= l.get(i, k) * y.get(k, j);
            }
            y.set(i, j, s / l.get(i, i));
        }
    }
    // Backward: L' x = y
    let mut x = RealMatrix::zeros(n, m);
    for j in 0..m {
        for i in (0..n).rev() {
            let mut s = y.get(i, j);
            for k in i + 1..n {
                s -= l.get(k, i) * x.get(k, j);
            }
            x.set(i, j, s / l.get(i, i));
        }
    }
    x
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn inverse_spd<T: Real>(a: &RealMatrix<T>) -> Result<RealMatrix<T>> {
    let l = cholesky(a)?;
    Ok(solve_with_cholesky(&l, &RealMatrix::identity(a.rows())))
}

#[cfg(test)]
mod tests {
    use super::*;

    type M = RealMatrix<f64>;

    #[test]
    fn identity_system() {
        let a = M::identity(3);
        let b = M::from_vec(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let x = solve_least_squares(&a, &b).unwrap();
        assert_eq!(x.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn overdetermined_by_hand() {
        // Normal equations solved by hand: intercept 1, slope 2.
        let a = M::from_vec(3, 2, vec![1.0, 0.0, 1.0, 1.0, 1.0, 2.0]).unwrap();
        let b = M::from_vec(3, 1, vec![1.0, 3.0, 5.0]).unwrap();
        let x = solve_least_squares(&a, &b).unwrap();
        assert!((x.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((x.get(1, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_is_rank_deficient() {
        let a = M::from_vec(4, 2, vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0]).unwrap();
        let b = M::from_vec(4, 1, vec![1.0; 4]).unwrap();
        match solve_least_squares(&a, &b) {
            Err(Error::RankDeficient { effective_rank }) => assert_eq!(effective_rank, 1),
            other => panic!("expected RankDeficient, got {other:?}"),
        }
    }

    #[test]
    fn residualize_self_annihilates() {
        let x = M::from_vec(4, 2, vec![1.0, 0.5, 1.0, -0.5, 1.0, 2.0, 1.0, 0.0]).unwrap();
        let r = residualize(&x, &x).unwrap();
        assert!(r.max_abs() < 1e-12);
    }

    #[test]
    fn residualize_demeans_against_intercept() {
        let ones = M::from_vec(3, 1, vec![1.0; 3]).unwrap();
        let m = M::from_vec(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let r = residualize(&m, &ones).unwrap();
        assert!(r.max_abs_diff(&M::from_vec(3, 1, vec![-1.0, 0.0, 1.0]).unwrap()) < 1e-14);
    }

    #[test]
    fn cholesky_round_trip() {
        let a = M::from_vec(2, 2, vec![4.0, 2.0, 2.0, 3.0]).unwrap();
        let l = cholesky(&a).unwrap();
        assert!(l.dot(&l.transpose()).max_abs_diff(&a) < 1e-12);
        let inv = inverse_spd(&a).unwrap();
        assert!(a.dot(&inv).max_abs_diff(&M::identity(2)) < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = M::from_vec(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(cholesky(&a).is_err());
    }
}
