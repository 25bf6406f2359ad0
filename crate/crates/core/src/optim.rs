//! Shared GMM optimization plumbing: weighted Gauss-Newton with step
//! halving, block-diagonal first-step weights, and the ridge fallback
//! for near-singular moment covariances.

use crate::error::Result;
use crate::numerics::{cholesky, inverse_spd, solve_least_squares, solve_with_cholesky, RealMatrix};

type Matrix = RealMatrix<f64>;

/// Repeats a per-equation weight block (inverted) down the diagonal.
pub(crate) fn block_diag_weight(block: &Matrix, times: usize) -> Result<Matrix> {
    let inv = inverse_spd(block)?;
    let m = inv.rows();
    let mut w = Matrix::zeros(m * times, m * times);
    for t in 0..times {
        for a in 0..m {
            for b in 0..m {
                w[(t * m + a, t * m + b)] = inv[(a, b)];
            }
        }
    }
    Ok(w)
}

/// Inverts a moment covariance, falling back to a ridge-regularized
/// inverse when the matrix is numerically singular; the flag reports
/// whether the fallback fired.
pub(crate) fn invert_moment_covariance(cov: &Matrix) -> (Matrix, bool) {
    match inverse_spd(cov) {
        Ok(w) => (w, false),
        Err(_) => {
            let m = cov.rows();
            let tr: f64 = (0..m).map(|i| cov[(i, i)]).sum();
            let ridge = 1e-8 * tr.max(f64::MIN_POSITIVE) / m as f64;
            let mut bumped = cov.clone();
            for i in 0..m {
                bumped[(i, i)] += ridge;
            }
            let w = inverse_spd(&bumped).expect("ridge-regularized covariance is positive");
            (w, true)
        }
    }
}

pub(crate) struct GnRun {
    pub params: Vec<f64>,
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Gauss-Newton on weighted moment means with step halving. `w_chol` is
/// the lower Cholesky factor of the weight matrix; the criterion
/// `ḡ'Wḡ = ||L'ḡ||²` never increases across accepted steps.
pub(crate) fn weighted_gauss_newton(
    moments: impl Fn(&[f64]) -> (Vec<f64>, Matrix),
    start: Vec<f64>,
    w_chol: &Matrix,
    max_iterations: usize,
    tol_objective: f64,
    tol_params: f64,
) -> GnRun {
    let lt = w_chol.transpose();
    let eval = |p: &[f64]| -> (f64, Vec<f64>, Matrix) {
        let (gbar, jac) = moments(p);
        let g = Matrix::column(&gbar);
        let lg = lt.dot(&g);
        let q = lg.data().iter().map(|v| v * v).sum::<f64>();
        (q, gbar, jac)
    };

    let mut params = start;
    let (mut q, mut gbar, mut jac) = eval(&params);
    let mut converged = false;
    let mut iterations = 0;
    let mut gradient_norm = f64::INFINITY;

    for _ in 0..max_iterations {
        iterations += 1;
        let lj = lt.dot(&jac);
        let lg = lt.dot(&Matrix::column(&gbar));
        gradient_norm = lj.t_dot(&lg).norm();
        // Solve min ||L'(ḡ + Gδ)|| for the step.
        let step = match solve_least_squares(&lj, &lg.scale(-1.0)) {
            Ok(d) => d,
            Err(_) => {
                // Degenerate Jacobian: damp and retry once.
                let jtj = lj.t_dot(&lj);
                let mut damped = jtj.clone();
                let bump = 1e-8 * (0..jtj.rows()).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
                for i in 0..damped.rows() {
                    damped[(i, i)] += bump.max(1e-12);
                }
                let rhs = lj.t_dot(&lg.scale(-1.0));
                match cholesky(&damped) {
                    Ok(l) => solve_with_cholesky(&l, &rhs),
                    Err(_) => break,
                }
            }
        };

        // Step halving keeps the criterion monotone.
        let mut alpha: f64 = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = params
                .iter()
                .zip(step.data())
                .map(|(&p, &d)| p + alpha * d)
                .collect();
            let (q_new, g_new, j_new) = eval(&trial);
            if q_new.is_finite() && q_new < q {
                let step_size = alpha * step.norm();
                let obj_drop = q - q_new;
                params = trial;
                q = q_new;
                gbar = g_new;
                jac = j_new;
                accepted = true;
                let scale = 1.0 + params.iter().map(|p| p * p).sum::<f64>().sqrt();
                if obj_drop <= tol_objective * q.max(1e-300) || step_size <= tol_params * scale {
                    converged = true;
                }
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // No descent direction left: at a (local) optimum.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    GnRun {
        params,
        objective: q,
        gradient_norm,
        iterations,
        converged,
    }
}
