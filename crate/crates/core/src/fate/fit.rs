//! Two-step GMM fit of the factor-augmented model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fate::model::FateModel;
use crate::fate::{check_identification, IdentificationReport};
use crate::inference::{hansen_j, moment_covariance, sandwich_vcov};
use crate::iv::{pi_matrix, ColumnNames, Dataset};
use crate::numerics::{cholesky, solve_least_squares, RealMatrix};
use crate::optim::{block_diag_weight, invert_moment_covariance, weighted_gauss_newton};

type Matrix = RealMatrix<f64>;

/// GMM weighting scheme.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weighting {
    /// Homoskedastic-IV first step, then the inverse moment covariance.
    #[default]
    TwoStep,
    /// Identity weights throughout; diagnostic use only.
    Identity,
}

/// Estimation configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FateSpec {
    /// Number of unobserved component treatments.
    pub l: usize,
    /// Instruments defining the first L components, by name. Empty keeps
    /// the dataset's current instrument order.
    #[serde(default)]
    pub defining_instruments: Vec<String>,
    #[serde(default)]
    pub weighting: Weighting,
    #[serde(default = "FateSpec::default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "FateSpec::default_tol_objective")]
    pub tol_objective: f64,
    #[serde(default = "FateSpec::default_tol_params")]
    pub tol_params: f64,
}

impl FateSpec {
    pub fn new(l: usize) -> Self {
        Self {
            l,
            defining_instruments: Vec::new(),
            weighting: Weighting::TwoStep,
            max_iterations: Self::default_max_iterations(),
            tol_objective: Self::default_tol_objective(),
            tol_params: Self::default_tol_params(),
        }
    }

    fn default_max_iterations() -> usize {
        500
    }

    fn default_tol_objective() -> f64 {
        1e-10
    }

    fn default_tol_params() -> f64 {
        1e-9
    }
}

/// Fitted factor-augmented model.
#[derive(Clone, Debug, Serialize)]
pub struct FateEstimate {
    /// Instrument weights on components (K×L); the first L rows are the
    /// identity block, stored, not estimated.
    pub theta: Matrix,
    /// Standard errors for the weight entries; zero on the identity
    /// block, delta-method values on each reconstructed last entry.
    pub theta_se: Matrix,
    /// Component effects per outcome (L×J).
    pub lambda: Matrix,
    pub lambda_se: Matrix,
    /// Control effects per outcome (R×J).
    pub beta: Matrix,
    /// First-stage instrument coefficients.
    pub gamma: Vec<f64>,
    pub gamma_x: Vec<f64>,
    /// Sandwich covariance over the free parameter vector.
    pub vcov: Matrix,
    pub j_stat: f64,
    pub j_df: usize,
    pub j_pvalue: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Final weighted GMM criterion ḡ'Wḡ.
    pub objective: f64,
    pub gradient_norm: f64,
    /// Set when the moment covariance needed the ridge fallback.
    pub weighting_ridged: bool,
    /// Instrument order used for the normalization (defining first).
    pub instrument_order: Vec<String>,
    /// Outcome labels, for reports.
    pub outcome_names: Vec<String>,
    pub n: usize,
}

/// Two-step GMM estimation of (Θ, Λ, β, γ, γ_x).
///
/// Step 1 minimizes under block-diagonal ((Z*'Z*)/N)^{-1} weights from a
/// consistent linear-fit start; step 2 re-minimizes under the inverse of
/// the step-1 moment covariance. Minimization is Gauss-Newton with step
/// halving, so the weighted criterion is non-increasing. Non-convergence
/// returns the best iterate, flagged, rather than failing.
pub fn fate_fit(data: &Dataset, spec: &FateSpec) -> Result<FateEstimate> {
    let owned;
    let data = if spec.defining_instruments.is_empty() {
        data
    } else {
        if spec.defining_instruments.len() != spec.l {
            return Err(Error::InvalidConfig(format!(
                "need exactly L={} defining instruments, got {}",
                spec.l,
                spec.defining_instruments.len()
            )));
        }
        let (reordered, _) = data.reorder_instruments(&spec.defining_instruments)?;
        owned = reordered;
        &owned
    };

    let (k, j) = (data.n_instruments(), data.n_outcomes());
    let ident: IdentificationReport = check_identification(k, j, spec.l);
    if !ident.identified {
        return Err(Error::NotIdentified { k, j, l: spec.l });
    }
    let j_df = ident.j_df as usize;

    let model = FateModel::new(data, spec.l)?;
    let p0 = initial_params(&model)?;

    let n = data.n();
    let w1 = match spec.weighting {
        Weighting::TwoStep => block_diag_weight(&model.instrument_gram(), j + 1)?,
        Weighting::Identity => Matrix::identity(model.n_moments()),
    };
    let w1_chol = cholesky(&w1)?;
    let run1 = weighted_gauss_newton(
        |p| model.moments(p),
        p0,
        &w1_chol,
        spec.max_iterations,
        spec.tol_objective,
        spec.tol_params,
    );

    let (w, s_used, ridged, run) = match spec.weighting {
        Weighting::TwoStep => {
            let cov = moment_covariance(&model.per_obs_moments(&run1.params));
            let (w2, ridged) = invert_moment_covariance(&cov);
            let w2_chol = cholesky(&w2)?;
            let run2 = weighted_gauss_newton(
                |p| model.moments(p),
                run1.params,
                &w2_chol,
                spec.max_iterations,
                spec.tol_objective,
                spec.tol_params,
            );
            (w2, cov, ridged, run2)
        }
        Weighting::Identity => {
            let cov = moment_covariance(&model.per_obs_moments(&run1.params));
            (w1, cov, false, run1)
        }
    };

    let p = run.params;
    let (gbar, jac) = model.moments(&p);
    let jt = hansen_j(&gbar, &w, n, j_df)?;
    let vcov = sandwich_vcov(&jac, &w, &s_used, n)?;

    let (_, _, r, l) = model.dims();
    let theta = model.theta(&p);
    let lambda = model.lambda(&p);
    let beta = model.beta(&p);
    let lambda_se = Matrix::from_fn(l, j, |m, jj| {
        let idx = model.lambda_index(jj, m);
        vcov[(idx, idx)].max(0.0).sqrt()
    });
    let theta_se = Matrix::from_fn(k, l, |ki, m| {
        if ki < l {
            0.0
        } else if m < l - 1 {
            let idx = model.theta_index(ki, m);
            vcov[(idx, idx)].max(0.0).sqrt()
        } else {
            // Reconstructed entry: Var(1 - Σ free) = Σ Cov(free, free').
            let mut var = 0.0;
            for a in 0..l - 1 {
                for b in 0..l - 1 {
                    var += vcov[(model.theta_index(ki, a), model.theta_index(ki, b))];
                }
            }
            var.max(0.0).sqrt()
        }
    });
    let _ = r;

    Ok(FateEstimate {
        theta,
        theta_se,
        lambda,
        lambda_se,
        beta,
        gamma: model.gamma(&p),
        gamma_x: model.gamma_x(&p),
        vcov,
        j_stat: jt.statistic,
        j_df,
        j_pvalue: jt.p_value,
        converged: run.converged,
        iterations: run.iterations,
        objective: run.objective,
        gradient_norm: run.gradient_norm,
        weighting_ridged: ridged,
        instrument_order: data.names().instruments.clone(),
        outcome_names: data.names().outcomes.clone(),
        n,
    })
}

/// Consistent, cheap starting values: Λ from the first L rows of the
/// just-identified Π̂; each free weight row from a sum-constrained least
/// squares of its Π̂ row on the defining rows (solved in difference
/// coordinates); β and the first stage from reduced-form linear fits.
fn initial_params(model: &FateModel) -> Result<Vec<f64>> {
    let data = model.data();
    let (j, k, r, l) = model.dims();
    let mut p = vec![0.0; model.n_params()];

    let pm = pi_matrix(data)?;

    for jj in 0..j {
        for m in 0..l {
            p[model.lambda_index(jj, m)] = pm.estimates.get(m, jj);
        }
    }

    for ki in l..k {
        if l == 1 {
            continue;
        }
        // Fit π_k ≈ θ_k Λ0 with Σθ = 1: regress (π_k - Λ0[L-1]) on the
        // rows (Λ0[m] - Λ0[L-1]).
        let design = Matrix::from_fn(j, l - 1, |jj, m| {
            pm.estimates.get(m, jj) - pm.estimates.get(l - 1, jj)
        });
        let rhs = Matrix::from_fn(j, 1, |jj, _| {
            pm.estimates.get(ki, jj) - pm.estimates.get(l - 1, jj)
        });
        match solve_least_squares(&design, &rhs) {
            Ok(coef) => {
                for m in 0..l - 1 {
                    p[model.theta_index(ki, m)] = coef.get(m, 0);
                }
            }
            Err(_) => {
                // Defining rows indistinguishable at the start: equal weights.
                for m in 0..l - 1 {
                    p[model.theta_index(ki, m)] = 1.0 / l as f64;
                }
            }
        }
    }

    // Reduced-form OLS of [Y D] on [Z X]: X-block rows give β_j and γ_x,
    // the Z-block of the D column gives γ.
    let s = data.instrument_block();
    let coef = solve_least_squares(&s, &data.y().hcat(data.d()))?;
    for jj in 0..j {
        for b in 0..r {
            p[model.beta_index(jj, b)] = coef.get(k + b, jj);
        }
    }
    for b in 0..r {
        p[model.gamma_x_index(b)] = coef.get(k + b, j);
    }
    for ki in 0..k {
        p[model.gamma_index(ki)] = coef.get(ki, j);
    }
    Ok(p)
}

impl FateEstimate {
    /// Text report mirroring the published layout: outcome rows against
    /// component columns with standard errors beneath, the weight matrix
    /// next, and the overidentification test in the footer. An optional
    /// divisor rescales the reported treatment effects at render time
    /// only.
    pub fn to_table(&self, annualize: Option<f64>) -> String {
        let div = annualize.unwrap_or(1.0);
        let (l, j) = (self.lambda.rows(), self.lambda.cols());
        let k = self.theta.rows();
        let mut out = String::new();

        out.push_str("Component treatment effects\n");
        out.push_str(&format!("{:<12}", ""));
        for m in 0..l {
            out.push_str(&format!("{:>14}", format!("component {}", m + 1)));
        }
        out.push('\n');
        for jj in 0..j {
            out.push_str(&format!("{:<12}", self.outcome_names[jj]));
            for m in 0..l {
                out.push_str(&format!("{:>14.3}", self.lambda.get(m, jj) / div));
            }
            out.push('\n');
            out.push_str(&format!("{:<12}", ""));
            for m in 0..l {
                out.push_str(&format!(
                    "{:>14}",
                    format!("({:.3})", self.lambda_se.get(m, jj) / div)
                ));
            }
            out.push('\n');
        }

        out.push_str("\nInstrument weights on components\n");
        for ki in 0..k {
            out.push_str(&format!("{:<12}", self.instrument_order[ki]));
            for m in 0..l {
                out.push_str(&format!("{:>14.3}", self.theta.get(ki, m)));
            }
            if ki < l {
                out.push_str("   (defining)");
            }
            out.push('\n');
            if ki >= l {
                out.push_str(&format!("{:<12}", ""));
                for m in 0..l {
                    out.push_str(&format!(
                        "{:>14}",
                        format!("({:.3})", self.theta_se.get(ki, m))
                    ));
                }
                out.push('\n');
            }
        }

        out.push_str(&format!(
            "\nJ statistic {:.3} on {} df (p = {:.3}); N = {}{}{}\n",
            self.j_stat,
            self.j_df,
            self.j_pvalue,
            self.n,
            if self.converged { "" } else { "; NOT CONVERGED" },
            if self.weighting_ridged {
                "; ridge-regularized weighting"
            } else {
                ""
            },
        ));
        if let Some(d) = annualize {
            out.push_str(&format!("Treatment effects divided by {d}.\n"));
        }
        out
    }

    /// Largest absolute violation of the row-sum-to-one constraint.
    pub fn max_row_sum_violation(&self) -> f64 {
        (0..self.theta.rows())
            .map(|k| (self.theta.row(k).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Builds column names for reports after reordering.
#[allow(dead_code)]
fn reordered_names(names: &ColumnNames, perm: &[usize]) -> Vec<String> {
    perm.iter().map(|&i| names.instruments[i].clone()).collect()
}
