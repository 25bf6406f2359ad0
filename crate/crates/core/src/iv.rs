//! Classical estimators on observed data: first-stage diagnostics,
//! leave-one-instrument-out just-identified IV, the stacked Π matrix,
//! and pooled IV-GMM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{instrument_moment_rows, moment_covariance};
use crate::numerics::{
    inverse_spd, residualize, solve_least_squares, solve_with_cholesky, QrFactor, RealMatrix,
    RANK_REL_TOL,
};
use crate::optim::{block_diag_weight, invert_moment_covariance, weighted_gauss_newton};

type Matrix = RealMatrix<f64>;

/// Reported Wald statistics are capped here when the residual variance
/// collapses to zero (noiseless designs).
const F_CAP: f64 = 1e12;

/// Column labels for the four data blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnNames {
    pub outcomes: Vec<String>,
    pub treatment: String,
    pub instruments: Vec<String>,
    pub controls: Vec<String>,
}

impl ColumnNames {
    /// Generic names `y1..yJ`, `d`, `z1..zK`, `const, x1..x(R-1)`.
    pub fn generic(j: usize, k: usize, r: usize) -> Self {
        Self {
            outcomes: (1..=j).map(|i| format!("y{i}")).collect(),
            treatment: "d".to_string(),
            instruments: (1..=k).map(|i| format!("z{i}")).collect(),
            controls: std::iter::once("const".to_string())
                .chain((1..r).map(|i| format!("x{i}")))
                .collect(),
        }
    }
}

/// Observed rectangular data: outcomes (N×J), composite treatment (N×1),
/// excluded instruments (N×K), controls (N×R with intercept first).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dataset {
    y: Matrix,
    d: Matrix,
    z: Matrix,
    x: Matrix,
    names: ColumnNames,
}

impl Dataset {
    pub fn new(y: Matrix, d: Matrix, z: Matrix, x: Matrix, names: ColumnNames) -> Result<Self> {
        let n = y.rows();
        if d.rows() != n || z.rows() != n || x.rows() != n {
            return Err(Error::DimensionMismatch(format!(
                "row counts differ: Y {n}, D {}, Z {}, X {}",
                d.rows(),
                z.rows(),
                x.rows()
            )));
        }
        if d.cols() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "treatment must be a single column, got {}",
                d.cols()
            )));
        }
        let (k, r) = (z.cols(), x.cols());
        if n <= k + r {
            return Err(Error::DimensionMismatch(format!(
                "need more observations than instruments plus controls: N={n}, K+R={}",
                k + r
            )));
        }
        if names.outcomes.len() != y.cols()
            || names.instruments.len() != k
            || names.controls.len() != r
        {
            return Err(Error::DimensionMismatch(
                "column names do not match block shapes".to_string(),
            ));
        }
        // [Z X] must be full column rank up to tolerance.
        QrFactor::new(&z.hcat(&x), RANK_REL_TOL)?;
        Ok(Self { y, d, z, x, names })
    }

    pub fn n(&self) -> usize {
        self.y.rows()
    }

    pub fn n_outcomes(&self) -> usize {
        self.y.cols()
    }

    pub fn n_instruments(&self) -> usize {
        self.z.cols()
    }

    pub fn n_controls(&self) -> usize {
        self.x.cols()
    }

    pub fn y(&self) -> &Matrix {
        &self.y
    }

    pub fn d(&self) -> &Matrix {
        &self.d
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn names(&self) -> &ColumnNames {
        &self.names
    }

    /// Stacked instrument block `[Z X]` used both as the GMM instrument
    /// vector and as the reduced-form design.
    pub fn instrument_block(&self) -> Matrix {
        self.z.hcat(&self.x)
    }

    /// Permutes instrument columns so the named instruments come first,
    /// keeping the remaining instruments in their original order. Returns
    /// the permuted dataset and the applied permutation.
    pub fn reorder_instruments(&self, defining: &[String]) -> Result<(Dataset, Vec<usize>)> {
        let mut perm = Vec::with_capacity(self.z.cols());
        for name in defining {
            let idx = self
                .names
                .instruments
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::UnknownInstrument(name.clone()))?;
            if perm.contains(&idx) {
                return Err(Error::InvalidConfig(format!(
                    "defining instrument {name} listed twice"
                )));
            }
            perm.push(idx);
        }
        for idx in 0..self.z.cols() {
            if !perm.contains(&idx) {
                perm.push(idx);
            }
        }
        let z = self.z.select_cols(&perm);
        let names = ColumnNames {
            instruments: perm
                .iter()
                .map(|&i| self.names.instruments[i].clone())
                .collect(),
            ..self.names.clone()
        };
        Ok((
            Dataset {
                y: self.y.clone(),
                d: self.d.clone(),
                z,
                x: self.x.clone(),
                names,
            },
            perm,
        ))
    }
}

/// First-stage regression of the treatment on controls and instruments,
/// with heteroskedasticity-robust joint and per-instrument strength tests.
#[derive(Clone, Debug, Serialize)]
pub struct FirstStage {
    /// Coefficients on the excluded instruments.
    pub gamma: Vec<f64>,
    /// Coefficients on the controls (intercept first).
    pub gamma_x: Vec<f64>,
    /// Robust Wald test of all instrument coefficients being zero,
    /// divided by the number of instruments.
    pub f_joint: f64,
    /// Robust Wald test of each instrument alone (with controls only).
    pub f_single: Vec<f64>,
    /// Robust t-statistics of the instrument coefficients in the full
    /// first stage.
    pub t_gamma: Vec<f64>,
    #[serde(skip)]
    pub fitted: Matrix,
    #[serde(skip)]
    pub residuals: Matrix,
}

/// OLS with HC0 covariance; returns (coefficients, vcov, residuals, fitted).
fn ols_hc0(w: &Matrix, b: &Matrix) -> Result<(Vec<f64>, Matrix, Matrix, Matrix)> {
    let coef = solve_least_squares(w, b)?;
    let fitted = w.dot(&coef);
    let resid = b.sub(&fitted);
    let p = w.cols();
    let mut meat = Matrix::zeros(p, p);
    for i in 0..w.rows() {
        let e2 = resid.get(i, 0) * resid.get(i, 0);
        if e2 == 0.0 {
            continue;
        }
        let row = w.row(i);
        for a in 0..p {
            let ra = e2 * row[a];
            for b2 in 0..p {
                meat[(a, b2)] += ra * row[b2];
            }
        }
    }
    let bread = inverse_spd(&w.t_dot(w))?;
    let vcov = bread.dot(&meat).dot(&bread);
    Ok((coef.col(0), vcov, resid, fitted))
}

/// Wald statistic for a coefficient sub-block being zero; `None` when
/// the covariance sub-block is singular (zero residuals), which callers
/// report as the capped value.
fn wald_block(coef: &[f64], vcov: &Matrix, idx: std::ops::Range<usize>) -> Option<f64> {
    let q = idx.len();
    let sub = Matrix::from_fn(q, q, |a, b| vcov[(idx.start + a, idx.start + b)]);
    let g = Matrix::from_vec(q, 1, coef[idx].to_vec()).ok()?;
    let l = crate::numerics::cholesky(&sub).ok()?;
    let solved = solve_with_cholesky(&l, &g);
    let wald = g.t_dot(&solved).get(0, 0);
    wald.is_finite().then_some(wald)
}

/// OLS of the treatment on `[X Z]` with robust instrument-strength tests.
pub fn first_stage(data: &Dataset) -> Result<FirstStage> {
    let (k, r) = (data.n_instruments(), data.n_controls());
    let w = data.x().hcat(data.z());
    let (coef, vcov, residuals, fitted) = ols_hc0(&w, data.d())?;
    let gamma_x = coef[..r].to_vec();
    let gamma = coef[r..].to_vec();
    let f_joint = wald_block(&coef, &vcov, r..r + k)
        .map(|w| (w / k as f64).min(F_CAP))
        .unwrap_or(F_CAP);
    let t_gamma: Vec<f64> = (0..k)
        .map(|i| {
            let v = vcov[(r + i, r + i)];
            if v > 0.0 {
                gamma[i] / v.sqrt()
            } else {
                F_CAP
            }
        })
        .collect();
    let mut f_single = Vec::with_capacity(k);
    for i in 0..k {
        let wi = data.x().hcat(&data.z().col_matrix(i));
        let (ci, vi, _, _) = ols_hc0(&wi, data.d())?;
        f_single.push(wald_block(&ci, &vi, r..r + 1).map(|w| w.min(F_CAP)).unwrap_or(F_CAP));
    }
    Ok(FirstStage {
        gamma,
        gamma_x,
        f_joint,
        f_single,
        t_gamma,
        fitted,
        residuals,
    })
}

/// Just-identified IV estimate for one instrument across all outcomes.
#[derive(Clone, Debug, Serialize)]
pub struct JustIdentifiedIv {
    pub instrument: usize,
    /// π̂_kj for every outcome j.
    pub pi: Vec<f64>,
    /// Heteroskedasticity-robust standard errors.
    pub se: Vec<f64>,
    /// Set when the instrument's robust first-stage |t| falls below 2.
    pub weak_instrument: bool,
}

/// IV estimate of the treatment effect driven by instrument `k` alone,
/// with all other instruments in the control set. Weak instruments are
/// estimated anyway and flagged, never refused.
pub fn just_identified_iv(data: &Dataset, k: usize) -> Result<JustIdentifiedIv> {
    let stage = first_stage(data)?;
    just_identified_iv_with_stage(data, k, &stage)
}

fn just_identified_iv_with_stage(
    data: &Dataset,
    k: usize,
    stage: &FirstStage,
) -> Result<JustIdentifiedIv> {
    let kk = data.n_instruments();
    if k >= kk {
        return Err(Error::DimensionMismatch(format!(
            "instrument index {k} out of range (K={kk})"
        )));
    }
    // Controls for this estimate: all other instruments plus X.
    let others: Vec<usize> = (0..kk).filter(|&i| i != k).collect();
    let xk = if others.is_empty() {
        data.x().clone()
    } else {
        data.z().select_cols(&others).hcat(data.x())
    };
    // w = M_{Xk} D̂ with D̂ the first-stage fit.
    let w = residualize(&stage.fitted, &xk)?;
    let denom = w
        .data()
        .iter()
        .zip(data.d().data())
        .map(|(&a, &b)| a * b)
        .sum::<f64>();
    if denom.abs() <= 1e-12 * w.norm() * data.d().norm() {
        return Err(Error::DivisionByZeroFirstStage { instrument: k });
    }

    let n = data.n();
    let j = data.n_outcomes();
    let num = w.t_dot(data.y()); // 1×J
    let pi: Vec<f64> = (0..j).map(|jj| num.get(0, jj) / denom).collect();

    // Second-stage residuals at the observed treatment for the sandwich.
    let mut e0 = Matrix::zeros(n, j);
    for i in 0..n {
        let di = data.d().get(i, 0);
        for jj in 0..j {
            e0.set(i, jj, data.y().get(i, jj) - di * pi[jj]);
        }
    }
    let beta = solve_least_squares(&xk, &e0)?;
    let resid = e0.sub(&xk.dot(&beta));
    let se: Vec<f64> = (0..j)
        .map(|jj| {
            let s: f64 = (0..n)
                .map(|i| {
                    let wi = w.get(i, 0);
                    let ei = resid.get(i, jj);
                    wi * wi * ei * ei
                })
                .sum();
            s.sqrt() / denom.abs()
        })
        .collect();

    Ok(JustIdentifiedIv {
        instrument: k,
        pi,
        se,
        weak_instrument: stage.t_gamma[k].abs() < 2.0,
    })
}

/// The K×J array of just-identified IV estimands, one row per excluded
/// instrument.
#[derive(Clone, Debug, Serialize)]
pub struct PiMatrix {
    pub estimates: Matrix,
    pub std_errors: Matrix,
    /// First-stage coefficient of each instrument.
    pub first_stage_coefs: Vec<f64>,
    pub weak_instruments: Vec<bool>,
    pub n_used: usize,
}

/// Stacks `just_identified_iv` over every instrument. Deterministic given
/// the data; per-instrument failures carry the instrument index.
pub fn pi_matrix(data: &Dataset) -> Result<PiMatrix> {
    let stage = first_stage(data)?;
    let (k, j) = (data.n_instruments(), data.n_outcomes());
    let mut estimates = Matrix::zeros(k, j);
    let mut std_errors = Matrix::zeros(k, j);
    let mut weak = Vec::with_capacity(k);
    for ki in 0..k {
        let fit =
            just_identified_iv_with_stage(data, ki, &stage).map_err(|e| e.for_instrument(ki))?;
        for jj in 0..j {
            estimates.set(ki, jj, fit.pi[jj]);
            std_errors.set(ki, jj, fit.se[jj]);
        }
        weak.push(fit.weak_instrument);
    }
    Ok(PiMatrix {
        estimates,
        std_errors,
        first_stage_coefs: stage.gamma.clone(),
        weak_instruments: weak,
        n_used: data.n(),
    })
}

impl PiMatrix {
    /// Aligned text table: instrument rows by outcome columns, estimate
    /// over standard error, three decimals.
    pub fn to_table(&self, names: &ColumnNames) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<14}", ""));
        for name in &names.outcomes {
            out.push_str(&format!("{name:>12}"));
        }
        out.push('\n');
        for k in 0..self.estimates.rows() {
            let label = &names.instruments[k];
            out.push_str(&format!("{label:<14}"));
            for j in 0..self.estimates.cols() {
                out.push_str(&format!("{:>12.3}", self.estimates.get(k, j)));
            }
            if self.weak_instruments[k] {
                out.push_str("  [weak]");
            }
            out.push('\n');
            out.push_str(&format!("{:<14}", ""));
            for j in 0..self.estimates.cols() {
                out.push_str(&format!("{:>12}", format!("({:.3})", self.std_errors.get(k, j))));
            }
            out.push('\n');
        }
        out.push_str(&format!("N = {}\n", self.n_used));
        out
    }
}

/// Pooled IV-GMM: every instrument is constrained to carry the same
/// per-outcome treatment effect. Second stages `Y_j = Xβ_j + Zγ·π_j`
/// share the first stage `D = Xγ_x + Zγ`; estimated by two-step GMM on
/// the stacked instrument moments.
#[derive(Clone, Debug, Serialize)]
pub struct IvGmmEstimate {
    /// Per-outcome composite treatment effects.
    pub effects: Vec<f64>,
    pub se_effects: Vec<f64>,
    pub beta: Matrix,
    pub gamma: Vec<f64>,
    pub gamma_x: Vec<f64>,
    pub j_stat: f64,
    pub j_df: usize,
    pub j_pvalue: f64,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
}

struct IvGmmWork<'a> {
    data: &'a Dataset,
    s: Matrix,
    sx: Matrix,
    sz: Matrix,
    sy: Matrix,
    sd: Matrix,
}

impl<'a> IvGmmWork<'a> {
    fn new(data: &'a Dataset) -> Self {
        let s = data.instrument_block();
        let n = data.n() as f64;
        Self {
            sx: s.t_dot(data.x()).scale(1.0 / n),
            sz: s.t_dot(data.z()).scale(1.0 / n),
            sy: s.t_dot(data.y()).scale(1.0 / n),
            sd: s.t_dot(data.d()).scale(1.0 / n),
            s,
            data,
        }
    }

    fn dims(&self) -> (usize, usize, usize, usize) {
        (
            self.data.n_outcomes(),
            self.data.n_instruments(),
            self.data.n_controls(),
            self.s.cols(),
        )
    }

    // Parameter layout: [(β_j, π_j) for j = 1..J], γ_x, γ.
    fn n_params(&self) -> usize {
        let (j, k, r, _) = self.dims();
        j * (r + 1) + r + k
    }

    fn moments(&self, p: &[f64]) -> (Vec<f64>, Matrix) {
        let (j, k, r, m) = self.dims();
        let n_par = self.n_params();
        let gx = &p[j * (r + 1)..j * (r + 1) + r];
        let gamma = &p[j * (r + 1) + r..];
        let mut gbar = vec![0.0; (j + 1) * m];
        let mut jac = Matrix::zeros((j + 1) * m, n_par);
        let szg = self.sz.dot_vec(gamma); // S'Zγ / N
        for jj in 0..j {
            let beta = &p[jj * (r + 1)..jj * (r + 1) + r];
            let pi = p[jj * (r + 1) + r];
            let base = jj * m;
            for a in 0..m {
                let mut v = self.sy.get(a, jj) - szg[a] * pi;
                for (b, &bb) in beta.iter().enumerate() {
                    v -= self.sx.get(a, b) * bb;
                }
                gbar[base + a] = v;
                for (b, _) in beta.iter().enumerate() {
                    jac.set(base + a, jj * (r + 1) + b, -self.sx.get(a, b));
                }
                jac.set(base + a, jj * (r + 1) + r, -szg[a]);
                for ki in 0..k {
                    jac.set(base + a, j * (r + 1) + r + ki, -pi * self.sz.get(a, ki));
                }
            }
        }
        let base = j * m;
        for a in 0..m {
            let mut v = self.sd.get(a, 0);
            for (b, &g) in gx.iter().enumerate() {
                v -= self.sx.get(a, b) * g;
            }
            for (ki, &g) in gamma.iter().enumerate() {
                v -= self.sz.get(a, ki) * g;
            }
            gbar[base + a] = v;
            for b in 0..r {
                jac.set(base + a, j * (r + 1) + b, -self.sx.get(a, b));
            }
            for ki in 0..k {
                jac.set(base + a, j * (r + 1) + r + ki, -self.sz.get(a, ki));
            }
        }
        (gbar, jac)
    }

    /// Per-observation moment rows at the given parameters.
    fn per_obs_moments(&self, p: &[f64]) -> Matrix {
        let (j, _, r, _) = self.dims();
        let n = self.data.n();
        let gx = &p[j * (r + 1)..j * (r + 1) + r];
        let gamma = &p[j * (r + 1) + r..];
        let zg = self.data.z().dot_vec(gamma);
        let mut resid = Matrix::zeros(n, j + 1);
        for i in 0..n {
            let xi = self.data.x().row(i);
            for jj in 0..j {
                let beta = &p[jj * (r + 1)..jj * (r + 1) + r];
                let pi = p[jj * (r + 1) + r];
                let mut v = self.data.y().get(i, jj) - zg[i] * pi;
                for (b, &bb) in beta.iter().enumerate() {
                    v -= xi[b] * bb;
                }
                resid.set(i, jj, v);
            }
            let mut v = self.data.d().get(i, 0) - zg[i];
            for (b, &g) in gx.iter().enumerate() {
                v -= xi[b] * g;
            }
            resid.set(i, j, v);
        }
        instrument_moment_rows(&self.s, &resid)
    }
}

/// Two-step pooled IV-GMM fit. Uses the same weighting conventions as
/// the factor estimator so the L = 1 nesting identity is exact.
pub fn iv_gmm_fit(data: &Dataset) -> Result<IvGmmEstimate> {
    let work = IvGmmWork::new(data);
    let (j, k, r, _) = work.dims();
    let n = data.n();

    // Start from reduced-form and first-stage linear fits.
    let s = &work.s;
    let rf = solve_least_squares(s, &data.y().hcat(data.d()))?;
    let mut p0 = vec![0.0; work.n_params()];
    let gamma0: Vec<f64> = (0..k).map(|ki| rf.get(ki, j)).collect();
    let g_norm2: f64 = gamma0.iter().map(|g| g * g).sum();
    for jj in 0..j {
        for b in 0..r {
            p0[jj * (r + 1) + b] = rf.get(k + b, jj);
        }
        let proj: f64 = (0..k).map(|ki| rf.get(ki, jj) * gamma0[ki]).sum();
        p0[jj * (r + 1) + r] = if g_norm2 > 0.0 { proj / g_norm2 } else { 0.0 };
    }
    for b in 0..r {
        p0[j * (r + 1) + b] = rf.get(k + b, j);
    }
    p0[j * (r + 1) + r..].copy_from_slice(&gamma0);

    // Step 1: block-diagonal (S'S/N)^{-1} weighting.
    let w1 = block_diag_weight(&s.t_dot(s).scale(1.0 / n as f64), j + 1)?;
    let w1_chol = crate::numerics::cholesky(&w1)?;
    let run1 = weighted_gauss_newton(|p| work.moments(p), p0, &w1_chol, 200, 1e-12, 1e-11);

    // Step 2: efficient weighting from the step-1 moment covariance.
    let cov = moment_covariance(&work.per_obs_moments(&run1.params));
    let (w2, _) = invert_moment_covariance(&cov);
    let w2_chol = crate::numerics::cholesky(&w2)?;
    let run2 = weighted_gauss_newton(|p| work.moments(p), run1.params, &w2_chol, 200, 1e-12, 1e-11);

    let (gbar, jac) = work.moments(&run2.params);
    let j_df = j * (k.saturating_sub(1));
    let jt = crate::inference::hansen_j(&gbar, &w2, n, j_df)?;
    let s_step2 = moment_covariance(&work.per_obs_moments(&run2.params));
    let vcov = crate::inference::sandwich_vcov(&jac, &w2, &s_step2, n)?;

    let p = run2.params;
    let effects: Vec<f64> = (0..j).map(|jj| p[jj * (r + 1) + r]).collect();
    let se_effects: Vec<f64> = (0..j)
        .map(|jj| vcov[(jj * (r + 1) + r, jj * (r + 1) + r)].max(0.0).sqrt())
        .collect();
    let beta = Matrix::from_fn(r, j, |b, jj| p[jj * (r + 1) + b]);
    Ok(IvGmmEstimate {
        effects,
        se_effects,
        beta,
        gamma: p[j * (r + 1) + r..].to_vec(),
        gamma_x: p[j * (r + 1)..j * (r + 1) + r].to_vec(),
        j_stat: jt.statistic,
        j_df,
        j_pvalue: jt.p_value,
        converged: run2.converged,
        iterations: run2.iterations,
        objective: run2.objective,
        })
}
