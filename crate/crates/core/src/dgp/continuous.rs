//! Linear generator with continuous component treatment intensities.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dgp::{DgpTruth, SyntheticData};
use crate::error::{Error, Result};
use crate::iv::{ColumnNames, Dataset};
use crate::numerics::{cholesky, RealMatrix, RngSeed};

type Matrix = RealMatrix<f64>;

/// Marginal distribution of one instrument column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum InstrumentDist {
    StandardNormal,
    Bernoulli { p: f64 },
}

/// Configuration of the continuous-component generator:
///
///   f_{iℓ} = X_i γ_{xℓ} + Σ_k z_{ik} γ_{kℓ} + u_{iℓ}
///   D_i    = Σ_ℓ f_{iℓ}
///   Y_{ij} = X_i α_j + Σ_ℓ f_{iℓ} λ_{ℓj} + ξ_{ij}
///
/// Controls are an intercept plus standard-normal columns.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContinuousDgpConfig {
    pub n: usize,
    /// Instrument loadings on components (K×L).
    pub gamma: Matrix,
    /// Control loadings on components (R×L).
    pub gamma_x: Matrix,
    /// Control effects on outcomes (R×J).
    pub alpha: Matrix,
    /// Component effects on outcomes (L×J).
    pub lambda: Matrix,
    /// Standard deviation of the outcome disturbances ξ.
    pub sigma_xi: f64,
    /// Standard deviations of the component disturbances u (length L).
    pub sigma_u: Vec<f64>,
    /// Correlation of the component disturbances (L×L).
    pub component_error_corr: Matrix,
    /// Marginal distribution per instrument (length K).
    pub instrument_dists: Vec<InstrumentDist>,
}

impl ContinuousDgpConfig {
    pub fn k(&self) -> usize {
        self.gamma.rows()
    }

    pub fn l(&self) -> usize {
        self.gamma.cols()
    }

    pub fn r(&self) -> usize {
        self.gamma_x.rows()
    }

    pub fn j(&self) -> usize {
        self.alpha.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let (k, l, r, j) = (self.k(), self.l(), self.r(), self.j());
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be positive".into()));
        }
        if r < 1 {
            return Err(Error::InvalidConfig(
                "need at least the intercept control".into(),
            ));
        }
        if self.gamma_x.cols() != l {
            return Err(Error::InvalidConfig(format!(
                "gamma_x has {} columns, expected L={l}",
                self.gamma_x.cols()
            )));
        }
        if self.alpha.rows() != r {
            return Err(Error::InvalidConfig(format!(
                "alpha has {} rows, expected R={r}",
                self.alpha.rows()
            )));
        }
        if self.lambda.rows() != l || self.lambda.cols() != j {
            return Err(Error::InvalidConfig(format!(
                "lambda is {}x{}, expected {l}x{j}",
                self.lambda.rows(),
                self.lambda.cols()
            )));
        }
        if self.sigma_u.len() != l {
            return Err(Error::InvalidConfig(format!(
                "sigma_u has length {}, expected L={l}",
                self.sigma_u.len()
            )));
        }
        if self.sigma_xi < 0.0 || self.sigma_u.iter().any(|&s| s < 0.0) {
            return Err(Error::InvalidConfig("noise scales must be nonnegative".into()));
        }
        if self.instrument_dists.len() != k {
            return Err(Error::InvalidConfig(format!(
                "instrument_dists has length {}, expected K={k}",
                self.instrument_dists.len()
            )));
        }
        for d in &self.instrument_dists {
            if let InstrumentDist::Bernoulli { p } = d {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidConfig(format!(
                        "Bernoulli probability {p} outside [0, 1]"
                    )));
                }
            }
        }
        if self.component_error_corr.rows() != l || self.component_error_corr.cols() != l {
            return Err(Error::InvalidConfig(
                "component_error_corr must be L×L".into(),
            ));
        }
        // Symmetric positive definite with unit diagonal.
        for a in 0..l {
            if (self.component_error_corr.get(a, a) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidConfig(
                    "component_error_corr diagonal must be 1".into(),
                ));
            }
            for b in 0..l {
                let diff =
                    self.component_error_corr.get(a, b) - self.component_error_corr.get(b, a);
                if diff.abs() > 1e-12 {
                    return Err(Error::InvalidConfig(
                        "component_error_corr must be symmetric".into(),
                    ));
                }
            }
        }
        cholesky(&self.component_error_corr).map_err(|_| {
            Error::InvalidConfig("component_error_corr must be positive definite".into())
        })?;
        Ok(())
    }

    /// First-stage truth implied by the loadings: γ_k = Σ_ℓ γ_{kℓ} and
    /// θ_{kℓ} = γ_{kℓ}/γ_k (rows left at zero where γ_k = 0).
    pub fn truth(&self) -> DgpTruth {
        let (k, l) = (self.k(), self.l());
        let gamma: Vec<f64> = (0..k).map(|ki| self.gamma.row(ki).iter().sum()).collect();
        let gamma_x: Vec<f64> = (0..self.r())
            .map(|ri| self.gamma_x.row(ri).iter().sum())
            .collect();
        let theta = Matrix::from_fn(k, l, |ki, li| {
            if gamma[ki] != 0.0 {
                self.gamma.get(ki, li) / gamma[ki]
            } else {
                0.0
            }
        });
        DgpTruth::Continuous {
            theta,
            lambda: self.lambda.clone(),
            gamma,
            gamma_x,
        }
    }
}

/// Draws a dataset from the continuous generator. Identical
/// (config, seed) pairs produce bit-identical output.
pub fn simulate_continuous(config: &ContinuousDgpConfig, seed: RngSeed) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = seed.rng();
    let (n, k, l, r, j) = (config.n, config.k(), config.l(), config.r(), config.j());

    let x = Matrix::from_fn(n, r, |_, c| {
        if c == 0 {
            1.0
        } else {
            StandardNormal.sample(&mut rng)
        }
    });
    let z = Matrix::from_fn(n, k, |_, c| match config.instrument_dists[c] {
        InstrumentDist::StandardNormal => StandardNormal.sample(&mut rng),
        InstrumentDist::Bernoulli { p } => {
            if rng.random::<f64>() < p {
                1.0
            } else {
                0.0
            }
        }
    });

    // Correlated component disturbances via the Cholesky factor of the
    // scaled correlation.
    let corr_chol = cholesky(&config.component_error_corr).expect("validated SPD");
    let mut factors = x.dot(&config.gamma_x).add(&z.dot(&config.gamma));
    let mut draw = vec![0.0; l];
    for i in 0..n {
        for d in draw.iter_mut() {
            *d = StandardNormal.sample(&mut rng);
        }
        for li in 0..l {
            let mut u = 0.0;
            for m in 0..=li {
                u += corr_chol.get(li, m) * draw[m];
            }
            let v = factors.get(i, li) + config.sigma_u[li] * u;
            factors.set(i, li, v);
        }
    }

    let d = Matrix::from_fn(n, 1, |i, _| factors.row(i).iter().sum());
    let mut y = x.dot(&config.alpha).add(&factors.dot(&config.lambda));
    if config.sigma_xi > 0.0 {
        for i in 0..n {
            for c in 0..j {
                let xi: f64 = StandardNormal.sample(&mut rng);
                y.set(i, c, y.get(i, c) + config.sigma_xi * xi);
            }
        }
    }

    let dataset = Dataset::new(y, d, z, x, ColumnNames::generic(j, k, r))?;
    Ok(SyntheticData {
        dataset,
        truth: config.truth(),
        latent: None,
        factors: Some(factors),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::solve_least_squares;

    fn base_config() -> ContinuousDgpConfig {
        ContinuousDgpConfig {
            n: 500,
            gamma: Matrix::from_vec(3, 2, vec![0.6, 0.0, 0.0, 0.6, 0.25, 0.35]).unwrap(),
            gamma_x: Matrix::from_vec(2, 2, vec![0.2, 0.3, 0.1, -0.1]).unwrap(),
            alpha: Matrix::from_vec(2, 2, vec![0.5, -0.2, 0.3, 0.4]).unwrap(),
            lambda: Matrix::from_vec(2, 2, vec![1.0, 1.2, -0.3, 0.5]).unwrap(),
            sigma_xi: 1.0,
            sigma_u: vec![0.5, 0.5],
            component_error_corr: Matrix::from_vec(2, 2, vec![1.0, 0.3, 0.3, 1.0]).unwrap(),
            instrument_dists: vec![InstrumentDist::StandardNormal; 3],
        }
    }

    #[test]
    fn zero_effects_and_noise_reduce_outcomes_to_controls() {
        let mut cfg = base_config();
        cfg.lambda = Matrix::zeros(2, 2);
        cfg.sigma_xi = 0.0;
        let out = simulate_continuous(&cfg, RngSeed::new(1, 0)).unwrap();
        let expected = out.dataset.x().dot(&cfg.alpha);
        assert!(out.dataset.y().max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn large_sample_first_stage_matches_loading_sums() {
        let mut cfg = base_config();
        cfg.n = 1_000_000;
        cfg.alpha = Matrix::from_vec(2, 1, vec![0.5, 0.3]).unwrap();
        cfg.lambda = Matrix::from_vec(2, 1, vec![1.0, -0.3]).unwrap();
        let out = simulate_continuous(&cfg, RngSeed::new(2, 0)).unwrap();
        let w = out.dataset.x().hcat(out.dataset.z());
        let coef = solve_least_squares(&w, out.dataset.d()).unwrap();
        let DgpTruth::Continuous { gamma, gamma_x, .. } = out.truth else {
            unreachable!()
        };
        for (ri, &g) in gamma_x.iter().enumerate() {
            assert!((coef.get(ri, 0) - g).abs() < 0.01, "gamma_x[{ri}]");
        }
        for (ki, &g) in gamma.iter().enumerate() {
            assert!((coef.get(2 + ki, 0) - g).abs() < 0.01, "gamma[{ki}]");
        }
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let cfg = base_config();
        let a = simulate_continuous(&cfg, RngSeed::new(9, 4)).unwrap();
        let b = simulate_continuous(&cfg, RngSeed::new(9, 4)).unwrap();
        assert_eq!(a.dataset.y().data(), b.dataset.y().data());
        assert_eq!(a.dataset.d().data(), b.dataset.d().data());
        assert_eq!(a.dataset.z().data(), b.dataset.z().data());
        assert_eq!(a.dataset.x().data(), b.dataset.x().data());
        assert_ne!(
            a.dataset.y().data(),
            simulate_continuous(&cfg, RngSeed::new(9, 5))
                .unwrap()
                .dataset
                .y()
                .data()
        );
    }

    #[test]
    fn theta_rows_sum_to_one() {
        let cfg = base_config();
        let DgpTruth::Continuous { theta, gamma, .. } = cfg.truth() else {
            unreachable!()
        };
        for k in 0..theta.rows() {
            if gamma[k] != 0.0 {
                let s: f64 = theta.row(k).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_correlation_is_rejected() {
        let mut cfg = base_config();
        cfg.component_error_corr = Matrix::from_vec(2, 2, vec![1.0, 1.5, 1.5, 1.0]).unwrap();
        assert!(matches!(
            simulate_continuous(&cfg, RngSeed::new(1, 0)),
            Err(Error::InvalidConfig(_))
        ));
    }
}
