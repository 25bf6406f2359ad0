//! Discrete-choice generator with binary mutually exclusive component
//! treatments and a fully enumerated counterfactual panel.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dgp::{DgpTruth, LatentPanel, SyntheticData};
use crate::error::{Error, Result};
use crate::iv::{ColumnNames, Dataset};
use crate::numerics::{cholesky, RealMatrix, RngSeed};

type Matrix = RealMatrix<f64>;

/// Utility shift of one component as an affine function of the scalar
/// instrument: μ(z) = intercept + slope·z. Affine shifts are enough to
/// realize boosting a single component, lifting all components in
/// parallel, or moving mass between components.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AffineUtility {
    pub intercept: f64,
    pub slope: f64,
}

impl AffineUtility {
    pub fn at(&self, z: f64) -> f64 {
        self.intercept + self.slope * z
    }
}

/// Configuration of the discrete-choice generator. Individual i draws
/// tastes U_i and chooses, at instrument value z, the option with the
/// highest utility among non-treatment (normalized to 0) and the L
/// components with utilities U_{iℓ} + μ_ℓ(z).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscreteDgpConfig {
    pub n: usize,
    /// Per-component utility shift (length L).
    pub utility_mu: Vec<AffineUtility>,
    /// Mean of the taste vector (length L).
    pub taste_mean: Vec<f64>,
    /// Covariance of the taste vector (L×L, positive definite).
    pub taste_cov: Matrix,
    /// Finite instrument support: (value, probability) pairs.
    pub instrument_support: Vec<(f64, f64)>,
    /// Mean treatment effect per component (length L).
    pub lambda: Vec<f64>,
    /// Standard deviation of individual effects around the mean
    /// (length L, zeros give homogeneous effects).
    pub effect_sd: Vec<f64>,
    /// Untreated potential outcome distribution.
    pub y0_mean: f64,
    pub y0_sd: f64,
}

impl DiscreteDgpConfig {
    pub fn l(&self) -> usize {
        self.utility_mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.l();
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be positive".into()));
        }
        if l == 0 {
            return Err(Error::InvalidConfig("need at least one component".into()));
        }
        if self.taste_mean.len() != l || self.lambda.len() != l || self.effect_sd.len() != l {
            return Err(Error::InvalidConfig(
                "taste_mean, lambda, effect_sd must all have length L".into(),
            ));
        }
        if self.taste_cov.rows() != l || self.taste_cov.cols() != l {
            return Err(Error::InvalidConfig("taste_cov must be L×L".into()));
        }
        cholesky(&self.taste_cov)
            .map_err(|_| Error::InvalidConfig("taste_cov must be positive definite".into()))?;
        if self.instrument_support.is_empty() {
            return Err(Error::InvalidConfig("instrument support is empty".into()));
        }
        let total: f64 = self.instrument_support.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "instrument support probabilities sum to {total}, expected 1"
            )));
        }
        if self.instrument_support.iter().any(|&(_, p)| p < 0.0) {
            return Err(Error::InvalidConfig(
                "instrument support probabilities must be nonnegative".into(),
            ));
        }
        for (a, &(za, _)) in self.instrument_support.iter().enumerate() {
            if self.instrument_support[a + 1..].iter().any(|&(zb, _)| zb == za) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate instrument support value {za}"
                )));
            }
        }
        if self.y0_sd < 0.0 || self.effect_sd.iter().any(|&s| s < 0.0) {
            return Err(Error::InvalidConfig("scales must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Choice rule: the highest-utility option wins, ties between components
/// resolve to the lowest index, and indifference with non-treatment
/// resolves toward treatment. Returns 0 for no treatment, 1..=L for a
/// component.
fn choose(utilities: &[f64]) -> u8 {
    let mut best = 0usize;
    let mut best_u = f64::NEG_INFINITY;
    for (l, &u) in utilities.iter().enumerate() {
        if u > best_u {
            best_u = u;
            best = l + 1;
        }
    }
    if best_u >= 0.0 {
        best as u8
    } else {
        0
    }
}

/// Draws a dataset plus its full counterfactual panel from the
/// discrete-choice generator.
pub fn simulate_discrete(config: &DiscreteDgpConfig, seed: RngSeed) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = seed.rng();
    let n = config.n;
    let l = config.l();
    let grid: Vec<f64> = config.instrument_support.iter().map(|&(z, _)| z).collect();
    let cum: Vec<f64> = config
        .instrument_support
        .iter()
        .scan(0.0, |acc, &(_, p)| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let taste_chol = cholesky(&config.taste_cov).expect("validated SPD");

    let mut y_untreated = Vec::with_capacity(n);
    let mut y_treated = Matrix::zeros(n, l);
    let mut assigned = Vec::with_capacity(n);
    let mut choices: Vec<Vec<u8>> = vec![vec![0u8; n]; grid.len()];
    let mut draw = vec![0.0; l];
    let mut tastes = vec![0.0; l];
    let mut utilities = vec![0.0; l];

    for i in 0..n {
        // Draw order is fixed per individual: instrument, tastes,
        // untreated outcome, effects.
        let uz = rng.random::<f64>();
        let zi = cum.iter().position(|&c| uz < c).unwrap_or(grid.len() - 1);
        assigned.push(zi);

        for d in draw.iter_mut() {
            *d = StandardNormal.sample(&mut rng);
        }
        for li in 0..l {
            let mut t = config.taste_mean[li];
            for m in 0..=li {
                t += taste_chol.get(li, m) * draw[m];
            }
            tastes[li] = t;
        }

        let y0_draw: f64 = StandardNormal.sample(&mut rng);
        let y0 = config.y0_mean + config.y0_sd * y0_draw;
        y_untreated.push(y0);
        for li in 0..l {
            let eps: f64 = StandardNormal.sample(&mut rng);
            y_treated.set(i, li, y0 + config.lambda[li] + config.effect_sd[li] * eps);
        }

        for (g, &z) in grid.iter().enumerate() {
            for li in 0..l {
                utilities[li] = tastes[li] + config.utility_mu[li].at(z);
            }
            choices[g][i] = choose(&utilities);
        }
    }

    let panel = LatentPanel {
        grid: grid.clone(),
        y_untreated,
        y_treated,
        choices,
        assigned,
        lambda_mean: config.lambda.clone(),
        homogeneous_effects: config.effect_sd.iter().all(|&s| s == 0.0),
    };

    // Observed rows evaluate the panel at the assigned draw.
    let y = Matrix::from_fn(n, 1, |i, _| panel.outcome_at(panel.assigned[i], i));
    let d = Matrix::from_fn(n, 1, |i, _| {
        if panel.treated(panel.assigned[i], i) {
            1.0
        } else {
            0.0
        }
    });
    let z = Matrix::from_fn(n, 1, |i, _| grid[panel.assigned[i]]);
    let x = Matrix::from_fn(n, 1, |_, _| 1.0);
    let dataset = Dataset::new(y, d, z, x, ColumnNames::generic(1, 1, 1))?;

    Ok(SyntheticData {
        dataset,
        truth: DgpTruth::Discrete {
            lambda: config.lambda.clone(),
            effect_sd: config.effect_sd.clone(),
        },
        latent: Some(panel),
        factors: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_component_config() -> DiscreteDgpConfig {
        DiscreteDgpConfig {
            n: 2000,
            utility_mu: vec![
                AffineUtility {
                    intercept: -0.5,
                    slope: 1.0,
                },
                AffineUtility {
                    intercept: -0.2,
                    slope: 0.3,
                },
            ],
            taste_mean: vec![0.0, 0.0],
            taste_cov: Matrix::from_vec(2, 2, vec![1.0, 0.2, 0.2, 1.0]).unwrap(),
            instrument_support: vec![(0.0, 0.5), (1.0, 0.5)],
            lambda: vec![1.0, 0.4],
            effect_sd: vec![0.0, 0.0],
            y0_mean: 0.0,
            y0_sd: 1.0,
        }
    }

    #[test]
    fn dominant_component_always_chosen() {
        let mut cfg = two_component_config();
        cfg.utility_mu[0] = AffineUtility {
            intercept: 1e6,
            slope: 0.0,
        };
        let out = simulate_discrete(&cfg, RngSeed::new(1, 0)).unwrap();
        let panel = out.latent.unwrap();
        for g in 0..panel.grid.len() {
            assert!(panel.choices[g].iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn tie_breaks_toward_lowest_component_and_treatment() {
        // Equal nonnegative utilities: component 1 wins over component 2,
        // and exact indifference with non-treatment still treats.
        assert_eq!(choose(&[0.7, 0.7]), 1);
        assert_eq!(choose(&[0.0, 0.0]), 1);
        assert_eq!(choose(&[0.0]), 1);
        assert_eq!(choose(&[-0.1, -0.2]), 0);
        assert_eq!(choose(&[0.2, 0.8]), 2);
    }

    #[test]
    fn observed_rows_match_panel() {
        let out = simulate_discrete(&two_component_config(), RngSeed::new(3, 1)).unwrap();
        let panel = out.latent.as_ref().unwrap();
        for i in 0..out.dataset.n() {
            let g = panel.assigned[i];
            assert_eq!(out.dataset.z().get(i, 0), panel.grid[g]);
            let d = out.dataset.d().get(i, 0);
            assert_eq!(d != 0.0, panel.treated(g, i));
            assert_eq!(out.dataset.y().get(i, 0), panel.outcome_at(g, i));
        }
    }

    #[test]
    fn mutual_exclusivity_is_structural() {
        let out = simulate_discrete(&two_component_config(), RngSeed::new(4, 0)).unwrap();
        let panel = out.latent.unwrap();
        for g in 0..panel.grid.len() {
            for i in 0..panel.n() {
                let total: usize = (0..panel.n_components())
                    .filter(|&l| panel.takes(g, i, l))
                    .count();
                assert!(total <= 1);
                assert_eq!(total == 1, panel.treated(g, i));
            }
        }
    }

    #[test]
    fn identical_seeds_reproduce_panels() {
        let cfg = two_component_config();
        let a = simulate_discrete(&cfg, RngSeed::new(5, 2)).unwrap();
        let b = simulate_discrete(&cfg, RngSeed::new(5, 2)).unwrap();
        assert_eq!(a.latent.as_ref().unwrap().choices, b.latent.as_ref().unwrap().choices);
        assert_eq!(a.dataset.y().data(), b.dataset.y().data());
    }

    #[test]
    fn bad_support_probabilities_rejected() {
        let mut cfg = two_component_config();
        cfg.instrument_support = vec![(0.0, 0.6), (1.0, 0.5)];
        assert!(matches!(
            simulate_discrete(&cfg, RngSeed::new(1, 0)),
            Err(Error::InvalidConfig(_))
        ));
    }
}
