//! Synthetic data generation and latent-data oracles.
//!
//! Two distinct generators: a linear model with continuous component
//! intensities, and a discrete-choice model with binary mutually
//! exclusive component treatments whose full counterfactual panel is
//! enumerable over a finite instrument grid. The oracles compute the
//! estimand decompositions directly from the counterfactuals.

mod continuous;
mod discrete;
mod oracle;

pub use continuous::{simulate_continuous, ContinuousDgpConfig, InstrumentDist};
pub use discrete::{simulate_discrete, AffineUtility, DiscreteDgpConfig};
pub use oracle::{
    check_condition, complier_defier_profile, oracle_iv_decomposition, wald_estimate,
    ComplierDefierProfile, ComponentGroups, ConditionKind, ConditionReport, ConditionWitness,
    OracleDecomposition, SurvivorDecomposition, WaldEstimate,
};

use serde::{Deserialize, Serialize};

use crate::iv::Dataset;
use crate::numerics::{inverse, RealMatrix};

type Matrix = RealMatrix<f64>;

/// True parameters implied by a generator configuration, used to score
/// Monte Carlo estimates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum DgpTruth {
    Continuous {
        /// Instrument weights on components, rows γ_k·/γ_k (K×L).
        theta: Matrix,
        /// Component effects per outcome (L×J).
        lambda: Matrix,
        /// Composite first-stage instrument coefficients (length K).
        gamma: Vec<f64>,
        /// Composite first-stage control coefficients (length R).
        gamma_x: Vec<f64>,
    },
    Discrete {
        /// Mean component treatment effects (length L).
        lambda: Vec<f64>,
        /// Individual-level effect spread around the means (length L).
        effect_sd: Vec<f64>,
    },
}

impl DgpTruth {
    /// Number of component treatments in the generating process.
    pub fn n_components(&self) -> usize {
        match self {
            DgpTruth::Continuous { lambda, .. } => lambda.rows(),
            DgpTruth::Discrete { lambda, .. } => lambda.len(),
        }
    }

    /// The estimand targeted by the normalized factor model with the
    /// first `l` instruments defining components: Λ_norm = Θ_L Λ and
    /// Θ_norm = Θ Θ_L^{-1}. Only defined when `l` equals the true
    /// component count and the defining block is invertible.
    pub fn normalized(&self, l: usize) -> Option<(Matrix, Matrix)> {
        let DgpTruth::Continuous { theta, lambda, .. } = self else {
            return None;
        };
        if l != lambda.rows() || theta.rows() < l {
            return None;
        }
        let theta_l = Matrix::from_fn(l, l, |a, b| theta.get(a, b));
        let inv = inverse(&theta_l).ok()?;
        Some((theta.dot(&inv), theta_l.dot(lambda)))
    }

    /// True just-identified estimand matrix Π = ΘΛ (continuous only).
    pub fn pi(&self) -> Option<Matrix> {
        match self {
            DgpTruth::Continuous { theta, lambda, .. } => Some(theta.dot(lambda)),
            DgpTruth::Discrete { .. } => None,
        }
    }
}

/// Ground truth for the discrete generator: potential outcomes and the
/// component treatment chosen by every individual at every point of the
/// instrument support grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LatentPanel {
    /// Instrument support values, in configuration order.
    pub grid: Vec<f64>,
    /// Untreated potential outcome per individual.
    pub y_untreated: Vec<f64>,
    /// Treated potential outcomes, one column per component (N×L).
    pub y_treated: Matrix,
    /// choices[g][i] is the component chosen by individual i at grid
    /// point g: 0 for no treatment, 1..=L for a component. Mutual
    /// exclusivity is structural.
    pub choices: Vec<Vec<u8>>,
    /// Index into `grid` of the observed instrument draw per individual.
    pub assigned: Vec<usize>,
    /// Mean component effects from the configuration.
    pub lambda_mean: Vec<f64>,
    /// True when every individual shares the mean effects exactly.
    pub homogeneous_effects: bool,
}

impl LatentPanel {
    pub fn n(&self) -> usize {
        self.y_untreated.len()
    }

    pub fn n_components(&self) -> usize {
        self.y_treated.cols()
    }

    /// Position of an instrument value in the support grid.
    pub fn grid_index(&self, z: f64) -> crate::error::Result<usize> {
        self.grid
            .iter()
            .position(|&g| g == z)
            .ok_or(crate::error::Error::UnknownGridPoint(z))
    }

    /// Component treatment indicator D_{iℓ}(z) for grid index g.
    #[inline]
    pub fn takes(&self, g: usize, i: usize, component: usize) -> bool {
        self.choices[g][i] as usize == component + 1
    }

    /// Composite treatment D_i(z) at grid index g.
    #[inline]
    pub fn treated(&self, g: usize, i: usize) -> bool {
        self.choices[g][i] != 0
    }

    /// Treatment effect of component ℓ for individual i.
    #[inline]
    pub fn effect(&self, i: usize, component: usize) -> f64 {
        self.y_treated.get(i, component) - self.y_untreated[i]
    }

    /// Outcome individual i would record at grid index g.
    pub fn outcome_at(&self, g: usize, i: usize) -> f64 {
        match self.choices[g][i] {
            0 => self.y_untreated[i],
            c => self.y_treated.get(i, c as usize - 1),
        }
    }

    /// Share choosing the composite treatment at grid index g.
    pub fn composite_share(&self, g: usize) -> f64 {
        let t = self.choices[g].iter().filter(|&&c| c != 0).count();
        t as f64 / self.n() as f64
    }

    /// Share choosing component ℓ at grid index g.
    pub fn component_share(&self, g: usize, component: usize) -> f64 {
        let t = self.choices[g]
            .iter()
            .filter(|&&c| c as usize == component + 1)
            .count();
        t as f64 / self.n() as f64
    }
}

/// A simulated dataset together with everything an oracle needs.
#[derive(Clone, Debug, Serialize)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub truth: DgpTruth,
    /// Counterfactual panel (discrete generator only).
    pub latent: Option<LatentPanel>,
    /// Latent component intensity levels f_{iℓ} (continuous generator only).
    #[serde(skip)]
    pub factors: Option<Matrix>,
}
