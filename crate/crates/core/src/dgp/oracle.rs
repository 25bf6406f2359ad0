//! Latent-data oracles: exact complier/defier accounting, estimand
//! decompositions, and monotonicity condition checks computed from the
//! counterfactual panel.

use serde::Serialize;

use crate::dgp::LatentPanel;
use crate::error::Result;
use crate::iv::Dataset;

/// Per-component counts of the four response groups at a comparison
/// (z, z'). A complier for component ℓ has D_{iℓ}(z) = 1, D_{iℓ}(z') = 0;
/// a defier the reverse.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct ComponentGroups {
    pub compliers: usize,
    pub defiers: usize,
    pub always_takers: usize,
    pub never_takers: usize,
}

/// Exact group shares for every component at one instrument comparison.
#[derive(Clone, Debug, Serialize)]
pub struct ComplierDefierProfile {
    pub groups: Vec<ComponentGroups>,
    pub n: usize,
    /// Composite treatment shares at z and z'.
    pub p_z: f64,
    pub p_zp: f64,
}

impl ComplierDefierProfile {
    pub fn complier_share(&self, l: usize) -> f64 {
        self.groups[l].compliers as f64 / self.n as f64
    }

    pub fn defier_share(&self, l: usize) -> f64 {
        self.groups[l].defiers as f64 / self.n as f64
    }
}

/// Counts ℓ-compliers, ℓ-defiers, ℓ-always-takers, and ℓ-never-takers at
/// the comparison (z, z') from the counterfactual panel.
pub fn complier_defier_profile(
    panel: &LatentPanel,
    z: f64,
    z_prime: f64,
) -> Result<ComplierDefierProfile> {
    let g = panel.grid_index(z)?;
    let gp = panel.grid_index(z_prime)?;
    let l = panel.n_components();
    let mut groups = vec![ComponentGroups::default(); l];
    for i in 0..panel.n() {
        for (li, counts) in groups.iter_mut().enumerate() {
            match (panel.takes(g, i, li), panel.takes(gp, i, li)) {
                (true, false) => counts.compliers += 1,
                (false, true) => counts.defiers += 1,
                (true, true) => counts.always_takers += 1,
                (false, false) => counts.never_takers += 1,
            }
        }
    }
    Ok(ComplierDefierProfile {
        groups,
        n: panel.n(),
        p_z: panel.composite_share(g),
        p_zp: panel.composite_share(gp),
    })
}

/// One component's contribution to the reduced-form decomposition.
#[derive(Clone, Debug, Serialize)]
pub struct ComponentTerm {
    pub complier_share: f64,
    pub complier_mean_effect: Option<f64>,
    pub defier_share: f64,
    pub defier_mean_effect: Option<f64>,
}

/// Theorem-3 quantities: survivor compliers are the compliers left after
/// pairing off, within each component, every defier with a complier of
/// matching treatment effect.
#[derive(Clone, Debug, Serialize)]
pub struct SurvivorDecomposition {
    /// Survivor weight per component: P^s_{cℓ} / P^s_c.
    pub weights: Vec<f64>,
    /// Mean treatment effect among survivor compliers per component.
    pub mean_effects: Vec<f64>,
    /// Σ_ℓ weight_ℓ · mean_effect_ℓ.
    pub estimand: f64,
    /// Minimized total |effect difference| across matched pairs; a value
    /// of zero is the exact-cancellation evidence the net-monotonicity
    /// condition requires.
    pub pairing_cost: f64,
}

/// Exact estimand decomposition at one instrument comparison.
#[derive(Clone, Debug, Serialize)]
pub struct OracleDecomposition {
    /// E[Y | z] - E[Y | z'] over the finite panel population.
    pub reduced_form: f64,
    /// P(z) - P(z').
    pub first_stage: f64,
    /// reduced_form / first_stage; undefined at degenerate comparisons.
    pub iv_estimand: Option<f64>,
    pub components: Vec<ComponentTerm>,
    /// (P_ℓ(z) - P_ℓ(z')) / (P(z) - P(z')): present when the shares move
    /// uniformly (these are then nonnegative).
    pub theorem_weights: Option<Vec<f64>>,
    /// Weighted average of switcher effects; present when the panel
    /// supports the interpretation (individual-level uniformity, or
    /// share-level uniformity with homogeneous effects).
    pub weighted_average_estimand: Option<f64>,
    pub survivor: Option<SurvivorDecomposition>,
}

/// Computes the reduced-form decomposition and IV estimand exactly from
/// counterfactuals, with the theorem-level weighted averages attached
/// when the relevant condition holds at this comparison.
pub fn oracle_iv_decomposition(
    panel: &LatentPanel,
    z: f64,
    z_prime: f64,
) -> Result<OracleDecomposition> {
    let g = panel.grid_index(z)?;
    let gp = panel.grid_index(z_prime)?;
    let n = panel.n() as f64;
    let l = panel.n_components();

    let reduced_form = (0..panel.n())
        .map(|i| panel.outcome_at(g, i) - panel.outcome_at(gp, i))
        .sum::<f64>()
        / n;
    let first_stage = panel.composite_share(g) - panel.composite_share(gp);
    let iv_estimand = (first_stage != 0.0).then(|| reduced_form / first_stage);

    let mut components = Vec::with_capacity(l);
    let mut complier_effects: Vec<Vec<f64>> = vec![Vec::new(); l];
    let mut defier_effects: Vec<Vec<f64>> = vec![Vec::new(); l];
    for i in 0..panel.n() {
        for li in 0..l {
            match (panel.takes(g, i, li), panel.takes(gp, i, li)) {
                (true, false) => complier_effects[li].push(panel.effect(i, li)),
                (false, true) => defier_effects[li].push(panel.effect(i, li)),
                _ => {}
            }
        }
    }
    for li in 0..l {
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        components.push(ComponentTerm {
            complier_share: complier_effects[li].len() as f64 / n,
            complier_mean_effect: mean(&complier_effects[li]),
            defier_share: defier_effects[li].len() as f64 / n,
            defier_mean_effect: mean(&defier_effects[li]),
        });
    }

    // Share-level and individual-level uniformity at this comparison.
    let share_diffs: Vec<f64> = (0..l)
        .map(|li| panel.component_share(g, li) - panel.component_share(gp, li))
        .collect();
    let utr_pair = share_diffs.iter().all(|&d| d >= 0.0) || share_diffs.iter().all(|&d| d <= 0.0);
    let uum_pair = (0..l).all(|li| complier_effects[li].is_empty())
        || (0..l).all(|li| defier_effects[li].is_empty());

    let theorem_weights = (utr_pair && first_stage != 0.0)
        .then(|| share_diffs.iter().map(|&d| d / first_stage).collect::<Vec<f64>>());

    let weighted_average_estimand = if (uum_pair || (utr_pair && panel.homogeneous_effects))
        && first_stage != 0.0
    {
        let mut acc = 0.0;
        for li in 0..l {
            let switchers: Vec<f64> = complier_effects[li]
                .iter()
                .chain(defier_effects[li].iter())
                .copied()
                .collect();
            if switchers.is_empty() {
                continue;
            }
            let mean = switchers.iter().sum::<f64>() / switchers.len() as f64;
            acc += share_diffs[li] / first_stage * mean;
        }
        Some(acc)
    } else {
        None
    };

    let survivor = survivor_decomposition(&complier_effects, &defier_effects, first_stage);

    Ok(OracleDecomposition {
        reduced_form,
        first_stage,
        iv_estimand,
        components,
        theorem_weights,
        weighted_average_estimand,
        survivor,
    })
}

/// Pairs every defier with a complier of the closest treatment effect
/// within each component, minimizing the total absolute effect
/// difference; the unmatched compliers are the survivors. Orientation
/// follows the sign of the first stage: when P(z) < P(z') the roles of
/// compliers and defiers swap globally. Undefined (None) when some
/// component's defiers outnumber its compliers in that orientation,
/// which is exactly when no canceling share exists.
fn survivor_decomposition(
    complier_effects: &[Vec<f64>],
    defier_effects: &[Vec<f64>],
    first_stage: f64,
) -> Option<SurvivorDecomposition> {
    let l = complier_effects.len();
    let mut survivor_effects: Vec<Vec<f64>> = Vec::with_capacity(l);
    let mut total_cost = 0.0;
    for li in 0..l {
        let (minority, majority) = if first_stage >= 0.0 {
            (&defier_effects[li], &complier_effects[li])
        } else {
            (&complier_effects[li], &defier_effects[li])
        };
        let (survivors, cost) = pair_off(minority, majority)?;
        total_cost += cost;
        survivor_effects.push(survivors);
    }
    let total: usize = survivor_effects.iter().map(Vec::len).sum();
    if total == 0 {
        return None;
    }
    let weights: Vec<f64> = survivor_effects
        .iter()
        .map(|v| v.len() as f64 / total as f64)
        .collect();
    let mean_effects: Vec<f64> = survivor_effects
        .iter()
        .map(|v| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        })
        .collect();
    let estimand = weights
        .iter()
        .zip(&mean_effects)
        .map(|(&w, &m)| w * m)
        .sum();
    Some(SurvivorDecomposition {
        weights,
        mean_effects,
        estimand,
        pairing_cost: total_cost,
    })
}

/// Optimal order-preserving matching of the sorted minority effects into
/// the sorted majority effects; returns the unmatched majority effects
/// and the minimized total absolute difference.
fn pair_off(minority: &[f64], majority: &[f64]) -> Option<(Vec<f64>, f64)> {
    let p = minority.len();
    let q = majority.len();
    if p > q {
        return None;
    }
    if p == 0 {
        return Some((majority.to_vec(), 0.0));
    }
    let mut mi: Vec<f64> = minority.to_vec();
    let mut ma: Vec<f64> = majority.to_vec();
    mi.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ma.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // cost[i][j]: first i minority members matched within first j
    // majority members. Monotone matchings contain an optimum.
    let inf = f64::INFINITY;
    let mut cost = vec![vec![inf; q + 1]; p + 1];
    let mut took = vec![vec![false; q + 1]; p + 1];
    for j in 0..=q {
        cost[0][j] = 0.0;
    }
    for i in 1..=p {
        for j in i..=q {
            let skip = cost[i][j - 1];
            let take = cost[i - 1][j - 1] + (mi[i - 1] - ma[j - 1]).abs();
            if take <= skip {
                cost[i][j] = take;
                took[i][j] = true;
            } else {
                cost[i][j] = skip;
            }
        }
    }
    let mut used = vec![false; q];
    let (mut i, mut j) = (p, q);
    while i > 0 {
        if took[i][j] {
            used[j - 1] = true;
            i -= 1;
        }
        j -= 1;
    }
    let survivors: Vec<f64> = (0..q).filter(|&jj| !used[jj]).map(|jj| ma[jj]).collect();
    Some((survivors, cost[p][q]))
}

/// Which monotonicity condition to check against the panel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ConditionKind {
    /// Uniform treatment responses: population component shares move in
    /// the same direction at every comparison.
    Utr,
    /// Uniform unordered monotonicity: every individual's component
    /// treatments move in the same direction at every comparison.
    Uum,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionWitness {
    /// Component index for UTR, individual index for UUM.
    pub index: usize,
    pub z: f64,
    pub z_prime: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub condition: ConditionKind,
    pub holds: bool,
    /// Up to ten violating tuples.
    pub witnesses: Vec<ConditionWitness>,
}

const MAX_WITNESSES: usize = 10;

/// Checks a monotonicity condition over every pair of the given grid
/// points, reporting violations with witnesses.
pub fn check_condition(
    panel: &LatentPanel,
    condition: ConditionKind,
    grid: &[f64],
) -> Result<ConditionReport> {
    let indices: Vec<usize> = grid
        .iter()
        .map(|&z| panel.grid_index(z))
        .collect::<Result<_>>()?;
    let l = panel.n_components();
    let mut witnesses = Vec::new();
    let mut holds = true;

    for (a, &g) in indices.iter().enumerate() {
        for &gp in indices.iter().skip(a + 1) {
            // Witnesses are movements against the composite direction.
            let composite = panel.choices[g].iter().filter(|&&c| c != 0).count() as i64
                - panel.choices[gp].iter().filter(|&&c| c != 0).count() as i64;
            match condition {
                ConditionKind::Utr => {
                    // Exact integer counts avoid share rounding.
                    let diffs: Vec<i64> = (0..l)
                        .map(|li| {
                            let at = panel.choices[g]
                                .iter()
                                .filter(|&&c| c as usize == li + 1)
                                .count() as i64;
                            let at_p = panel.choices[gp]
                                .iter()
                                .filter(|&&c| c as usize == li + 1)
                                .count() as i64;
                            at - at_p
                        })
                        .collect();
                    let up = diffs.iter().any(|&d| d > 0);
                    let down = diffs.iter().any(|&d| d < 0);
                    if up && down {
                        holds = false;
                        let against_up = composite >= 0;
                        for (li, &d) in diffs.iter().enumerate() {
                            let against = if against_up { d < 0 } else { d > 0 };
                            if against && witnesses.len() < MAX_WITNESSES {
                                witnesses.push(ConditionWitness {
                                    index: li,
                                    z: panel.grid[g],
                                    z_prime: panel.grid[gp],
                                });
                            }
                        }
                    }
                }
                ConditionKind::Uum => {
                    let mut up_examples = Vec::new();
                    let mut down_examples = Vec::new();
                    for i in 0..panel.n() {
                        for li in 0..l {
                            match (panel.takes(g, i, li), panel.takes(gp, i, li)) {
                                (true, false) => {
                                    if up_examples.len() < MAX_WITNESSES {
                                        up_examples.push(i);
                                    }
                                }
                                (false, true) => {
                                    if down_examples.len() < MAX_WITNESSES {
                                        down_examples.push(i);
                                    }
                                }
                                _ => {}
                            }
                        }
                    }
                    if !up_examples.is_empty() && !down_examples.is_empty() {
                        holds = false;
                        let side = if composite >= 0 {
                            &down_examples
                        } else {
                            &up_examples
                        };
                        for &i in side {
                            if witnesses.len() < MAX_WITNESSES {
                                witnesses.push(ConditionWitness {
                                    index: i,
                                    z: panel.grid[g],
                                    z_prime: panel.grid[gp],
                                });
                            }
                        }
                    }
                }
            }
        }
    }

    Ok(ConditionReport {
        condition,
        holds,
        witnesses,
    })
}

/// Grouped Wald (IV) estimate at a two-point instrument comparison from
/// observed data, with a delta-method standard error. The dataset's
/// instrument must be the single column carrying the grid values.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct WaldEstimate {
    pub estimate: f64,
    pub se: f64,
    pub n_z: usize,
    pub n_zp: usize,
}

pub fn wald_estimate(data: &Dataset, z: f64, z_prime: f64) -> Result<WaldEstimate> {
    if data.n_instruments() != 1 {
        return Err(crate::error::Error::DimensionMismatch(
            "grouped Wald estimate requires a single instrument column".into(),
        ));
    }
    let mut stats = [GroupStats::default(), GroupStats::default()];
    for i in 0..data.n() {
        let zi = data.z().get(i, 0);
        let idx = if zi == z {
            0
        } else if zi == z_prime {
            1
        } else {
            continue;
        };
        stats[idx].push(data.y().get(i, 0), data.d().get(i, 0));
    }
    if stats[0].n == 0 || stats[1].n == 0 {
        return Err(crate::error::Error::UnknownGridPoint(if stats[0].n == 0 {
            z
        } else {
            z_prime
        }));
    }
    let num = stats[0].mean_y() - stats[1].mean_y();
    let den = stats[0].mean_d() - stats[1].mean_d();
    if den == 0.0 {
        return Err(crate::error::Error::DegenerateComparison);
    }
    let estimate = num / den;
    // Delta method on the ratio of mean differences; groups independent.
    let var_num = stats[0].var_y() / stats[0].n as f64 + stats[1].var_y() / stats[1].n as f64;
    let var_den = stats[0].var_d() / stats[0].n as f64 + stats[1].var_d() / stats[1].n as f64;
    let cov_nd = stats[0].cov_yd() / stats[0].n as f64 + stats[1].cov_yd() / stats[1].n as f64;
    let var = var_num / den.powi(2) + num.powi(2) * var_den / den.powi(4)
        - 2.0 * num * cov_nd / den.powi(3);
    Ok(WaldEstimate {
        estimate,
        se: var.max(0.0).sqrt(),
        n_z: stats[0].n,
        n_zp: stats[1].n,
    })
}

#[derive(Default)]
struct GroupStats {
    n: usize,
    sum_y: f64,
    sum_d: f64,
    sum_yy: f64,
    sum_dd: f64,
    sum_yd: f64,
}

impl GroupStats {
    fn push(&mut self, y: f64, d: f64) {
        self.n += 1;
        self.sum_y += y;
        self.sum_d += d;
        self.sum_yy += y * y;
        self.sum_dd += d * d;
        self.sum_yd += y * d;
    }

    fn mean_y(&self) -> f64 {
        self.sum_y / self.n as f64
    }

    fn mean_d(&self) -> f64 {
        self.sum_d / self.n as f64
    }

    fn var_y(&self) -> f64 {
        (self.sum_yy / self.n as f64 - self.mean_y().powi(2)).max(0.0)
    }

    fn var_d(&self) -> f64 {
        (self.sum_dd / self.n as f64 - self.mean_d().powi(2)).max(0.0)
    }

    fn cov_yd(&self) -> f64 {
        self.sum_yd / self.n as f64 - self.mean_y() * self.mean_d()
    }
}
