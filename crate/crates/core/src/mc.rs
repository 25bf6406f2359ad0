//! Monte Carlo harness: replicated simulate-estimate-score pipelines
//! with deterministic, parallelism-independent aggregation.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{simulate_continuous, simulate_discrete, ContinuousDgpConfig, DgpTruth,
    DiscreteDgpConfig, InstrumentDist, SyntheticData};
use crate::error::{Error, Result};
use crate::fate::{fate_fit, three_step_fit, FateSpec};
use crate::iv::{iv_gmm_fit, pi_matrix};
use crate::numerics::{normal_quantile, solve_least_squares, RealMatrix, RngSeed};

type Matrix = RealMatrix<f64>;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum GeneratorConfig {
    Continuous(ContinuousDgpConfig),
    Discrete(DiscreteDgpConfig),
}

impl GeneratorConfig {
    fn simulate(&self, n: usize, seed: RngSeed) -> Result<SyntheticData> {
        match self {
            GeneratorConfig::Continuous(cfg) => {
                let mut cfg = cfg.clone();
                cfg.n = n;
                simulate_continuous(&cfg, seed)
            }
            GeneratorConfig::Discrete(cfg) => {
                let mut cfg = cfg.clone();
                cfg.n = n;
                simulate_discrete(&cfg, seed)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorKind {
    /// Leave-one-instrument-out IV, one estimate per instrument/outcome.
    JustIdentified,
    /// Pooled IV-GMM with a single effect per outcome.
    IvGmm,
    /// Factor-augmented model with the given component count.
    Fate { l: usize },
    /// The K=3, L=2 stepwise estimator, anchored at the first outcome.
    ThreeStep,
    /// Reduced-form instrument coefficients from OLS of Y on [Z X].
    ReducedForm,
}

impl EstimatorKind {
    fn label(&self) -> String {
        match self {
            EstimatorKind::JustIdentified => "just_identified".into(),
            EstimatorKind::IvGmm => "iv_gmm".into(),
            EstimatorKind::Fate { l } => format!("fate_l{l}"),
            EstimatorKind::ThreeStep => "three_step".into(),
            EstimatorKind::ReducedForm => "reduced_form".into(),
        }
    }
}

/// One simulate-estimate-score experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub generator: GeneratorConfig,
    pub estimators: Vec<EstimatorKind>,
    pub n: usize,
    pub reps: usize,
    pub nominal_level: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        if self.n < 100 {
            return Err(Error::InvalidConfig("n must be at least 100".into()));
        }
        if !(0.0 < self.nominal_level && self.nominal_level < 1.0) {
            return Err(Error::InvalidConfig("nominal_level must be in (0, 1)".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("no estimators requested".into()));
        }
        Ok(())
    }
}

/// One tracked parameter in one replication.
#[derive(Clone, Debug, Serialize)]
pub struct ParamDraw {
    pub estimate: f64,
    pub se: Option<f64>,
}

/// One estimator's output in one replication.
#[derive(Clone, Debug, Serialize)]
pub struct EstimatorRep {
    pub error: Option<String>,
    pub converged: bool,
    pub params: Vec<ParamDraw>,
    pub j_pvalue: Option<f64>,
    #[serde(skip)]
    pub elapsed: Duration,
}

/// Full record of one replication, aligned with the scenario estimators.
#[derive(Clone, Debug, Serialize)]
pub struct RepResult {
    pub rep: u64,
    pub estimators: Vec<EstimatorRep>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamReport {
    pub name: String,
    pub truth: Option<f64>,
    pub mean_estimate: f64,
    pub bias: Option<f64>,
    pub rmse: Option<f64>,
    /// Mean of the reported standard errors.
    pub se_mean: Option<f64>,
    pub empirical_sd: f64,
    /// Share of replications whose CI covered the truth.
    pub coverage: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimatorReport {
    pub estimator: String,
    pub reps_used: usize,
    pub error_count: usize,
    pub convergence_failures: usize,
    pub j_rejection_rate: Option<f64>,
    pub parameters: Vec<ParamReport>,
}

/// Gap statistics between two estimators' tracked parameters, for
/// nesting identities.
#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    pub a: String,
    pub b: String,
    pub max_relative_gap: f64,
    pub mean_relative_gap: f64,
}

/// Wall-clock stats; excluded from the JSON report so output is
/// byte-identical across parallelism levels.
#[derive(Clone, Debug, Default)]
pub struct Timings {
    pub total: Duration,
    pub mean_rep: Duration,
    pub max_rep: Duration,
}

#[derive(Clone, Debug, Serialize)]
pub struct McReport {
    pub scenario: String,
    pub n: usize,
    pub reps: usize,
    pub nominal_level: f64,
    pub seed: RngSeed,
    pub estimators: Vec<EstimatorReport>,
    pub comparisons: Vec<ComparisonReport>,
    #[serde(skip)]
    pub timings: Timings,
}

/// Tracked-parameter layout per estimator: names and truth targets,
/// fixed by the scenario so every replication aligns.
struct ParamLayout {
    names: Vec<String>,
    truths: Vec<Option<f64>>,
}

fn param_layout(kind: EstimatorKind, truth: &DgpTruth, dims: (usize, usize)) -> ParamLayout {
    let (k, j) = dims;
    let mut names = Vec::new();
    let mut truths = Vec::new();
    match kind {
        EstimatorKind::JustIdentified => {
            let pi = truth.pi();
            for ki in 0..k {
                for jj in 0..j {
                    names.push(format!("pi_z{}_y{}", ki + 1, jj + 1));
                    truths.push(pi.as_ref().map(|m| m.get(ki, jj)));
                }
            }
        }
        EstimatorKind::IvGmm => {
            let lam = truth.normalized(1).map(|(_, l)| l);
            for jj in 0..j {
                names.push(format!("effect_y{}", jj + 1));
                truths.push(lam.as_ref().map(|m| m.get(0, jj)));
            }
        }
        EstimatorKind::Fate { l } => {
            let norm = truth.normalized(l);
            for m in 0..l {
                for jj in 0..j {
                    names.push(format!("lambda_{}_y{}", m + 1, jj + 1));
                    truths.push(norm.as_ref().map(|(_, lam)| lam.get(m, jj)));
                }
            }
            for ki in l..k {
                for m in 0..l {
                    names.push(format!("theta_z{}_{}", ki + 1, m + 1));
                    truths.push(norm.as_ref().map(|(th, _)| th.get(ki, m)));
                }
            }
        }
        EstimatorKind::ThreeStep => {
            let norm = truth.normalized(2);
            names.push("theta_z3_1".into());
            truths.push(norm.as_ref().map(|(th, _)| th.get(2, 0)));
            for m in 0..2 {
                for jj in 0..j {
                    names.push(format!("lambda_{}_y{}", m + 1, jj + 1));
                    truths.push(norm.as_ref().map(|(_, lam)| lam.get(m, jj)));
                }
            }
        }
        EstimatorKind::ReducedForm => {
            // True reduced-form instrument coefficients are the raw
            // loadings times the effects.
            let rf = match truth {
                DgpTruth::Continuous { theta, lambda, gamma, .. } => {
                    let pi = theta.dot(lambda);
                    Some(Matrix::from_fn(pi.rows(), pi.cols(), |ki, jj| {
                        gamma[ki] * pi.get(ki, jj)
                    }))
                }
                DgpTruth::Discrete { .. } => None,
            };
            for ki in 0..k {
                for jj in 0..j {
                    names.push(format!("rf_z{}_y{}", ki + 1, jj + 1));
                    truths.push(rf.as_ref().map(|m| m.get(ki, jj)));
                }
            }
        }
    }
    ParamLayout { names, truths }
}

fn run_estimator(kind: EstimatorKind, data: &SyntheticData) -> Result<EstimatorRep> {
    let start = Instant::now();
    let ds = &data.dataset;
    let (params, converged, j_pvalue) = match kind {
        EstimatorKind::JustIdentified => {
            let pm = pi_matrix(ds)?;
            let mut params = Vec::new();
            for ki in 0..pm.estimates.rows() {
                for jj in 0..pm.estimates.cols() {
                    params.push(ParamDraw {
                        estimate: pm.estimates.get(ki, jj),
                        se: Some(pm.std_errors.get(ki, jj)),
                    });
                }
            }
            (params, true, None)
        }
        EstimatorKind::IvGmm => {
            let fit = iv_gmm_fit(ds)?;
            let params = fit
                .effects
                .iter()
                .zip(&fit.se_effects)
                .map(|(&e, &s)| ParamDraw {
                    estimate: e,
                    se: Some(s),
                })
                .collect();
            let p = (fit.j_df >= 1).then_some(fit.j_pvalue);
            (params, fit.converged, p)
        }
        EstimatorKind::Fate { l } => {
            let fit = fate_fit(ds, &FateSpec::new(l))?;
            let mut params = Vec::new();
            for m in 0..l {
                for jj in 0..fit.lambda.cols() {
                    params.push(ParamDraw {
                        estimate: fit.lambda.get(m, jj),
                        se: Some(fit.lambda_se.get(m, jj)),
                    });
                }
            }
            for ki in l..fit.theta.rows() {
                for m in 0..l {
                    params.push(ParamDraw {
                        estimate: fit.theta.get(ki, m),
                        se: Some(fit.theta_se.get(ki, m)),
                    });
                }
            }
            let p = (fit.j_df >= 1).then_some(fit.j_pvalue);
            (params, fit.converged, p)
        }
        EstimatorKind::ThreeStep => {
            let pm = pi_matrix(ds)?;
            let fit = three_step_fit(&pm, 0)?;
            let mut params = vec![ParamDraw {
                estimate: fit.theta_31,
                se: None,
            }];
            for m in 0..2 {
                for jj in 0..fit.lambda.cols() {
                    params.push(ParamDraw {
                        estimate: fit.lambda.get(m, jj),
                        se: None,
                    });
                }
            }
            (params, true, None)
        }
        EstimatorKind::ReducedForm => {
            let s = ds.instrument_block();
            let coef = solve_least_squares(&s, ds.y())?;
            // Robust standard errors for the instrument coefficients.
            let fitted = s.dot(&coef);
            let resid = ds.y().sub(&fitted);
            let bread = crate::numerics::inverse_spd(&s.t_dot(&s))?;
            let mut params = Vec::new();
            for ki in 0..ds.n_instruments() {
                for jj in 0..ds.n_outcomes() {
                    let mut meat = 0.0;
                    for i in 0..ds.n() {
                        let mut h = 0.0;
                        for c in 0..s.cols() {
                            h += bread[(ki, c)] * s.get(i, c);
                        }
                        meat += h * h * resid.get(i, jj).powi(2);
                    }
                    params.push(ParamDraw {
                        estimate: coef.get(ki, jj),
                        se: Some(meat.sqrt()),
                    });
                }
            }
            (params, true, None)
        }
    };
    Ok(EstimatorRep {
        error: None,
        converged,
        params,
        j_pvalue,
        elapsed: start.elapsed(),
    })
}

/// Runs a scenario: replication r draws from substream (seed, r), and
/// aggregation folds the ordered replication results, so the report is a
/// pure function of (scenario, seed) at any parallelism level.
pub fn run_scenario(scenario: &Scenario, seed: RngSeed, parallelism: usize) -> Result<McReport> {
    let (report, _) = run_scenario_with_records(scenario, seed, parallelism)?;
    Ok(report)
}

/// As `run_scenario`, also returning the per-replication records for
/// external dumps.
pub fn run_scenario_with_records(
    scenario: &Scenario,
    seed: RngSeed,
    parallelism: usize,
) -> Result<(McReport, Vec<RepResult>)> {
    scenario.validate()?;
    let started = Instant::now();

    let run_rep = |r: usize| -> RepResult {
        let rep_seed = seed.with_stream(r as u64);
        let data = match scenario.generator.simulate(scenario.n, rep_seed) {
            Ok(d) => d,
            Err(e) => {
                let failed = EstimatorRep {
                    error: Some(format!("simulation: {e}")),
                    converged: false,
                    params: Vec::new(),
                    j_pvalue: None,
                    elapsed: Duration::ZERO,
                };
                return RepResult {
                    rep: r as u64,
                    estimators: vec![failed; scenario.estimators.len()],
                };
            }
        };
        let estimators = scenario
            .estimators
            .iter()
            .map(|&kind| {
                run_estimator(kind, &data).unwrap_or_else(|e| EstimatorRep {
                    error: Some(e.to_string()),
                    converged: false,
                    params: Vec::new(),
                    j_pvalue: None,
                    elapsed: Duration::ZERO,
                })
            })
            .collect();
        RepResult {
            rep: r as u64,
            estimators,
        }
    };

    let records: Vec<RepResult> = if parallelism <= 1 {
        (0..scenario.reps).map(run_rep).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| (0..scenario.reps).into_par_iter().map(run_rep).collect())
    };

    let errored_reps = records
        .iter()
        .filter(|r| r.estimators.iter().any(|e| e.error.is_some()))
        .count();
    if errored_reps * 2 > scenario.reps {
        return Err(Error::InvalidConfig(format!(
            "scenario {}: {errored_reps} of {} replications failed",
            scenario.name, scenario.reps
        )));
    }

    let report = aggregate(scenario, seed, &records, started.elapsed())?;
    Ok((report, records))
}

fn aggregate(
    scenario: &Scenario,
    seed: RngSeed,
    records: &[RepResult],
    total: Duration,
) -> Result<McReport> {
    // Truth layout comes from a probe config, not from any replication.
    let truth = match &scenario.generator {
        GeneratorConfig::Continuous(cfg) => cfg.truth(),
        GeneratorConfig::Discrete(cfg) => DgpTruth::Discrete {
            lambda: cfg.lambda.clone(),
            effect_sd: cfg.effect_sd.clone(),
        },
    };
    let dims = match &scenario.generator {
        GeneratorConfig::Continuous(cfg) => (cfg.k(), cfg.j()),
        GeneratorConfig::Discrete(_) => (1, 1),
    };
    let z_crit = normal_quantile(1.0 - scenario.nominal_level / 2.0);

    let mut reports = Vec::new();
    for (e_idx, &kind) in scenario.estimators.iter().enumerate() {
        let layout = param_layout(kind, &truth, dims);
        let reps: Vec<&EstimatorRep> = records
            .iter()
            .map(|r| &r.estimators[e_idx])
            .collect();
        let error_count = reps.iter().filter(|e| e.error.is_some()).count();
        // Non-converged fits are excluded from bias/RMSE but counted.
        let usable: Vec<&&EstimatorRep> = reps
            .iter()
            .filter(|e| e.error.is_none() && e.converged)
            .collect();
        let convergence_failures = reps
            .iter()
            .filter(|e| e.error.is_none() && !e.converged)
            .count();

        let mut parameters = Vec::new();
        for (p_idx, name) in layout.names.iter().enumerate() {
            let values: Vec<f64> = usable
                .iter()
                .filter_map(|e| e.params.get(p_idx).map(|p| p.estimate))
                .collect();
            if values.is_empty() {
                continue;
            }
            let m = values.len() as f64;
            let mean = values.iter().sum::<f64>() / m;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
            let truth_v = layout.truths[p_idx];
            let ses: Vec<f64> = usable
                .iter()
                .filter_map(|e| e.params.get(p_idx).and_then(|p| p.se))
                .collect();
            let se_mean = (!ses.is_empty()).then(|| ses.iter().sum::<f64>() / ses.len() as f64);
            let (bias, rmse, coverage) = match truth_v {
                Some(t) => {
                    let bias = mean - t;
                    let rmse = (values.iter().map(|v| (v - t).powi(2)).sum::<f64>() / m).sqrt();
                    let coverage = (!ses.is_empty()).then(|| {
                        let covered = usable
                            .iter()
                            .filter_map(|e| e.params.get(p_idx))
                            .filter(|p| {
                                p.se.map(|s| (p.estimate - t).abs() <= z_crit * s)
                                    .unwrap_or(false)
                            })
                            .count();
                        covered as f64 / m
                    });
                    (Some(bias), Some(rmse), coverage)
                }
                None => (None, None, None),
            };
            parameters.push(ParamReport {
                name: name.clone(),
                truth: truth_v,
                mean_estimate: mean,
                bias,
                rmse,
                se_mean,
                empirical_sd: var.sqrt(),
                coverage,
            });
        }

        let pvals: Vec<f64> = usable.iter().filter_map(|e| e.j_pvalue).collect();
        let j_rejection_rate = (!pvals.is_empty()).then(|| {
            pvals.iter().filter(|&&p| p < scenario.nominal_level).count() as f64
                / pvals.len() as f64
        });

        reports.push(EstimatorReport {
            estimator: kind.label(),
            reps_used: usable.len(),
            error_count,
            convergence_failures,
            j_rejection_rate,
            parameters,
        });
    }

    let comparisons = nesting_comparisons(scenario, records);

    let per_rep: Vec<Duration> = records
        .iter()
        .map(|r| r.estimators.iter().map(|e| e.elapsed).sum())
        .collect();
    let timings = Timings {
        total,
        mean_rep: per_rep
            .iter()
            .sum::<Duration>()
            .checked_div(per_rep.len() as u32)
            .unwrap_or_default(),
        max_rep: per_rep.iter().max().copied().unwrap_or_default(),
    };

    Ok(McReport {
        scenario: scenario.name.clone(),
        n: scenario.n,
        reps: scenario.reps,
        nominal_level: scenario.nominal_level,
        seed,
        estimators: reports,
        comparisons,
        timings,
    })
}

/// Relative gap between two estimates, floored to avoid 0/0.
fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Per-replication agreement between nested estimator pairs: the factor
/// model at L=1 against pooled IV-GMM (effect vectors), and at L=K
/// against the just-identified matrix.
fn nesting_comparisons(scenario: &Scenario, records: &[RepResult]) -> Vec<ComparisonReport> {
    let mut out = Vec::new();
    let find = |k: EstimatorKind| scenario.estimators.iter().position(|&e| e == k);
    let k_total = match &scenario.generator {
        GeneratorConfig::Continuous(cfg) => cfg.k(),
        GeneratorConfig::Discrete(_) => 1,
    };

    let mut pairs: Vec<(usize, usize, usize, String, String)> = Vec::new();
    if let (Some(a), Some(b)) = (find(EstimatorKind::Fate { l: 1 }), find(EstimatorKind::IvGmm)) {
        // Compare the per-outcome effect block only.
        let j = match &scenario.generator {
            GeneratorConfig::Continuous(cfg) => cfg.j(),
            GeneratorConfig::Discrete(_) => 1,
        };
        pairs.push((a, b, j, "fate_l1".into(), "iv_gmm".into()));
    }
    if let (Some(a), Some(b)) = (
        find(EstimatorKind::Fate { l: k_total }),
        find(EstimatorKind::JustIdentified),
    ) {
        let j = match &scenario.generator {
            GeneratorConfig::Continuous(cfg) => cfg.j(),
            GeneratorConfig::Discrete(_) => 1,
        };
        pairs.push((a, b, k_total * j, format!("fate_l{k_total}"), "just_identified".into()));
    }

    for (a_idx, b_idx, count, a_name, b_name) in pairs {
        let mut max_gap: f64 = 0.0;
        let mut sum_gap = 0.0;
        let mut n_gap = 0usize;
        for rec in records {
            let (ea, eb) = (&rec.estimators[a_idx], &rec.estimators[b_idx]);
            if ea.error.is_some() || eb.error.is_some() || !ea.converged || !eb.converged {
                continue;
            }
            for p in 0..count.min(ea.params.len()).min(eb.params.len()) {
                let g = relative_gap(ea.params[p].estimate, eb.params[p].estimate);
                max_gap = max_gap.max(g);
                sum_gap += g;
                n_gap += 1;
            }
        }
        if n_gap > 0 {
            out.push(ComparisonReport {
                a: a_name,
                b: b_name,
                max_relative_gap: max_gap,
                mean_relative_gap: sum_gap / n_gap as f64,
            });
        }
    }
    out
}

impl McReport {
    /// Text summary: one block per estimator with a parameter table,
    /// then timings (text only; the JSON omits wall-clock fields).
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "scenario {} (n = {}, reps = {}, nominal level {})\n",
            self.scenario, self.n, self.reps, self.nominal_level
        ));
        for est in &self.estimators {
            out.push_str(&format!(
                "\n[{}] used {}/{} reps, {} errors, {} convergence failures",
                est.estimator, est.reps_used, self.reps, est.error_count, est.convergence_failures
            ));
            if let Some(rate) = est.j_rejection_rate {
                out.push_str(&format!(", J rejection {rate:.3}"));
            }
            out.push('\n');
            out.push_str(&format!(
                "{:<16}{:>10}{:>10}{:>10}{:>10}{:>10}{:>10}\n",
                "parameter", "truth", "mean", "bias", "rmse", "se_mean", "coverage"
            ));
            for p in &est.parameters {
                let fmt = |v: Option<f64>| match v {
                    Some(x) => format!("{x:.3}"),
                    None => "-".into(),
                };
                out.push_str(&format!(
                    "{:<16}{:>10}{:>10.3}{:>10}{:>10}{:>10}{:>10}\n",
                    p.name,
                    fmt(p.truth),
                    p.mean_estimate,
                    fmt(p.bias),
                    fmt(p.rmse),
                    fmt(p.se_mean),
                    fmt(p.coverage),
                ));
            }
        }
        for c in &self.comparisons {
            out.push_str(&format!(
                "\nnesting gap {} vs {}: max {:.3e}, mean {:.3e}\n",
                c.a, c.b, c.max_relative_gap, c.mean_relative_gap
            ));
        }
        out.push_str(&format!(
            "\nwall clock: total {:.2?}, mean/rep {:.2?}, max/rep {:.2?}\n",
            self.timings.total, self.timings.mean_rep, self.timings.max_rep
        ));
        out
    }
}

/// The well-behaved estimation benchmark: three instruments, two
/// components defined by the first two, five outcomes, three controls.
pub fn textbook_generator() -> ContinuousDgpConfig {
    ContinuousDgpConfig {
        n: 20_000,
        gamma: Matrix::from_vec(3, 2, vec![0.6, 0.0, 0.0, 0.6, 0.25, 0.35]).unwrap(),
        gamma_x: Matrix::from_vec(3, 2, vec![0.2, 0.3, 0.1, -0.1, 0.0, 0.15]).unwrap(),
        alpha: Matrix::from_vec(
            3,
            5,
            vec![
                0.5, 0.6, 0.7, 0.8, 0.9, //
                0.3, -0.2, 0.1, 0.0, 0.2, //
                -0.1, 0.2, 0.3, -0.3, 0.1,
            ],
        )
        .unwrap(),
        lambda: Matrix::from_vec(
            2,
            5,
            vec![
                1.0, 1.1, 1.2, 1.3, 1.4, //
                -0.3, -0.1, 0.1, 0.3, 0.5,
            ],
        )
        .unwrap(),
        sigma_xi: 1.0,
        sigma_u: vec![0.5, 0.5],
        component_error_corr: Matrix::from_vec(2, 2, vec![1.0, 0.3, 0.3, 1.0]).unwrap(),
        instrument_dists: vec![InstrumentDist::StandardNormal; 3],
    }
}

/// Textbook scenario at the given size.
pub fn textbook_scenario(n: usize, reps: usize) -> Scenario {
    Scenario {
        name: "textbook".into(),
        generator: GeneratorConfig::Continuous(textbook_generator()),
        estimators: vec![EstimatorKind::Fate { l: 2 }, EstimatorKind::JustIdentified],
        n,
        reps,
        nominal_level: 0.05,
    }
}

/// The four built-in scenarios.
///
/// - `zero_estimand`: offsetting component shifts with λ2 = 2λ1 drive
///   the reduced form to zero while both effects are positive.
/// - `nesting_check`: the factor model at L=1 must coincide with pooled
///   IV-GMM and at L=K with the just-identified matrix.
/// - `misspecified_L`: three true components fitted with two; the
///   overidentification test carries the detection burden.
/// - `utr_violation`: a third instrument that moves component shares in
///   opposite directions; its just-identified estimate leaves the convex
///   hull of the component effects while the factor model stays unbiased.
pub fn builtin_scenarios() -> Vec<Scenario> {
    let zero_estimand = Scenario {
        name: "zero_estimand".into(),
        generator: GeneratorConfig::Continuous(ContinuousDgpConfig {
            n: 4_000,
            gamma: Matrix::from_vec(1, 2, vec![0.5, -0.25]).unwrap(),
            gamma_x: Matrix::from_vec(1, 2, vec![0.3, 0.4]).unwrap(),
            alpha: Matrix::from_vec(1, 1, vec![0.1]).unwrap(),
            lambda: Matrix::from_vec(2, 1, vec![0.5, 1.0]).unwrap(),
            sigma_xi: 0.5,
            sigma_u: vec![0.3, 0.3],
            component_error_corr: Matrix::identity(2),
            instrument_dists: vec![InstrumentDist::StandardNormal],
        }),
        estimators: vec![EstimatorKind::ReducedForm],
        n: 4_000,
        reps: 200,
        nominal_level: 0.05,
    };

    let nesting_check = Scenario {
        name: "nesting_check".into(),
        generator: GeneratorConfig::Continuous(textbook_generator()),
        estimators: vec![
            EstimatorKind::Fate { l: 1 },
            EstimatorKind::IvGmm,
            EstimatorKind::Fate { l: 3 },
            EstimatorKind::JustIdentified,
        ],
        n: 2_000,
        reps: 50,
        nominal_level: 0.05,
    };

    let misspecified = Scenario {
        name: "misspecified_L".into(),
        generator: GeneratorConfig::Continuous(ContinuousDgpConfig {
            n: 20_000,
            gamma: Matrix::from_vec(
                3,
                3,
                vec![0.6, 0.0, 0.0, 0.0, 0.6, 0.0, 0.0, 0.0, 0.6],
            )
            .unwrap(),
            gamma_x: Matrix::from_vec(2, 3, vec![0.2, 0.1, 0.15, 0.05, -0.1, 0.1]).unwrap(),
            alpha: Matrix::from_vec(
                2,
                5,
                vec![0.5, 0.6, 0.7, 0.8, 0.9, 0.2, -0.1, 0.3, 0.0, 0.1],
            )
            .unwrap(),
            lambda: Matrix::from_vec(
                3,
                5,
                vec![
                    1.0, 1.0, 1.0, 1.0, 1.0, //
                    -0.5, 0.0, 0.5, 1.0, 1.5, //
                    1.5, -0.8, 1.2, -0.5, 0.9,
                ],
            )
            .unwrap(),
            sigma_xi: 1.0,
            sigma_u: vec![0.4, 0.4, 0.4],
            component_error_corr: Matrix::identity(3),
            instrument_dists: vec![InstrumentDist::StandardNormal; 3],
        }),
        estimators: vec![EstimatorKind::Fate { l: 2 }],
        n: 20_000,
        reps: 500,
        nominal_level: 0.05,
    };

    let utr_violation = Scenario {
        name: "utr_violation".into(),
        generator: GeneratorConfig::Continuous(ContinuousDgpConfig {
            n: 5_000,
            gamma: Matrix::from_vec(3, 2, vec![0.6, 0.0, 0.0, 0.6, -0.3, 0.55]).unwrap(),
            gamma_x: Matrix::from_vec(2, 2, vec![0.2, 0.3, 0.1, -0.1]).unwrap(),
            alpha: Matrix::from_vec(2, 3, vec![0.5, 0.6, 0.7, 0.3, -0.2, 0.1]).unwrap(),
            lambda: Matrix::from_vec(2, 3, vec![1.0, 1.2, 1.4, 0.2, 0.1, 0.0]).unwrap(),
            sigma_xi: 0.8,
            sigma_u: vec![0.4, 0.4],
            component_error_corr: Matrix::from_vec(2, 2, vec![1.0, 0.2, 0.2, 1.0]).unwrap(),
            instrument_dists: vec![InstrumentDist::StandardNormal; 3],
        }),
        estimators: vec![EstimatorKind::JustIdentified, EstimatorKind::Fate { l: 2 }],
        n: 5_000,
        reps: 100,
        nominal_level: 0.05,
    };

    vec![zero_estimand, nesting_check, misspecified, utr_violation]
}
