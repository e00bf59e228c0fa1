//! Simulation study: every estimator, and every simulation-model scenario
//! for the synthesis estimators, is applied to freshly generated data in
//! each iteration and summarized by bias, confidence limit difference (CLD)
//! and interval coverage against the Monte Carlo truth.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::datagen::{
    generate_secret_trial, generate_study, true_psi, DatagenError, ScenarioConfig, SecretTrialSummary,
};
use crate::dists::SeededRng;
use crate::estimators::{
    restricted_gcomp, restricted_ipw, EffectEstimate, EstimationOptions, EstimatorError, GcompSynthesis,
    IpwSynthesis, McSettings, Method, Restriction, SimulationModel,
};
use crate::glm::{DesignSpec, FitOptions};
use crate::scalar::Scalar;

/// Specification of the simulation-model shift parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Shifts fixed at zero.
    StrictNull,
    /// `Trapezoid(-2, -1, 1, 2)` shifts.
    UncertainNull,
    /// Independent normals from the secret trial.
    Accurate,
    /// Secret-trial normals with means negated.
    Inaccurate,
    /// Bivariate normal from the secret trial, covariance included.
    AccurateWithCovariance,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::StrictNull,
        Scenario::UncertainNull,
        Scenario::Accurate,
        Scenario::Inaccurate,
        Scenario::AccurateWithCovariance,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Scenario::StrictNull => "strict_null",
            Scenario::UncertainNull => "uncertain_null",
            Scenario::Accurate => "accurate",
            Scenario::Inaccurate => "inaccurate",
            Scenario::AccurateWithCovariance => "accurate_with_covariance",
        }
    }

    pub fn needs_secret_trial(self) -> bool {
        matches!(
            self,
            Scenario::Accurate | Scenario::Inaccurate | Scenario::AccurateWithCovariance
        )
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.tag() == s)
            .ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

/// One row of the report: an estimator, plus a scenario for synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Arm {
    pub method: Method,
    pub scenario: Option<Scenario>,
}

impl Arm {
    /// The 14 report rows in publication order.
    pub fn all() -> Vec<Arm> {
        let mut arms: Vec<Arm> = [
            Method::RestrictPopulationGcomp,
            Method::RestrictPopulationIpw,
            Method::RestrictCovariatesGcomp,
            Method::RestrictCovariatesIpw,
        ]
        .into_iter()
        .map(|method| Arm { method, scenario: None })
        .collect();
        for method in [Method::SynthesisGcomp, Method::SynthesisIpw] {
            arms.extend(Scenario::ALL.into_iter().map(|s| Arm {
                method,
                scenario: Some(s),
            }));
        }
        arms
    }

    pub fn scenario_tag(&self) -> &'static str {
        self.scenario.map_or("restriction", Scenario::tag)
    }

    /// Whether this row belongs to a scenario filter: restriction rows match
    /// `restriction`, synthesis rows match their scenario tag.
    pub fn matches(&self, filter: &str) -> bool {
        self.scenario_tag() == filter
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig<T> {
    pub scenario: ScenarioConfig<T>,
    pub iterations: usize,
    pub mc_reps: usize,
    /// Size of the truth oracle sample.
    pub truth_n: usize,
    pub outcome_design: DesignSpec<T>,
    pub selection_design: DesignSpec<T>,
    pub arms: Vec<Arm>,
}

impl<T: Scalar> Default for SimulationConfig<T> {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            iterations: 2000,
            mc_reps: 5000,
            truth_n: 10_000_000,
            outcome_design: "1,A,V".parse().expect("valid design"),
            selection_design: "1,V,V:I(V>25)".parse().expect("valid design"),
            arms: Arm::all(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("iterations must be at least 1")]
    NoIterations,
    #[error("mc_reps must be at least 1")]
    NoReps,
    #[error("no report rows selected")]
    NoArms,
    #[error("no estimates to summarize")]
    NoEstimates,
    #[error(transparent)]
    Config(#[from] DatagenError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics<T> {
    pub bias: T,
    pub cld: T,
    pub coverage: T,
}

/// Mean error, mean interval width, and share of intervals containing the
/// truth.
pub fn compute_metrics<T: Scalar>(
    estimates: &[EffectEstimate<T>],
    truth: T,
) -> Result<Metrics<T>, SimulationError> {
    if estimates.is_empty() {
        return Err(SimulationError::NoEstimates);
    }
    let n = T::from_count(estimates.len());
    let bias = estimates.iter().map(|e| e.rd - truth).sum::<T>() / n;
    let cld = estimates.iter().map(|e| e.width()).sum::<T>() / n;
    let covered = estimates.iter().filter(|e| e.covers(truth)).count();
    Ok(Metrics {
        bias,
        cld,
        coverage: T::from_count(covered) / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationResultRow {
    pub method: String,
    pub scenario: String,
    pub bias: f64,
    pub cld: f64,
    pub coverage: f64,
    pub n_iterations: usize,
    pub n_failed: usize,
    /// More than 5% of iterations failed for this row.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub truth: f64,
    pub iterations: usize,
    pub mc_reps: usize,
    pub rows: Vec<SimulationResultRow>,
}

impl SimulationReport {
    pub fn row(&self, method: Method, scenario: &str) -> Option<&SimulationResultRow> {
        self.rows
            .iter()
            .find(|r| r.method == method.tag() && r.scenario == scenario)
    }

    /// Fixed-width text table in report order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "truth = {:.6}; iterations = {}; mc_reps = {}",
            self.truth, self.iterations, self.mc_reps
        );
        let _ = writeln!(
            s,
            "{:<18} {:<26} {:>8} {:>8} {:>9} {:>7}",
            "method", "scenario", "bias", "cld", "coverage", "failed"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<18} {:<26} {:>8.3} {:>8.3} {:>8.1}% {:>7}{}",
                r.method,
                r.scenario,
                r.bias,
                r.cld,
                100.0 * r.coverage,
                r.n_failed,
                if r.flagged { "  FLAGGED" } else { "" }
            );
        }
        s
    }
}

/// Failure of one arm in one iteration.
type ArmOutcome<T> = Result<EffectEstimate<T>, EstimatorError>;

fn run_iteration<T: Scalar>(
    config: &SimulationConfig<T>,
    rng: &SeededRng,
) -> Vec<Option<EffectEstimate<T>>> {
    let data = generate_study(&config.scenario, &rng.substream(0));
    let needs_secret = config
        .arms
        .iter()
        .any(|a| a.scenario.is_some_and(Scenario::needs_secret_trial));
    let secret = needs_secret
        .then(|| generate_secret_trial(&config.scenario, config.scenario.n_secret, &rng.substream(1)).ok())
        .flatten();
    let opts = EstimationOptions::default();
    let fit_opts = FitOptions::default();
    let uses = |m: Method| config.arms.iter().any(|a| a.method == m);
    let gcomp = uses(Method::SynthesisGcomp)
        .then(|| GcompSynthesis::fit(&data, &config.outcome_design, &fit_opts));
    let ipw = uses(Method::SynthesisIpw)
        .then(|| IpwSynthesis::fit(&data, &config.selection_design, &fit_opts));

    config
        .arms
        .iter()
        .enumerate()
        .map(|(k, arm)| {
            let mc = McSettings::new(config.mc_reps, rng.substream(100 + k as u64).next_u64());
            let model = |gcomp_shift: bool| -> Option<SimulationModel<T>> {
                let pick = |s: &'_ SecretTrialSummary<T>| if gcomp_shift { s.gcomp.clone() } else { s.ipw.clone() };
                match arm.scenario? {
                    Scenario::StrictNull => Some(SimulationModel::strict_null()),
                    Scenario::UncertainNull => Some(SimulationModel::uncertain_null()),
                    Scenario::Accurate => secret.as_ref().map(|s| pick(s).accurate()),
                    Scenario::Inaccurate => secret.as_ref().map(|s| pick(s).inaccurate()),
                    Scenario::AccurateWithCovariance => {
                        secret.as_ref().map(|s| pick(s).accurate_with_covariance())
                    }
                }
            };
            let out: Option<ArmOutcome<T>> = match arm.method {
                Method::RestrictPopulationGcomp => Some(restricted_gcomp(
                    &data,
                    &config.outcome_design,
                    Restriction::TargetPopulation,
                    &opts,
                )),
                Method::RestrictCovariatesGcomp => Some(restricted_gcomp(
                    &data,
                    &config.outcome_design,
                    Restriction::CovariateSet,
                    &opts,
                )),
                Method::RestrictPopulationIpw => Some(restricted_ipw(
                    &data,
                    &config.selection_design,
                    Restriction::TargetPopulation,
                    &opts,
                )),
                Method::RestrictCovariatesIpw => Some(restricted_ipw(
                    &data,
                    &config.selection_design,
                    Restriction::CovariateSet,
                    &opts,
                )),
                Method::SynthesisGcomp => match (gcomp.as_ref(), model(true)) {
                    (Some(Ok(fit)), Some(m)) => Some(fit.estimate(&m, &mc)),
                    _ => None,
                },
                Method::SynthesisIpw => match (ipw.as_ref(), model(false)) {
                    (Some(Ok(fit)), Some(m)) => Some(fit.estimate(&m, &mc)),
                    _ => None,
                },
            };
            out.and_then(Result::ok).map(|mut e| {
                e.draws = None;
                e
            })
        })
        .collect()
}

/// Runs the study; results depend only on `(config, master_seed)`, not on
/// the number of worker threads.
pub fn run_simulation<T: Scalar>(config: &SimulationConfig<T>) -> Result<SimulationReport, SimulationError> {
    if config.iterations == 0 {
        return Err(SimulationError::NoIterations);
    }
    if config.mc_reps == 0 {
        return Err(SimulationError::NoReps);
    }
    if config.arms.is_empty() {
        return Err(SimulationError::NoArms);
    }
    config.scenario.validate()?;
    let seed = config.scenario.master_seed;
    let truth = true_psi(&config.scenario, config.truth_n, &SeededRng::new(seed, 0));
    let root = SeededRng::new(seed, 1);

    let per_iteration: Vec<Vec<Option<EffectEstimate<T>>>> = (0..config.iterations)
        .into_par_iter()
        .map(|i| run_iteration(config, &root.substream(i as u64)))
        .collect();

    let rows = config
        .arms
        .iter()
        .enumerate()
        .map(|(k, arm)| {
            let ok: Vec<EffectEstimate<T>> = per_iteration.iter().filter_map(|it| it[k].clone()).collect();
            let n_failed = config.iterations - ok.len();
            let metrics = compute_metrics(&ok, truth).map_or(
                Metrics {
                    bias: f64::NAN,
                    cld: f64::NAN,
                    coverage: f64::NAN,
                },
                |m| Metrics {
                    bias: m.bias.as_f64(),
                    cld: m.cld.as_f64(),
                    coverage: m.coverage.as_f64(),
                },
            );
            SimulationResultRow {
                method: arm.method.tag().to_string(),
                scenario: arm.scenario_tag().to_string(),
                bias: metrics.bias,
                cld: metrics.cld,
                coverage: metrics.coverage,
                n_iterations: config.iterations,
                n_failed,
                flagged: n_failed * 20 > config.iterations,
            }
        })
        .collect();

    Ok(SimulationReport {
        truth: truth.as_f64(),
        iterations: config.iterations,
        mc_reps: config.mc_reps,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(rd: f64, lo: f64, hi: f64) -> EffectEstimate<f64> {
        EffectEstimate {
            method: Method::SynthesisGcomp,
            rd,
            ci_lower: lo,
            ci_upper: hi,
            risk1: rd,
            risk0: 0.0,
            se: None,
            draws: None,
        }
    }

    #[test]
    fn metrics_examples() {
        let m = compute_metrics(&[est(0.2, -0.8, 1.2)], 0.2).unwrap();
        assert!(m.bias.abs() < 1e-15 && (m.cld - 2.0).abs() < 1e-12 && m.coverage == 1.0);
        let m = compute_metrics(&[est(0.3, 0.25, 0.35), est(0.1, 0.05, 0.12)], 0.2).unwrap();
        assert!(m.bias.abs() < 1e-12);
        assert!((m.cld - 0.085).abs() < 1e-12);
        assert_eq!(m.coverage, 0.0);
        assert!(compute_metrics::<f64>(&[], 0.0).is_err());
    }

    #[test]
    fn arms_follow_report_order() {
        let arms = Arm::all();
        assert_eq!(arms.len(), 14);
        assert_eq!(arms[0].scenario_tag(), "restriction");
        assert_eq!(arms[4].method, Method::SynthesisGcomp);
        assert_eq!(arms[4].scenario, Some(Scenario::StrictNull));
        assert_eq!(arms[13].scenario, Some(Scenario::AccurateWithCovariance));
        assert_eq!("uncertain_null".parse::<Scenario>(), Ok(Scenario::UncertainNull));
    }

    #[test]
    fn single_iteration_is_deterministic() {
        let cfg = SimulationConfig::<f64> {
            iterations: 1,
            mc_reps: 50,
            truth_n: 10_000,
            ..Default::default()
        };
        let a = run_simulation(&cfg).unwrap();
        let b = run_simulation(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 14);
        for r in &a.rows {
            assert_eq!(r.n_failed, 0, "{r:?}");
            assert!(r.coverage == 0.0 || r.coverage == 1.0);
            assert!(r.cld > 0.0);
        }
    }

    #[test]
    fn rejects_empty_runs() {
        let cfg = SimulationConfig::<f64> {
            iterations: 0,
            ..Default::default()
        };
        assert_eq!(run_simulation(&cfg), Err(SimulationError::NoIterations));
    }
}
