//! Synthesis of a fitted statistical model (the `W = 0` region the trial
//! covers) with an external simulation model that shifts predictions for
//! `W = 1` on the logit scale.
//!
//! g-computation predicts
//! `f_a = expit(s(a, V, W=0; α) + β₀W + β₁aW)` and IPW predicts
//! `h_a = expit(γ₀ + γ₁a + δ₀W + δ₁aW)` from a weighted marginal structural
//! model. Uncertainty is propagated by Monte Carlo: each repetition draws the
//! shift parameters from their external distribution, the statistical
//! parameters from a normal approximation to their sampling distribution, and
//! resamples the target population with replacement. The draws are
//! summarized by their median and 2.5/97.5 percentiles.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::data::{Observation, StudyDataset};
use crate::dists::{Mvn, ParameterDistribution, Sampler, SeededRng};
use crate::glm::{self, expit, fit_logistic, logistic_score_into, map_divergence, DesignSpec, FitOptions, Overrides, Response};
use crate::linalg::Matrix;
use crate::mest::{self, FnEstimatingFunction};
use crate::scalar::Scalar;

use super::summary::{percentile, summarize_draws};
use super::{EffectEstimate, EstimatorError, Method};

/// External-knowledge distribution for the two shift parameters
/// (`β₀, β₁` for g-computation, `δ₀, δ₁` for IPW).
#[derive(Debug, Clone, PartialEq)]
pub enum SimulationModel<T> {
    /// Independent draws for the main and interaction shifts.
    Independent {
        b0: ParameterDistribution<T>,
        b1: ParameterDistribution<T>,
    },
    /// One joint two-dimensional law over `(b0, b1)`.
    Joint(ParameterDistribution<T>),
}

impl<T: Scalar> SimulationModel<T> {
    /// Shifts fixed at zero: the simulation model contributes nothing.
    pub fn strict_null() -> Self {
        SimulationModel::Independent {
            b0: ParameterDistribution::PointMass { value: T::zero() },
            b1: ParameterDistribution::PointMass { value: T::zero() },
        }
    }

    /// `Trapezoid(-2, -1, 1, 2)` for both shifts.
    pub fn uncertain_null() -> Self {
        let t = ParameterDistribution::Trapezoid {
            min: T::lit(-2.0),
            mode1: T::lit(-1.0),
            mode2: T::lit(1.0),
            max: T::lit(2.0),
        };
        SimulationModel::Independent { b0: t.clone(), b1: t }
    }

    fn sampler(&self) -> Result<ShiftSampler<T>, EstimatorError> {
        match self {
            SimulationModel::Independent { b0, b1 } => {
                let (s0, s1) = (b0.sampler()?, b1.sampler()?);
                if s0.dim() != 1 || s1.dim() != 1 {
                    return Err(EstimatorError::InvalidSpec(
                        "independent shift distributions must be univariate".into(),
                    ));
                }
                Ok(ShiftSampler::Independent(s0, s1))
            }
            SimulationModel::Joint(joint) => {
                let s = joint.sampler()?;
                if s.dim() != 2 {
                    return Err(EstimatorError::InvalidSpec(format!(
                        "joint shift distribution must be two-dimensional, got {}",
                        s.dim()
                    )));
                }
                Ok(ShiftSampler::Joint(s))
            }
        }
    }
}

enum ShiftSampler<T> {
    Independent(Sampler<T>, Sampler<T>),
    Joint(Sampler<T>),
}

impl<T: Scalar> ShiftSampler<T> {
    fn draw(&self, rng: &mut SeededRng, buf: &mut Vec<T>) -> (T, T) {
        buf.clear();
        match self {
            ShiftSampler::Independent(a, b) => {
                a.draw_into(rng, buf);
                b.draw_into(rng, buf);
            }
            ShiftSampler::Joint(j) => j.draw_into(rng, buf),
        }
        (buf[0], buf[1])
    }
}

/// Monte Carlo controls.
#[derive(Debug, Clone, PartialEq)]
pub struct McSettings {
    pub reps: usize,
    pub master_seed: u64,
    /// Fresh-substream retries for a failed repetition.
    pub max_retries: usize,
    /// Largest tolerated share of repetitions that still fail after retries.
    pub max_failed_fraction: f64,
}

impl McSettings {
    pub fn new(reps: usize, master_seed: u64) -> Self {
        Self {
            reps,
            master_seed,
            max_retries: 5,
            max_failed_fraction: 0.01,
        }
    }
}

/// Everything a synthesis estimate needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisSpec<T> {
    pub simulation: SimulationModel<T>,
    pub mc: McSettings,
    /// Outcome model `s(·)` for g-computation; selection model `l(V)` for IPW.
    pub statistical_design: DesignSpec<T>,
}

/// Distinct `(V, W)` covariate patterns of the target rows.
#[derive(Debug, Clone)]
struct TargetPatterns<T> {
    pattern_of: Vec<usize>,
    rows: Vec<Observation<T>>,
    multiplicity: Vec<usize>,
}

impl<T: Scalar> TargetPatterns<T> {
    fn new(data: &StudyDataset<T>) -> Self {
        let mut index: HashMap<(u64, bool), usize> = HashMap::new();
        let mut pattern_of = Vec::new();
        let mut rows = Vec::new();
        let mut multiplicity = Vec::new();
        for r in data.target() {
            let k = (r.age.as_f64().to_bits(), r.female);
            let id = *index.entry(k).or_insert_with(|| {
                rows.push(*r);
                multiplicity.push(0);
                rows.len() - 1
            });
            multiplicity[id] += 1;
            pattern_of.push(id);
        }
        Self {
            pattern_of,
            rows,
            multiplicity,
        }
    }

    fn len(&self) -> usize {
        self.rows.len()
    }

    fn n_target(&self) -> usize {
        self.pattern_of.len()
    }

    /// Risks over the full (not resampled) target population from
    /// per-pattern predictions.
    fn stratified(&self, f1: &[T], f0: &[T]) -> StratifiedRisks<T> {
        let mut sums = [[T::zero(); 2]; 2];
        let mut counts = [0usize; 2];
        for (j, row) in self.rows.iter().enumerate() {
            let g = usize::from(row.female);
            let m = T::from_count(self.multiplicity[j]);
            sums[g][1] = sums[g][1] + m * f1[j];
            sums[g][0] = sums[g][0] + m * f0[j];
            counts[g] += self.multiplicity[j];
        }
        let n = T::from_count(self.n_target());
        let mean = |g: usize, a: usize| {
            (counts[g] > 0).then(|| sums[g][a] / T::from_count(counts[g]))
        };
        StratifiedRisks {
            risk1: (sums[0][1] + sums[1][1]) / n,
            risk0: (sums[0][0] + sums[1][0]) / n,
            male: mean(0, 1).zip(mean(0, 0)),
            female: mean(1, 1).zip(mean(1, 0)),
            share_female: T::from_count(counts[1]) / n,
        }
    }
}

/// Target-population risks and their `W` strata, as `(risk1, risk0)` pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StratifiedRisks<T> {
    pub risk1: T,
    pub risk0: T,
    pub male: Option<(T, T)>,
    pub female: Option<(T, T)>,
    pub share_female: T,
}

impl<T: Scalar> StratifiedRisks<T> {
    pub fn rd(&self) -> T {
        self.risk1 - self.risk0
    }
}

/// One repetition: draw parameters into per-pattern `(f1, f0)` and then
/// resample the target population.
fn run_monte_carlo<T, F>(
    method: Method,
    patterns: &TargetPatterns<T>,
    mc: &McSettings,
    fill: F,
) -> Result<EffectEstimate<T>, EstimatorError>
where
    T: Scalar,
    F: Fn(&mut SeededRng, &mut [T], &mut [T]) + Sync,
{
    if mc.reps == 0 {
        return Err(EstimatorError::InvalidSpec("mc_reps must be at least 1".into()));
    }
    let root = SeededRng::new(mc.master_seed, 0);
    let n = patterns.n_target();
    let inv_n = T::one() / T::from_count(n);
    let u = patterns.len();

    let one_rep = |rep: usize| -> Option<(T, T, T)> {
        let base = root.substream(rep as u64);
        let mut f1 = vec![T::zero(); u];
        let mut f0 = vec![T::zero(); u];
        let mut counts = vec![0u32; u];
        for attempt in 0..=mc.max_retries {
            let mut rng = if attempt == 0 {
                base.clone()
            } else {
                base.substream(attempt as u64)
            };
            fill(&mut rng, &mut f1, &mut f0);
            counts.iter_mut().for_each(|c| *c = 0);
            for _ in 0..n {
                counts[patterns.pattern_of[rng.index(n)]] += 1;
            }
            let (mut s1, mut s0) = (T::zero(), T::zero());
            for j in 0..u {
                if counts[j] > 0 {
                    let c = T::from_count(counts[j] as usize);
                    s1 = s1 + c * f1[j];
                    s0 = s0 + c * f0[j];
                }
            }
            let (r1, r0) = (s1 * inv_n, s0 * inv_n);
            if r1.is_finite() && r0.is_finite() {
                return Some((r1 - r0, r1, r0));
            }
        }
        None
    };

    let results: Vec<Option<(T, T, T)>> = (0..mc.reps).into_par_iter().map(one_rep).collect();

    let failed = results.iter().filter(|r| r.is_none()).count();
    let limit = (mc.max_failed_fraction * mc.reps as f64).floor() as usize;
    if failed > limit || failed == mc.reps {
        return Err(EstimatorError::TooManyFailedReps {
            failed,
            total: mc.reps,
            limit,
        });
    }
    let ok: Vec<(T, T, T)> = results.into_iter().flatten().collect();
    let draws: Vec<T> = ok.iter().map(|d| d.0).collect();
    let summary = summarize_draws(&draws)?;
    let median = |mut v: Vec<T>| {
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        percentile(&v, T::lit(0.5))
    };
    Ok(EffectEstimate {
        method,
        rd: summary.point,
        ci_lower: summary.ci_lower,
        ci_upper: summary.ci_upper,
        risk1: median(ok.iter().map(|d| d.1).collect()),
        risk0: median(ok.iter().map(|d| d.2).collect()),
        se: None,
        draws: Some(draws),
    })
}

fn trial_men<T: Scalar>(data: &StudyDataset<T>) -> Result<Vec<Observation<T>>, EstimatorError> {
    let men: Vec<_> = data.trial().filter(|r| !r.female).copied().collect();
    if men.is_empty() {
        return Err(EstimatorError::NoTrialMen);
    }
    Ok(men)
}

fn dot<T: Scalar>(x: &[T], b: &[T]) -> T {
    x.iter().zip(b).map(|(&a, &c)| a * c).sum()
}

/// Fitted statistical part of the g-computation synthesis estimator.
#[derive(Debug, Clone)]
pub struct GcompSynthesis<T> {
    alpha: Vec<T>,
    alpha_covariance: Matrix<T>,
    alpha_law: Mvn<T>,
    patterns: TargetPatterns<T>,
    /// Design rows of each target pattern under `A = a, W = 0`.
    x0: Matrix<T>,
    x1: Matrix<T>,
}

impl<T: Scalar> GcompSynthesis<T> {
    /// Fits `s(a, V, W=0; α)` on the `W = 0` trial rows.
    pub fn fit(
        data: &StudyDataset<T>,
        outcome_design: &DesignSpec<T>,
        options: &FitOptions<T>,
    ) -> Result<Self, EstimatorError> {
        let men = trial_men(data)?;
        let fit = fit_logistic(outcome_design, &men, Response::Outcome, None, options)?;
        let alpha_law = Mvn::new(fit.coefficients.clone(), &fit.covariance)?;
        let patterns = TargetPatterns::new(data);
        let x0 = outcome_design.matrix(&patterns.rows, Overrides::treat_as_male(false))?;
        let x1 = outcome_design.matrix(&patterns.rows, Overrides::treat_as_male(true))?;
        Ok(Self {
            alpha: fit.coefficients,
            alpha_covariance: fit.covariance,
            alpha_law,
            patterns,
            x0,
            x1,
        })
    }

    pub fn alpha(&self) -> &[T] {
        &self.alpha
    }

    pub fn alpha_covariance(&self) -> &Matrix<T> {
        &self.alpha_covariance
    }

    fn predictions(&self, alpha: &[T], beta: (T, T), f1: &mut [T], f0: &mut [T]) {
        for (j, row) in self.patterns.rows.iter().enumerate() {
            let mut eta0 = dot(self.x0.row(j), alpha);
            let mut eta1 = dot(self.x1.row(j), alpha);
            if row.female {
                eta0 = eta0 + beta.0;
                eta1 = eta1 + beta.0 + beta.1;
            }
            f1[j] = expit(eta1);
            f0[j] = expit(eta0);
        }
    }

    /// Risks over the observed target population at fixed `(α, β)`.
    pub fn risks_at(&self, alpha: &[T], beta: (T, T)) -> StratifiedRisks<T> {
        let u = self.patterns.len();
        let (mut f1, mut f0) = (vec![T::zero(); u], vec![T::zero(); u]);
        self.predictions(alpha, beta, &mut f1, &mut f0);
        self.patterns.stratified(&f1, &f0)
    }

    /// Risks with `W = 1` predictions replaced by constants and `W = 0`
    /// rows predicted at `α̂`.
    pub(crate) fn risks_with_female_constants(&self, female_f1: T, female_f0: T) -> StratifiedRisks<T> {
        let u = self.patterns.len();
        let (mut f1, mut f0) = (vec![T::zero(); u], vec![T::zero(); u]);
        self.predictions(&self.alpha, (T::zero(), T::zero()), &mut f1, &mut f0);
        for (j, row) in self.patterns.rows.iter().enumerate() {
            if row.female {
                f1[j] = female_f1;
                f0[j] = female_f0;
            }
        }
        self.patterns.stratified(&f1, &f0)
    }

    pub fn estimate(
        &self,
        model: &SimulationModel<T>,
        mc: &McSettings,
    ) -> Result<EffectEstimate<T>, EstimatorError> {
        let shift = model.sampler()?;
        run_monte_carlo(Method::SynthesisGcomp, &self.patterns, mc, |rng, f1, f0| {
            let mut buf = Vec::with_capacity(self.alpha.len().max(2));
            let beta = shift.draw(rng, &mut buf);
            buf.clear();
            self.alpha_law.draw_into(rng, &mut buf);
            self.predictions(&buf, beta, f1, f0);
        })
    }
}

/// Fitted statistical part of the IPW synthesis estimator: the marginal
/// structural model `expit(γ₀ + γ₁A)` for the `W = 0` target population,
/// fit by inverse-odds and inverse-treatment weighted likelihood.
#[derive(Debug, Clone)]
pub struct IpwSynthesis<T> {
    gamma: Vec<T>,
    gamma_covariance: Matrix<T>,
    gamma_law: Mvn<T>,
    patterns: TargetPatterns<T>,
}

impl<T: Scalar> IpwSynthesis<T> {
    /// Solves the stacked treatment, selection (`W = 0` rows of both
    /// populations) and weighted MSM equations; `Cov(γ̂)` comes from the
    /// joint sandwich so weight estimation is accounted for.
    pub fn fit(
        data: &StudyDataset<T>,
        selection_design: &DesignSpec<T>,
        options: &FitOptions<T>,
    ) -> Result<Self, EstimatorError> {
        trial_men(data)?;
        let rows = data.rows();
        let men: Vec<&Observation<T>> = rows.iter().filter(|r| !r.female).collect();
        if !men.iter().any(|r| r.is_target()) {
            return Err(EstimatorError::NoTargetMen);
        }
        let x_sel = selection_design.matrix(men.iter().copied(), Overrides::NONE)?;
        glm::check_rank(&x_sel, None)?;

        // (selection row, I(R=1), trial (A, Y))
        let units: Vec<Option<(usize, T, Option<(bool, T)>)>> = {
            let mut si = 0;
            rows.iter()
                .map(|r| {
                    if r.female {
                        return None;
                    }
                    let trial = r
                        .is_trial()
                        .then(|| (r.treatment == Some(true), T::indicator(r.outcome == Some(true))));
                    si += 1;
                    Some((si - 1, T::indicator(r.is_target()), trial))
                })
                .collect()
        };

        let q = selection_design.len();
        let k = q + 3;
        let ef = FnEstimatingFunction::new(k, units.len(), |i: usize, theta: &[T], out: &mut [T]| {
            out.iter_mut().for_each(|o| *o = T::zero());
            let Some((row, is_target, trial)) = units[i] else {
                return;
            };
            let mu = theta[0];
            let sigma = &theta[1..=q];
            let (g0, g1) = (theta[q + 1], theta[q + 2]);
            let l = x_sel.row(row);
            logistic_score_into(l, is_target, T::one(), sigma, &mut out[1..=q]);
            if let Some((a, y)) = trial {
                let pa = expit(mu);
                out[0] = T::indicator(a) - pa;
                let pi = expit(dot(l, sigma));
                let w = pi / (T::one() - pi) / if a { pa } else { T::one() - pa };
                let av = T::indicator(a);
                let r = w * (y - expit(g0 + g1 * av));
                out[q + 1] = r;
                out[q + 2] = r * av;
            }
        });
        let solver = options.guarded_solver((0..k).collect());
        let est = mest::estimate(&ef, &vec![T::zero(); k], &solver).map_err(map_divergence)?;

        let sigma = &est.theta_hat[1..=q];
        for (i, u) in units.iter().enumerate() {
            if let Some((row, _, Some(_))) = u {
                let pi = expit(dot(x_sel.row(*row), sigma));
                if pi >= T::one() {
                    return Err(EstimatorError::InfiniteWeight { row: i });
                }
            }
        }

        let gamma = est.theta_hat[q + 1..q + 3].to_vec();
        let gamma_covariance = est.covariance.select(&[q + 1, q + 2]);
        let gamma_law = Mvn::new(gamma.clone(), &gamma_covariance)?;
        Ok(Self {
            gamma,
            gamma_covariance,
            gamma_law,
            patterns: TargetPatterns::new(data),
        })
    }

    pub fn gamma(&self) -> &[T] {
        &self.gamma
    }

    pub fn gamma_covariance(&self) -> &Matrix<T> {
        &self.gamma_covariance
    }

    fn predictions(&self, gamma: &[T], delta: (T, T), f1: &mut [T], f0: &mut [T]) {
        for (j, row) in self.patterns.rows.iter().enumerate() {
            let shift0 = if row.female { delta.0 } else { T::zero() };
            let shift1 = if row.female { delta.1 } else { T::zero() };
            f0[j] = expit(gamma[0] + shift0);
            f1[j] = expit(gamma[0] + gamma[1] + shift0 + shift1);
        }
    }

    pub fn risks_at(&self, gamma: &[T], delta: (T, T)) -> StratifiedRisks<T> {
        let u = self.patterns.len();
        let (mut f1, mut f0) = (vec![T::zero(); u], vec![T::zero(); u]);
        self.predictions(gamma, delta, &mut f1, &mut f0);
        self.patterns.stratified(&f1, &f0)
    }

    pub fn estimate(
        &self,
        model: &SimulationModel<T>,
        mc: &McSettings,
    ) -> Result<EffectEstimate<T>, EstimatorError> {
        let shift = model.sampler()?;
        run_monte_carlo(Method::SynthesisIpw, &self.patterns, mc, |rng, f1, f0| {
            let mut buf = Vec::with_capacity(2);
            self.gamma_law.draw_into(rng, &mut buf);
            let gamma = [buf[0], buf[1]];
            let delta = shift.draw(rng, &mut buf);
            self.predictions(&gamma, delta, f1, f0);
        })
    }
}

pub fn synthesis_gcomp<T: Scalar>(
    data: &StudyDataset<T>,
    spec: &SynthesisSpec<T>,
) -> Result<EffectEstimate<T>, EstimatorError> {
    GcompSynthesis::fit(data, &spec.statistical_design, &FitOptions::default())?
        .estimate(&spec.simulation, &spec.mc)
}

pub fn synthesis_ipw<T: Scalar>(
    data: &StudyDataset<T>,
    spec: &SynthesisSpec<T>,
) -> Result<EffectEstimate<T>, EstimatorError> {
    IpwSynthesis::fit(data, &spec.statistical_design, &FitOptions::default())?
        .estimate(&spec.simulation, &spec.mc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{restricted_gcomp, restricted_ipw, EstimationOptions, Restriction};

    fn instance(female_every: usize) -> StudyDataset<f64> {
        let target: Vec<_> = (0..300)
            .map(|i| Observation::target(18.0 + (i % 12) as f64, female_every > 0 && i % female_every == 0))
            .collect();
        let mut rng = SeededRng::new(5, 5);
        let trial: Vec<_> = (0..400)
            .map(|i| {
                let a = i % 2 == 0;
                let v = 18.0 + ((i * 7) % 13) as f64;
                let p = expit(-3.0 + 1.4 * f64::from(u8::from(a)) + 0.08 * v);
                Observation::trial(a, rng.bernoulli(p), v, false)
            })
            .collect();
        StudyDataset::from_parts(target, trial).unwrap()
    }

    fn spec(sim: SimulationModel<f64>, reps: usize, design: &str) -> SynthesisSpec<f64> {
        SynthesisSpec {
            simulation: sim,
            mc: McSettings::new(reps, 17),
            statistical_design: design.parse().unwrap(),
        }
    }

    #[test]
    fn strict_null_gcomp_matches_covariate_restriction() {
        let d = instance(3);
        let s = spec(SimulationModel::strict_null(), 2000, "1,A,V");
        let est = synthesis_gcomp(&d, &s).unwrap();
        let r = restricted_gcomp(&d, &s.statistical_design, Restriction::CovariateSet, &EstimationOptions::default()).unwrap();
        assert!((est.rd - r.rd).abs() < 0.01, "{} vs {}", est.rd, r.rd);
        assert_eq!(est.draws.as_ref().unwrap().len(), 2000);
        assert!(est.ci_lower <= est.rd && est.rd <= est.ci_upper);
    }

    #[test]
    fn strict_null_ipw_matches_covariate_restriction() {
        let d = instance(3);
        let s = spec(SimulationModel::strict_null(), 2000, "1,V");
        let est = synthesis_ipw(&d, &s).unwrap();
        let r = restricted_ipw(&d, &s.statistical_design, Restriction::CovariateSet, &EstimationOptions::default()).unwrap();
        assert!((est.rd - r.rd).abs() < 0.01, "{} vs {}", est.rd, r.rd);
    }

    #[test]
    fn shift_is_inert_without_women() {
        let d = instance(0);
        let a = synthesis_gcomp(&d, &spec(SimulationModel::uncertain_null(), 500, "1,A,V")).unwrap();
        let b = synthesis_gcomp(&d, &spec(SimulationModel::strict_null(), 500, "1,A,V")).unwrap();
        let r = restricted_gcomp(&d, &"1,A,V".parse().unwrap(), Restriction::TargetPopulation, &EstimationOptions::default()).unwrap();
        assert!((a.rd - r.rd).abs() < 0.01);
        assert!((a.rd - b.rd).abs() < 0.01);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let d = instance(3);
        let s = spec(SimulationModel::uncertain_null(), 300, "1,A,V");
        assert_eq!(synthesis_gcomp(&d, &s).unwrap(), synthesis_gcomp(&d, &s).unwrap());
        let mut other = s.clone();
        other.mc.master_seed = 18;
        assert_ne!(synthesis_gcomp(&d, &s).unwrap(), synthesis_gcomp(&d, &other).unwrap());
    }

    #[test]
    fn constant_age_ipw_collapses_to_arm_means() {
        let target: Vec<_> = (0..50).map(|_| Observation::target(22.0, false)).collect();
        let trial: Vec<_> = (0..80)
            .map(|i| Observation::trial(i < 40, if i < 40 { i % 2 == 0 } else { i % 5 == 0 }, 22.0, false))
            .collect();
        let d: StudyDataset<f64> = StudyDataset::from_parts(target, trial).unwrap();
        let fit = IpwSynthesis::fit(&d, &"1".parse().unwrap(), &FitOptions::default()).unwrap();
        let r = fit.risks_at(fit.gamma(), (0.0, 0.0));
        assert!((r.risk1 - 0.5).abs() < 1e-8 && (r.risk0 - 0.2).abs() < 1e-8);
        let est = fit.estimate(&SimulationModel::strict_null(), &McSettings::new(2000, 3)).unwrap();
        assert!((est.rd - 0.3).abs() < 0.01, "{}", est.rd);
    }

    #[test]
    fn joint_model_must_be_bivariate() {
        let d = instance(3);
        let bad = SimulationModel::Joint(ParameterDistribution::Normal { mu: 0.0, sigma: 1.0 });
        let e = synthesis_gcomp(&d, &spec(bad, 10, "1,A,V")).unwrap_err();
        assert!(matches!(e, EstimatorError::InvalidSpec(_)));
        let bad = SimulationModel::Independent {
            b0: ParameterDistribution::MultivariateNormal {
                mu: vec![0.0, 0.0],
                cov: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            },
            b1: ParameterDistribution::PointMass { value: 0.0 },
        };
        assert!(synthesis_gcomp(&d, &spec(bad, 10, "1,A,V")).is_err());
    }

    #[test]
    fn stratified_risks_decompose() {
        let d = instance(3);
        let fit = GcompSynthesis::fit(&d, &"1,A,V".parse().unwrap(), &FitOptions::default()).unwrap();
        let r = fit.risks_at(fit.alpha(), (0.4, -0.7));
        let (m1, m0) = r.male.unwrap();
        let (f1, f0) = r.female.unwrap();
        let p = r.share_female;
        assert!((r.risk1 - ((1.0 - p) * m1 + p * f1)).abs() < 1e-10);
        assert!((r.risk0 - ((1.0 - p) * m0 + p * f0)).abs() < 1e-10);
    }
}
