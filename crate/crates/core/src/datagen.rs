//! Data-generating process of the simulation study: a clinic (target)
//! population with men and women, a trial enrolling only men, a secret
//! trial drawn from the clinic covariate law that supplies summary
//! statistics for the simulation model, and a Monte Carlo truth oracle.

use rayon::prelude::*;
use thiserror::Error;

use crate::data::{Observation, StudyDataset};
use crate::dists::{DistError, ParameterDistribution, SeededRng, Trapezoid};
use crate::estimators::SimulationModel;
use crate::glm::{expit, fit_logistic, DesignSpec, FitOptions, GlmError, Response};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Coefficients of `p_Y = expit(b0 + bA·A + bV·V + bW·W + bAW·A·W)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeCoefficients<T> {
    pub intercept: T,
    pub a: T,
    pub v: T,
    pub w: T,
    pub aw: T,
}

impl<T: Scalar> OutcomeCoefficients<T> {
    pub fn probability(&self, a: bool, v: T, w: bool) -> T {
        let (a, w) = (T::indicator(a), T::indicator(w));
        expit(self.intercept + self.a * a + self.v * v + self.w * w + self.aw * a * w)
    }
}

impl<T: Scalar> Default for OutcomeCoefficients<T> {
    fn default() -> Self {
        Self {
            intercept: T::lit(-3.25),
            a: T::lit(1.50),
            v: T::lit(0.08),
            w: T::lit(-0.02),
            aw: T::lit(-0.65),
        }
    }
}

/// Covariate law of one population: `W ~ Bernoulli(p_female)` and
/// `V ~ Trapezoid` rounded to an integer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariateLaw<T> {
    pub p_female: f64,
    pub age: Trapezoid<T>,
}

impl<T: Scalar> CovariateLaw<T> {
    pub fn clinic() -> Self {
        Self {
            p_female: 0.667,
            age: Trapezoid::new(T::lit(18.0), T::lit(18.0), T::lit(25.0), T::lit(30.0))
                .expect("valid trapezoid"),
        }
    }

    pub fn trial() -> Self {
        Self {
            p_female: 0.0,
            age: Trapezoid::new(T::lit(18.0), T::lit(25.0), T::lit(30.0), T::lit(30.0))
                .expect("valid trapezoid"),
        }
    }

    /// Draws `(V, W)`; `W` first.
    pub fn draw(&self, rng: &mut SeededRng) -> (T, bool) {
        let female = rng.bernoulli(self.p_female);
        let age = self.age.sample(rng).round();
        (age, female)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig<T> {
    pub n_clinic: usize,
    pub n_trial: usize,
    pub n_secret: usize,
    pub outcome: OutcomeCoefficients<T>,
    pub clinic: CovariateLaw<T>,
    pub trial: CovariateLaw<T>,
    pub p_treated: f64,
    pub master_seed: u64,
}

impl<T: Scalar> Default for ScenarioConfig<T> {
    fn default() -> Self {
        Self {
            n_clinic: 1000,
            n_trial: 1000,
            n_secret: 2000,
            outcome: OutcomeCoefficients::default(),
            clinic: CovariateLaw::clinic(),
            trial: CovariateLaw::trial(),
            p_treated: 0.5,
            master_seed: 20230101,
        }
    }
}

impl<T: Scalar> ScenarioConfig<T> {
    pub fn validate(&self) -> Result<(), DatagenError> {
        for (name, n) in [
            ("n_clinic", self.n_clinic),
            ("n_trial", self.n_trial),
            ("n_secret", self.n_secret),
        ] {
            if n == 0 {
                return Err(DatagenError::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        for (name, p) in [
            ("clinic female probability", self.clinic.p_female),
            ("trial female probability", self.trial.p_female),
            ("treatment probability", self.p_treated),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DatagenError::InvalidConfig(format!("{name} {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatagenError {
    #[error("invalid scenario configuration: {0}")]
    InvalidConfig(String),
    #[error("secret trial fit failed after one regeneration: {0}")]
    SecretTrial(GlmError),
    #[error(transparent)]
    Distribution(#[from] DistError),
}

/// Clinic (target population) rows; treatment and outcome are absent.
pub fn generate_clinic<T: Scalar>(
    config: &ScenarioConfig<T>,
    n: usize,
    rng: &mut SeededRng,
) -> Vec<Observation<T>> {
    (0..n)
        .map(|_| {
            let (age, female) = config.clinic.draw(rng);
            Observation::target(age, female)
        })
        .collect()
}

fn randomized_rows<T: Scalar>(
    config: &ScenarioConfig<T>,
    law: &CovariateLaw<T>,
    n: usize,
    rng: &mut SeededRng,
) -> Vec<Observation<T>> {
    (0..n)
        .map(|_| {
            let (age, female) = law.draw(rng);
            let a = rng.bernoulli(config.p_treated);
            let y = rng.bernoulli(config.outcome.probability(a, age, female).as_f64());
            Observation::trial(a, y, age, female)
        })
        .collect()
}

/// Trial rows with randomized treatment and simulated outcomes.
pub fn generate_trial<T: Scalar>(
    config: &ScenarioConfig<T>,
    n: usize,
    rng: &mut SeededRng,
) -> Vec<Observation<T>> {
    randomized_rows(config, &config.trial, n, rng)
}

/// Clinic and trial data of one simulation iteration, drawn from
/// sub-streams 0 and 1 of `rng`.
pub fn generate_study<T: Scalar>(
    config: &ScenarioConfig<T>,
    rng: &SeededRng,
) -> StudyDataset<T> {
    let clinic = generate_clinic(config, config.n_clinic, &mut rng.substream(0));
    let trial = generate_trial(config, config.n_trial, &mut rng.substream(1));
    StudyDataset::from_parts(clinic, trial).expect("generated rows satisfy dataset invariants")
}

/// Estimated `W` shifts `(main, interaction)` with their covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftEstimate<T> {
    pub estimate: [T; 2],
    pub covariance: Matrix<T>,
}

impl<T: Scalar> ShiftEstimate<T> {
    fn from_fit(coefficients: &[T], covariance: &Matrix<T>, idx: [usize; 2]) -> Self {
        Self {
            estimate: [coefficients[idx[0]], coefficients[idx[1]]],
            covariance: covariance.select(&idx),
        }
    }

    pub fn std_errors(&self) -> [T; 2] {
        [self.covariance[(0, 0)].sqrt(), self.covariance[(1, 1)].sqrt()]
    }

    /// Independent normals centered at the estimates.
    pub fn accurate(&self) -> SimulationModel<T> {
        self.independent(T::one())
    }

    /// Independent normals with the estimated means negated.
    pub fn inaccurate(&self) -> SimulationModel<T> {
        self.independent(-T::one())
    }

    /// Bivariate normal using the full estimated covariance.
    pub fn accurate_with_covariance(&self) -> SimulationModel<T> {
        let c = &self.covariance;
        SimulationModel::Joint(ParameterDistribution::MultivariateNormal {
            mu: self.estimate.to_vec(),
            cov: vec![vec![c[(0, 0)], c[(0, 1)]], vec![c[(1, 0)], c[(1, 1)]]],
        })
    }

    fn independent(&self, sign: T) -> SimulationModel<T> {
        let se = self.std_errors();
        SimulationModel::Independent {
            b0: ParameterDistribution::Normal {
                mu: sign * self.estimate[0],
                sigma: se[0],
            },
            b1: ParameterDistribution::Normal {
                mu: sign * self.estimate[1],
                sigma: se[1],
            },
        }
    }
}

/// Summary statistics released by the secret trial; no row-level data.
#[derive(Debug, Clone, PartialEq)]
pub struct SecretTrialSummary<T> {
    /// `(β̂₀, β̂₁)`: `W` and `A·W` coefficients of the `1,A,V,W,A:W` outcome model.
    pub gcomp: ShiftEstimate<T>,
    /// `(δ̂₀, δ̂₁)`: `W` and `A·W` coefficients of the `1,A,W,A:W` marginal
    /// structural model weighted by `1/Pr(A=a)`.
    pub ipw: ShiftEstimate<T>,
}

fn fit_secret<T: Scalar>(rows: &[Observation<T>]) -> Result<SecretTrialSummary<T>, GlmError> {
    let opts = FitOptions::default();
    let outcome: DesignSpec<T> = "1,A,V,W,A:W".parse()?;
    let g = fit_logistic(&outcome, rows, Response::Outcome, None, &opts)?;

    let n1 = rows.iter().filter(|r| r.treatment == Some(true)).count();
    let p1 = T::from_count(n1) / T::from_count(rows.len());
    let weights: Vec<T> = rows
        .iter()
        .map(|r| T::one() / if r.treatment == Some(true) { p1 } else { T::one() - p1 })
        .collect();
    let msm: DesignSpec<T> = "1,A,W,A:W".parse()?;
    let h = fit_logistic(&msm, rows, Response::Outcome, Some(&weights), &opts)?;

    Ok(SecretTrialSummary {
        gcomp: ShiftEstimate::from_fit(&g.coefficients, &g.covariance, [3, 4]),
        ipw: ShiftEstimate::from_fit(&h.coefficients, &h.covariance, [2, 3]),
    })
}

/// Runs a secret trial of `n` clinic-like participants and returns only
/// the fitted shift parameters. A failed fit is retried once on a fresh
/// sub-stream.
pub fn generate_secret_trial<T: Scalar>(
    config: &ScenarioConfig<T>,
    n: usize,
    rng: &SeededRng,
) -> Result<SecretTrialSummary<T>, DatagenError> {
    let first = fit_secret(&randomized_rows(config, &config.clinic, n, &mut rng.clone()));
    match first {
        Ok(s) => Ok(s),
        Err(_) => {
            let rows = randomized_rows(config, &config.clinic, n, &mut rng.substream(1));
            fit_secret(&rows).map_err(DatagenError::SecretTrial)
        }
    }
}

const ORACLE_CHUNK: usize = 1 << 16;

fn oracle<T, F>(config: &ScenarioConfig<T>, n: usize, rng: &SeededRng, contribution: F) -> T
where
    T: Scalar,
    F: Fn(&mut SeededRng, T, bool) -> T + Sync,
{
    if n == 0 {
        return T::zero();
    }
    let chunks = n.div_ceil(ORACLE_CHUNK);
    let sums: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng.substream(c as u64);
            let len = ORACLE_CHUNK.min(n - c * ORACLE_CHUNK);
            (0..len)
                .map(|_| {
                    let (age, female) = config.clinic.draw(&mut r);
                    contribution(&mut r, age, female)
                })
                .sum()
        })
        .collect();
    sums.into_iter().sum::<T>() / T::from_count(n)
}

/// Monte Carlo truth: the mean of `p(Y|A=1) − p(Y|A=0)` over `n` draws of
/// the clinic covariate law. Deterministic in `rng` regardless of threads.
pub fn true_psi<T: Scalar>(config: &ScenarioConfig<T>, n: usize, rng: &SeededRng) -> T {
    let c = config.outcome;
    oracle(config, n, rng, |_, v, w| c.probability(true, v, w) - c.probability(false, v, w))
}

/// Truth approximated from realized Bernoulli potential outcomes.
pub fn true_psi_realized<T: Scalar>(config: &ScenarioConfig<T>, n: usize, rng: &SeededRng) -> T {
    let c = config.outcome;
    oracle(config, n, rng, |r, v, w| {
        let y1 = r.bernoulli(c.probability(true, v, w).as_f64());
        let y0 = r.bernoulli(c.probability(false, v, w).as_f64());
        T::indicator(y1) - T::indicator(y0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ScenarioConfig<f64> {
        ScenarioConfig::default()
    }

    #[test]
    fn clinic_law() {
        let rows = generate_clinic(&cfg(), 100_000, &mut SeededRng::new(1, 0));
        let w = rows.iter().filter(|r| r.female).count() as f64 / 1e5;
        assert!((w - 0.667).abs() < 0.005, "{w}");
        assert!(rows.iter().all(|r| r.is_target() && r.treatment.is_none() && r.outcome.is_none()));
        assert!(rows.iter().all(|r| r.age.fract() == 0.0 && (18.0..=30.0).contains(&r.age)));
        let t = CovariateLaw::<f64>::clinic().age;
        let analytic: f64 = (18..=30)
            .map(|k| {
                let k = k as f64;
                k * (t.cdf(k + 0.5) - t.cdf(k - 0.5))
            })
            .sum();
        let mean = rows.iter().map(|r| r.age).sum::<f64>() / 1e5;
        assert!((mean - analytic).abs() < 0.02, "{mean} vs {analytic}");
    }

    #[test]
    fn trial_law() {
        let c = cfg();
        let rows = generate_trial(&c, 100_000, &mut SeededRng::new(2, 0));
        assert!(rows.iter().all(|r| !r.female && r.is_trial()));
        let treated: Vec<_> = rows.iter().filter(|r| r.treatment == Some(true)).collect();
        let pa = treated.len() as f64 / 1e5;
        assert!((pa - 0.5).abs() < 0.005);
        let t = CovariateLaw::<f64>::trial().age;
        let expected: f64 = (18..=30)
            .map(|k| {
                let k = k as f64;
                (t.cdf(k + 0.5) - t.cdf(k - 0.5)) * expit(-1.75 + 0.08 * k)
            })
            .sum();
        let observed = treated.iter().filter(|r| r.outcome == Some(true)).count() as f64 / treated.len() as f64;
        assert!((observed - expected).abs() < 0.005, "{observed} vs {expected}");
    }

    #[test]
    fn spot_value() {
        let c = OutcomeCoefficients::<f64>::default();
        let d = c.probability(true, 23.0, true) - c.probability(false, 23.0, true);
        assert!((d - (expit(-0.58) - expit(-1.43))).abs() < 1e-15);
    }

    #[test]
    fn null_effect_truth_is_zero() {
        let mut c = cfg();
        c.outcome.a = 0.0;
        c.outcome.aw = 0.0;
        assert_eq!(true_psi(&c, 10_000, &SeededRng::new(3, 0)), 0.0);
    }

    #[test]
    fn truth_near_published_value() {
        let psi = true_psi(&cfg(), 1_000_000, &SeededRng::new(4, 0));
        assert!((psi - 0.216697).abs() < 0.002, "{psi}");
        let realized = true_psi_realized(&cfg(), 1_000_000, &SeededRng::new(4, 0));
        assert!((psi - realized).abs() < 3.0 * (0.25f64 / 1e6).sqrt() * 2.0, "{psi} vs {realized}");
    }

    #[test]
    fn secret_trial_shrinks_with_n() {
        let c = cfg();
        let small = generate_secret_trial(&c, 2000, &SeededRng::new(5, 0)).unwrap();
        let large = generate_secret_trial(&c, 8000, &SeededRng::new(5, 0)).unwrap();
        for s in [&small.gcomp, &small.ipw] {
            assert!(s.covariance[(0, 0)] > 0.0 && s.covariance[(1, 1)] > 0.0);
        }
        let ratio = small.gcomp.covariance[(1, 1)] / large.gcomp.covariance[(1, 1)];
        assert!((ratio - 4.0).abs() < 1.0, "{ratio}");
        let ratio = small.ipw.covariance[(1, 1)] / large.ipw.covariance[(1, 1)];
        assert!((ratio - 4.0).abs() < 1.0, "{ratio}");
    }

    #[test]
    fn generated_study_is_deterministic() {
        let a = generate_study(&cfg(), &SeededRng::new(9, 3));
        let b = generate_study(&cfg(), &SeededRng::new(9, 3));
        assert_eq!(a.rows(), b.rows());
        assert_eq!(a.n_target(), 1000);
        assert_eq!(a.n_trial(), 1000);
    }

    #[test]
    fn invalid_config() {
        let mut c = cfg();
        c.n_secret = 0;
        assert!(c.validate().is_err());
        c.n_secret = 1;
        c.p_treated = 1.5;
        assert!(c.validate().is_err());
    }
}
