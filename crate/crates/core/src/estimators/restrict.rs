//! Restriction estimators solved as stacked estimating equations.
//!
//! Restricting the target population keeps only `W = 0` target rows (the
//! region the trial covers); restricting the covariate set averages over the
//! whole target population while adjusting for `V` alone.

use crate::data::{Observation, StudyDataset};
use crate::glm::{self, expit, logistic_score_into, map_divergence, DesignSpec, Overrides};
use crate::mest::{self, FnEstimatingFunction};
use crate::scalar::Scalar;

use super::{wald, EffectEstimate, EstimationOptions, EstimatorError, Method};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Restriction {
    /// Transport to the `W = 0` part of the target population only.
    TargetPopulation,
    /// Transport to the whole target population, adjusting for `V` only.
    CovariateSet,
}

impl Restriction {
    fn includes(self, obs: &Observation<impl Scalar>) -> bool {
        match self {
            Restriction::TargetPopulation => !obs.female,
            Restriction::CovariateSet => true,
        }
    }
}

fn dot<T: Scalar>(x: &[T], b: &[T]) -> T {
    x.iter().zip(b).map(|(&a, &c)| a * c).sum()
}

fn trial_mean_outcome<T: Scalar>(rows: &[Observation<T>], restriction: Restriction) -> T {
    let (n, s) = rows
        .iter()
        .filter(|r| r.is_trial() && restriction.includes(*r))
        .fold((0usize, T::zero()), |(n, s), r| {
            (n + 1, s + T::indicator(r.outcome == Some(true)))
        });
    if n == 0 {
        T::lit(0.5)
    } else {
        s / T::from_count(n)
    }
}

enum GcompUnit<T> {
    Trial { row: usize, y: T },
    Target { row: usize },
    Other,
}

/// Outcome-model g-computation: logistic model on trial rows, averaged
/// predictions under `A = 0` and `A = 1` over the (restricted) target rows,
/// and their difference, all in one stacked system.
pub fn restricted_gcomp<T: Scalar>(
    data: &StudyDataset<T>,
    outcome_design: &DesignSpec<T>,
    restriction: Restriction,
    options: &EstimationOptions<T>,
) -> Result<EffectEstimate<T>, EstimatorError> {
    let rows = data.rows();
    let trial: Vec<&Observation<T>> = rows
        .iter()
        .filter(|r| r.is_trial() && restriction.includes(*r))
        .collect();
    let target: Vec<&Observation<T>> = rows
        .iter()
        .filter(|r| r.is_target() && restriction.includes(*r))
        .collect();
    if trial.is_empty() {
        return Err(EstimatorError::NoTrialMen);
    }
    if target.is_empty() {
        return Err(EstimatorError::NoTargetMen);
    }

    let method = match restriction {
        Restriction::TargetPopulation => Method::RestrictPopulationGcomp,
        Restriction::CovariateSet => Method::RestrictCovariatesGcomp,
    };
    // A constant trial outcome has no finite logistic MLE; every limiting
    // prediction equals that constant.
    let first = trial[0].outcome;
    if trial.iter().all(|r| r.outcome == first) {
        let c = T::indicator(first == Some(true));
        return Ok(wald(method, c, c, T::zero()));
    }

    let x_trial = outcome_design.matrix(trial.iter().copied(), Overrides::NONE)?;
    let x0 = outcome_design.matrix(target.iter().copied(), Overrides::treat(false))?;
    let x1 = outcome_design.matrix(target.iter().copied(), Overrides::treat(true))?;
    glm::check_rank(&x_trial, None)?;

    let mut units = Vec::with_capacity(rows.len());
    let (mut ti, mut si) = (0, 0);
    for r in rows {
        if r.is_trial() && restriction.includes(r) {
            units.push(GcompUnit::Trial {
                row: ti,
                y: T::indicator(r.outcome == Some(true)),
            });
            ti += 1;
        } else if r.is_target() && restriction.includes(r) {
            units.push(GcompUnit::Target { row: si });
            si += 1;
        } else {
            units.push(GcompUnit::Other);
        }
    }

    let p = outcome_design.len();
    let ef = FnEstimatingFunction::new(p + 3, units.len(), |i, theta: &[T], out: &mut [T]| {
        out.iter_mut().for_each(|o| *o = T::zero());
        let alpha = &theta[..p];
        let (r0, r1, rd) = (theta[p], theta[p + 1], theta[p + 2]);
        match units[i] {
            GcompUnit::Trial { row, y } => {
                logistic_score_into(x_trial.row(row), y, T::one(), alpha, &mut out[..p]);
            }
            GcompUnit::Target { row } => {
                out[p] = expit(dot(x0.row(row), alpha)) - r0;
                out[p + 1] = expit(dot(x1.row(row), alpha)) - r1;
            }
            GcompUnit::Other => {}
        }
        out[p + 2] = (r1 - r0) - rd;
    });

    let mean_y = trial_mean_outcome(rows, restriction);
    let mut init = vec![T::zero(); p + 3];
    init[p] = mean_y;
    init[p + 1] = mean_y;
    let solver = options.fit.guarded_solver((0..p).collect());
    let est = mest::estimate(&ef, &init, &solver).map_err(map_divergence)?;

    Ok(wald(
        method,
        est.theta_hat[p + 1],
        est.theta_hat[p],
        est.covariance[(p + 2, p + 2)],
    ))
}

struct IpwUnit<T> {
    /// Row in the selection design matrix and `I(R = 1)`.
    selection: Option<(usize, T)>,
    /// Treatment and outcome for trial rows entering the weighted means.
    trial: Option<(bool, T)>,
}

/// Weighted arm means `Σ w y I(A=a) / Σ w I(A=a)` for `a = 0, 1`.
pub fn hajek_arm_means<T: Scalar>(outcome: &[T], treated: &[bool], weights: &[T]) -> (T, T) {
    let mut num = [T::zero(); 2];
    let mut den = [T::zero(); 2];
    for ((&y, &a), &w) in outcome.iter().zip(treated).zip(weights) {
        let k = usize::from(a);
        num[k] = num[k] + w * y;
        den[k] = den[k] + w;
    }
    (num[0] / den[0], num[1] / den[1])
}

/// Inverse-odds-of-selection weighting: intercept-only treatment model on
/// the trial, selection model for `I(R = 1)`, Hajek arm means over trial
/// rows, and their difference, all in one stacked system.
pub fn restricted_ipw<T: Scalar>(
    data: &StudyDataset<T>,
    selection_design: &DesignSpec<T>,
    restriction: Restriction,
    options: &EstimationOptions<T>,
) -> Result<EffectEstimate<T>, EstimatorError> {
    let rows = data.rows();
    if !rows.iter().any(|r| r.is_trial() && restriction.includes(r)) {
        return Err(EstimatorError::NoTrialMen);
    }
    if !rows.iter().any(|r| r.is_target() && restriction.includes(r)) {
        return Err(EstimatorError::NoTargetMen);
    }
    let selected: Vec<&Observation<T>> = rows.iter().filter(|r| restriction.includes(*r)).collect();
    let x_sel = selection_design.matrix(selected.iter().copied(), Overrides::NONE)?;
    glm::check_rank(&x_sel, None)?;

    let mut units: Vec<IpwUnit<T>> = Vec::with_capacity(rows.len());
    let mut si = 0;
    for r in rows {
        if restriction.includes(r) {
            let trial = if r.is_trial() {
                Some((r.treatment == Some(true), T::indicator(r.outcome == Some(true))))
            } else {
                None
            };
            units.push(IpwUnit {
                selection: Some((si, T::indicator(r.is_target()))),
                trial,
            });
            si += 1;
        } else {
            units.push(IpwUnit {
                selection: None,
                trial: None,
            });
        }
    }

    let q = selection_design.len();
    let k = q + 4;
    let ef = FnEstimatingFunction::new(k, units.len(), |i: usize, theta: &[T], out: &mut [T]| {
        out.iter_mut().for_each(|o| *o = T::zero());
        let mu = theta[0];
        let sigma = &theta[1..=q];
        let (r0, r1, rd) = (theta[q + 1], theta[q + 2], theta[q + 3]);
        let unit = &units[i];
        let pa = expit(mu);
        if let Some((row, is_target)) = unit.selection {
            let l = x_sel.row(row);
            logistic_score_into(l, is_target, T::one(), sigma, &mut out[1..=q]);
            if let Some((a, y)) = unit.trial {
                out[0] = T::indicator(a) - pa;
                let pi = expit(dot(l, sigma));
                let odds = pi / (T::one() - pi);
                if a {
                    out[q + 2] = (y - r1) * odds / pa;
                } else {
                    out[q + 1] = (y - r0) * odds / (T::one() - pa);
                }
            }
        }
        out[q + 3] = (r1 - r0) - rd;
    });

    let mean_y = trial_mean_outcome(rows, restriction);
    let mut init = vec![T::zero(); k];
    init[q + 1] = mean_y;
    init[q + 2] = mean_y;
    let solver = options.fit.guarded_solver((0..=q).collect());
    let est = mest::estimate(&ef, &init, &solver).map_err(map_divergence)?;

    let sigma = &est.theta_hat[1..=q];
    for (i, unit) in units.iter().enumerate() {
        if let (Some((row, _)), Some(_)) = (unit.selection, unit.trial) {
            let pi = expit(dot(x_sel.row(row), sigma));
            if pi >= T::one() || !(pi / (T::one() - pi)).is_finite() {
                return Err(EstimatorError::InfiniteWeight { row: i });
            }
        }
    }

    let method = match restriction {
        Restriction::TargetPopulation => Method::RestrictPopulationIpw,
        Restriction::CovariateSet => Method::RestrictCovariatesIpw,
    };
    Ok(wald(
        method,
        est.theta_hat[q + 2],
        est.theta_hat[q + 1],
        est.covariance[(q + 3, q + 3)],
    ))
}

/// Trial weights `odds(R=1 | l) / Pr(A = a)` at given nuisance values.
#[cfg(test)]
fn inverse_odds_weights<T: Scalar>(
    x_sel: &crate::linalg::Matrix<T>,
    sigma: &[T],
    treated: &[bool],
    p_treated: T,
) -> Vec<T> {
    treated
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let pi = expit(dot(x_sel.row(i), sigma));
            let odds = pi / (T::one() - pi);
            odds / if a { p_treated } else { T::one() - p_treated }
        })
        .collect()
}

pub fn restrict_population_gcomp<T: Scalar>(
    data: &StudyDataset<T>,
    outcome_design: &DesignSpec<T>,
) -> Result<EffectEstimate<T>, EstimatorError> {
    restricted_gcomp(data, outcome_design, Restriction::TargetPopulation, &EstimationOptions::default())
}

pub fn restrict_covariates_gcomp<T: Scalar>(
    data: &StudyDataset<T>,
    outcome_design: &DesignSpec<T>,
) -> Result<EffectEstimate<T>, EstimatorError> {
    restricted_gcomp(data, outcome_design, Restriction::CovariateSet, &EstimationOptions::default())
}

pub fn restrict_population_ipw<T: Scalar>(
    data: &StudyDataset<T>,
    selection_design: &DesignSpec<T>,
) -> Result<EffectEstimate<T>, EstimatorError> {
    restricted_ipw(data, selection_design, Restriction::TargetPopulation, &EstimationOptions::default())
}

pub fn restrict_covariates_ipw<T: Scalar>(
    data: &StudyDataset<T>,
    selection_design: &DesignSpec<T>,
) -> Result<EffectEstimate<T>, EstimatorError> {
    restricted_ipw(data, selection_design, Restriction::CovariateSet, &EstimationOptions::default())
}
