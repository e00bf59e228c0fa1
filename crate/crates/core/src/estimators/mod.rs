//! Effect estimators for the target population: restriction approaches
//! (M-estimation, Wald intervals), model synthesis (Monte Carlo,
//! percentile intervals), nonparametric bounds, and the positivity check.

mod bounds;
mod positivity;
mod restrict;
mod summary;
mod synthesis;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::data::DataError;
use crate::dists::DistError;
use crate::glm::{FitOptions, GlmError};
use crate::mest::MestError;
use crate::scalar::Scalar;

pub use bounds::{nonparametric_bounds, Bounds};
pub use positivity::{positivity_diagnostic, PositivityViolation, StratumVar};
pub use restrict::{
    hajek_arm_means, restrict_covariates_gcomp, restrict_covariates_ipw, restrict_population_gcomp,
    restrict_population_ipw, restricted_gcomp, restricted_ipw, Restriction,
};
pub use summary::{percentile, summarize_draws, DrawSummary};
pub use synthesis::{
    synthesis_gcomp, synthesis_ipw, GcompSynthesis, IpwSynthesis, McSettings, SimulationModel,
    StratifiedRisks, SynthesisSpec,
};

/// Normal quantile for two-sided 95% Wald intervals.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    RestrictPopulationGcomp,
    RestrictPopulationIpw,
    RestrictCovariatesGcomp,
    RestrictCovariatesIpw,
    SynthesisGcomp,
    SynthesisIpw,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::RestrictPopulationGcomp,
        Method::RestrictPopulationIpw,
        Method::RestrictCovariatesGcomp,
        Method::RestrictCovariatesIpw,
        Method::SynthesisGcomp,
        Method::SynthesisIpw,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::RestrictPopulationGcomp => "restrict-pop-g",
            Method::RestrictPopulationIpw => "restrict-pop-ipw",
            Method::RestrictCovariatesGcomp => "restrict-cov-g",
            Method::RestrictCovariatesIpw => "restrict-cov-ipw",
            Method::SynthesisGcomp => "synth-g",
            Method::SynthesisIpw => "synth-ipw",
        }
    }

    pub fn is_synthesis(self) -> bool {
        matches!(self, Method::SynthesisGcomp | Method::SynthesisIpw)
    }

    pub fn is_gcomp(self) -> bool {
        matches!(
            self,
            Method::RestrictPopulationGcomp | Method::RestrictCovariatesGcomp | Method::SynthesisGcomp
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

/// Risk difference in the target population with its interval.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectEstimate<T> {
    pub method: Method,
    pub rd: T,
    pub ci_lower: T,
    pub ci_upper: T,
    pub risk1: T,
    pub risk0: T,
    /// Sandwich standard error (M-estimation methods only).
    pub se: Option<T>,
    /// Monte Carlo risk-difference draws (synthesis methods only).
    pub draws: Option<Vec<T>>,
}

impl<T: Scalar> EffectEstimate<T> {
    pub fn covers(&self, truth: T) -> bool {
        self.ci_lower <= truth && truth <= self.ci_upper
    }

    pub fn width(&self) -> T {
        self.ci_upper - self.ci_lower
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("no target-population rows with W=0 to restrict to")]
    NoTargetMen,
    #[error("no trial rows with W=0")]
    NoTrialMen,
    #[error("trial row {row} has estimated target-membership probability 1 (infinite odds weight)")]
    InfiniteWeight { row: usize },
    #[error("invalid synthesis specification: {0}")]
    InvalidSpec(String),
    #[error("{failed} of {total} Monte Carlo repetitions failed (limit {limit})")]
    TooManyFailedReps { failed: usize, total: usize, limit: usize },
    #[error("no draws to summarize")]
    EmptyDraws,
    #[error("draws contain non-finite values")]
    NonFiniteDraws,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] GlmError),
    #[error(transparent)]
    Estimation(#[from] MestError),
    #[error(transparent)]
    Distribution(#[from] DistError),
}

/// Shared numerical settings for the M-estimation estimators.
#[derive(Debug, Clone)]
pub struct EstimationOptions<T> {
    pub fit: FitOptions<T>,
}

impl<T: Scalar> Default for EstimationOptions<T> {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
        }
    }
}

pub(crate) fn wald<T: Scalar>(
    method: Method,
    risk1: T,
    risk0: T,
    variance: T,
) -> EffectEstimate<T> {
    let rd = risk1 - risk0;
    let se = variance.max(T::zero()).sqrt();
    let half = T::lit(Z_95) * se;
    EffectEstimate {
        method,
        rd,
        ci_lower: rd - half,
        ci_upper: rd + half,
        risk1,
        risk0,
        se: Some(se),
        draws: None,
    }
}
