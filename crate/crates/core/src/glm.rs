//! Logistic models expressed as estimating functions, and the design
//! matrices built from model formulas such as `1, A, V, V^2`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::data::Observation;
use crate::linalg::Matrix;
use crate::mest::{self, DivergenceGuard, EstimatingFunction, MEstimate, MestError, SolverOptions};
use crate::scalar::Scalar;

/// Numerically stable inverse logit.
#[inline]
pub fn expit<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn logit<T: Scalar>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

/// Covariates a design term may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    /// Treatment `A`.
    A,
    /// Age `V`.
    V,
    /// Gender indicator `W`.
    W,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::A => "A",
            Var::V => "V",
            Var::W => "W",
        }
    }
}

impl FromStr for Var {
    type Err = GlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" => Ok(Var::A),
            "V" => Ok(Var::V),
            "W" => Ok(Var::W),
            other => Err(GlmError::Parse(format!("unknown variable `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Term<T> {
    Intercept,
    Linear(Var),
    Quadratic(Var),
    Interaction(Var, Var),
    /// `x · I(x > cut)`
    ThresholdInteraction(Var, T),
}

impl<T: Scalar> fmt::Display for Term<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => write!(f, "1"),
            Term::Linear(v) => write!(f, "{}", v.name()),
            Term::Quadratic(v) => write!(f, "{}^2", v.name()),
            Term::Interaction(a, b) => write!(f, "{}:{}", a.name(), b.name()),
            Term::ThresholdInteraction(v, c) => write!(f, "{0}:I({0}>{1})", v.name(), c),
        }
    }
}

impl<T: Scalar> FromStr for Term<T> {
    type Err = GlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if s == "1" {
            return Ok(Term::Intercept);
        }
        if let Some(base) = s.strip_suffix("^2") {
            return Ok(Term::Quadratic(base.parse()?));
        }
        if let Some((lhs, rhs)) = s.split_once([':', '*']) {
            let var: Var = lhs.parse()?;
            if let Some(inner) = rhs.strip_prefix("I(").and_then(|r| r.strip_suffix(')')) {
                let (cvar, cut) = inner
                    .split_once('>')
                    .ok_or_else(|| GlmError::Parse(format!("expected `I(x>cut)` in `{s}`")))?;
                if cvar.parse::<Var>()? != var {
                    return Err(GlmError::Parse(format!(
                        "threshold variable must match the multiplied variable in `{s}`"
                    )));
                }
                let cut: f64 = cut
                    .parse()
                    .map_err(|_| GlmError::Parse(format!("bad cutpoint in `{s}`")))?;
                return Ok(Term::ThresholdInteraction(var, T::lit(cut)));
            }
            return Ok(Term::Interaction(var, rhs.parse()?));
        }
        Ok(Term::Linear(s.parse()?))
    }
}

/// Variable assignments that replace observed values when building a
/// design row (e.g. `A` forced to 1, `W` forced to 0).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overrides {
    pub treatment: Option<bool>,
    pub female: Option<bool>,
}

impl Overrides {
    pub const NONE: Overrides = Overrides {
        treatment: None,
        female: None,
    };

    pub fn treat(a: bool) -> Self {
        Self {
            treatment: Some(a),
            female: None,
        }
    }

    pub fn treat_as_male(a: bool) -> Self {
        Self {
            treatment: Some(a),
            female: Some(false),
        }
    }
}

/// Ordered list of model terms.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec<T> {
    terms: Vec<Term<T>>,
}

impl<T: Scalar> DesignSpec<T> {
    pub fn new(terms: Vec<Term<T>>) -> Self {
        Self { terms }
    }

    /// Parses a formula-like list such as `["1", "A", "V", "V^2"]`.
    pub fn parse<S: AsRef<str>>(terms: &[S]) -> Result<Self, GlmError> {
        let terms = terms
            .iter()
            .map(|t| t.as_ref().parse())
            .collect::<Result<Vec<_>, _>>()?;
        if terms.is_empty() {
            return Err(GlmError::Parse("design has no terms".into()));
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[Term<T>] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn uses(&self, var: Var) -> bool {
        self.terms.iter().any(|t| match *t {
            Term::Intercept => false,
            Term::Linear(v) | Term::Quadratic(v) | Term::ThresholdInteraction(v, _) => v == var,
            Term::Interaction(a, b) => a == var || b == var,
        })
    }

    pub fn row_into(
        &self,
        obs: &Observation<T>,
        overrides: Overrides,
        out: &mut [T],
    ) -> Result<(), GlmError> {
        let value = |v: Var| -> Result<T, GlmError> {
            match v {
                Var::A => overrides
                    .treatment
                    .or(obs.treatment)
                    .map(T::indicator)
                    .ok_or(GlmError::Unresolved(Var::A)),
                Var::V => Ok(obs.age),
                Var::W => Ok(T::indicator(overrides.female.unwrap_or(obs.female))),
            }
        };
        for (slot, term) in out.iter_mut().zip(&self.terms) {
            *slot = match *term {
                Term::Intercept => T::one(),
                Term::Linear(v) => value(v)?,
                Term::Quadratic(v) => {
                    let x = value(v)?;
                    x * x
                }
                Term::Interaction(a, b) => value(a)? * value(b)?,
                Term::ThresholdInteraction(v, cut) => {
                    let x = value(v)?;
                    if x > cut {
                        x
                    } else {
                        T::zero()
                    }
                }
            };
        }
        Ok(())
    }

    pub fn row(&self, obs: &Observation<T>, overrides: Overrides) -> Result<Vec<T>, GlmError> {
        let mut out = vec![T::zero(); self.terms.len()];
        self.row_into(obs, overrides, &mut out)?;
        Ok(out)
    }

    pub fn matrix<'a>(
        &self,
        rows: impl IntoIterator<Item = &'a Observation<T>>,
        overrides: Overrides,
    ) -> Result<Matrix<T>, GlmError> {
        let mut data = Vec::new();
        let mut n = 0;
        let mut buf = vec![T::zero(); self.terms.len()];
        for obs in rows {
            self.row_into(obs, overrides, &mut buf)?;
            data.extend_from_slice(&buf);
            n += 1;
        }
        Ok(Matrix::from_vec(n, self.terms.len(), data).expect("consistent design width"))
    }
}

impl<T: Scalar> fmt::Display for DesignSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl<T: Scalar> FromStr for DesignSpec<T> {
    type Err = GlmError;

    /// Comma-separated terms, e.g. `1,A,V,V^2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
        Self::parse(&parts)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GlmError {
    #[error("design parse error: {0}")]
    Parse(String),
    #[error("variable {} cannot be resolved from the row or overrides", .0.name())]
    Unresolved(Var),
    #[error("row {row}: outcome is missing")]
    MissingOutcome { row: usize },
    #[error("row {row}: outcome must be 0 or 1")]
    NonBinaryOutcome { row: usize },
    #[error("row {row}: weight must be positive and finite")]
    InvalidWeight { row: usize },
    #[error("weights have length {found}, expected {expected}")]
    WeightLength { expected: usize, found: usize },
    #[error("no observations to fit")]
    Empty,
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("perfect separation: coefficient {coordinate} diverged ({value:.3e})")]
    Separation { coordinate: usize, value: f64 },
    #[error(transparent)]
    Estimation(#[from] MestError),
}

/// Contribution of one unit to the (weighted) logistic score,
/// `w (y − expit(xᵀβ)) x`.
#[inline]
pub fn logistic_score_into<T: Scalar>(x: &[T], y: T, weight: T, beta: &[T], out: &mut [T]) {
    let eta: T = x.iter().zip(beta).map(|(&a, &b)| a * b).sum();
    let r = weight * (y - expit(eta));
    for (o, &xi) in out.iter_mut().zip(x) {
        *o = r * xi;
    }
}

/// Logistic score equations over a fixed design matrix.
pub struct LogisticScore<'a, T> {
    pub x: &'a Matrix<T>,
    pub y: &'a [T],
    pub weights: Option<&'a [T]>,
}

impl<T: Scalar> EstimatingFunction<T> for LogisticScore<'_, T> {
    fn dim(&self) -> usize {
        self.x.cols()
    }

    fn n_units(&self) -> usize {
        self.x.rows()
    }

    fn unit(&self, i: usize, theta: &[T], out: &mut [T]) {
        let w = self.weights.map_or(T::one(), |w| w[i]);
        logistic_score_into(self.x.row(i), self.y[i], w, theta, out);
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions<T> {
    pub solver: SolverOptions<T>,
    /// Coefficient magnitude treated as divergence during iteration.
    pub separation_bound: T,
    /// Fitted linear predictors beyond this magnitude at the solution
    /// indicate (quasi-)separation.
    pub max_linear_predictor: T,
}

impl<T: Scalar> Default for FitOptions<T> {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            separation_bound: T::lit(30.0),
            max_linear_predictor: T::lit(20.0),
        }
    }
}

impl<T: Scalar> FitOptions<T> {
    /// Solver options with the separation guard attached to the given
    /// coefficient positions.
    pub fn guarded_solver(&self, coordinates: Vec<usize>) -> SolverOptions<T> {
        SolverOptions {
            divergence: Some(DivergenceGuard {
                bound: self.separation_bound,
                coordinates,
            }),
            ..self.solver.clone()
        }
    }
}

pub(crate) fn map_divergence(err: MestError) -> GlmError {
    match err {
        MestError::Diverged { coordinate, value } => GlmError::Separation { coordinate, value },
        other => GlmError::Estimation(other),
    }
}

/// `XᵀWX` must be invertible for the logistic information to be.
pub(crate) fn check_rank<T: Scalar>(x: &Matrix<T>, weights: Option<&[T]>) -> Result<(), GlmError> {
    let p = x.cols();
    let mut gram: Matrix<T> = Matrix::zeros(p, p);
    for i in 0..x.rows() {
        let w = weights.map_or(T::one(), |w| w[i]);
        let row = x.row(i);
        for a in 0..p {
            for b in 0..p {
                gram[(a, b)] = gram[(a, b)] + w * row[a] * row[b];
            }
        }
    }
    // Column scaling keeps e.g. V and V² comparable for the pivot test.
    let scale: Vec<T> = (0..p)
        .map(|j| {
            let d = gram[(j, j)];
            if d > T::zero() {
                T::one() / d.sqrt()
            } else {
                T::one()
            }
        })
        .collect();
    for a in 0..p {
        for b in 0..p {
            gram[(a, b)] = gram[(a, b)] * scale[a] * scale[b];
        }
    }
    let det_floor = T::lit(1e3) * T::epsilon();
    let lu = gram.lu().map_err(|_| GlmError::RankDeficient)?;
    // Tiny normalized pivots mean near-collinear columns.
    let inv = lu.inverse().map_err(|_| GlmError::RankDeficient)?;
    if inv.max_abs() * det_floor > T::one() {
        return Err(GlmError::RankDeficient);
    }
    Ok(())
}

/// Fits `Σᵢ wᵢ (yᵢ − expit(xᵢᵀβ)) xᵢ = 0` from zero and returns the
/// M-estimate with its sandwich covariance.
pub fn fit_logistic_matrix<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    weights: Option<&[T]>,
    options: &FitOptions<T>,
) -> Result<MEstimate<T>, GlmError> {
    if x.rows() == 0 {
        return Err(GlmError::Empty);
    }
    for (i, &v) in y.iter().enumerate() {
        if v != T::zero() && v != T::one() {
            return Err(GlmError::NonBinaryOutcome { row: i });
        }
    }
    if let Some(w) = weights {
        if w.len() != x.rows() {
            return Err(GlmError::WeightLength {
                expected: x.rows(),
                found: w.len(),
            });
        }
        if let Some(i) = w.iter().position(|&v| !(v > T::zero()) || !v.is_finite()) {
            return Err(GlmError::InvalidWeight { row: i });
        }
    }
    check_rank(x, weights)?;

    let ef = LogisticScore { x, y, weights };
    let p = x.cols();
    let solver = options.guarded_solver((0..p).collect());
    let est = mest::estimate(&ef, &vec![T::zero(); p], &solver).map_err(map_divergence)?;

    for i in 0..x.rows() {
        let eta: T = x.row(i).iter().zip(&est.theta_hat).map(|(&a, &b)| a * b).sum();
        if eta.abs() > options.max_linear_predictor {
            let (coordinate, value) = est
                .theta_hat
                .iter()
                .enumerate()
                .fold((0, T::zero()), |m, (j, &b)| if b.abs() > m.1.abs() { (j, b) } else { m });
            return Err(GlmError::Separation {
                coordinate,
                value: value.as_f64(),
            });
        }
    }
    Ok(est)
}

/// Binary response a logistic model can be fit to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Response {
    /// Outcome `Y`.
    Outcome,
    /// Treatment `A`.
    Treatment,
    /// Membership in the target population, `I(R = 1)`.
    TargetMembership,
}

impl Response {
    pub fn value<T: Scalar>(self, obs: &Observation<T>) -> Option<T> {
        match self {
            Response::Outcome => obs.outcome.map(T::indicator),
            Response::Treatment => obs.treatment.map(T::indicator),
            Response::TargetMembership => Some(T::indicator(obs.is_target())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedLogistic<T> {
    pub coefficients: Vec<T>,
    pub covariance: Matrix<T>,
    pub design: DesignSpec<T>,
}

impl<T: Scalar> FittedLogistic<T> {
    pub fn linear_predictor(&self, obs: &Observation<T>, overrides: Overrides) -> Result<T, GlmError> {
        let x = self.design.row(obs, overrides)?;
        Ok(x.iter().zip(&self.coefficients).map(|(&a, &b)| a * b).sum())
    }

    /// Predicted probability with `overrides` applied to the row.
    pub fn predict(&self, obs: &Observation<T>, overrides: Overrides) -> Result<T, GlmError> {
        self.linear_predictor(obs, overrides).map(expit)
    }
}

/// Logistic regression of `response` on `design` over `rows`, optionally
/// weighted, with sandwich covariance.
pub fn fit_logistic<T: Scalar>(
    design: &DesignSpec<T>,
    rows: &[Observation<T>],
    response: Response,
    weights: Option<&[T]>,
    options: &FitOptions<T>,
) -> Result<FittedLogistic<T>, GlmError> {
    let x = design.matrix(rows, Overrides::NONE)?;
    let y = rows
        .iter()
        .enumerate()
        .map(|(i, r)| response.value(r).ok_or(GlmError::MissingOutcome { row: i }))
        .collect::<Result<Vec<T>, _>>()?;
    let est = fit_logistic_matrix(&x, &y, weights, options)?;
    Ok(FittedLogistic {
        coefficients: est.theta_hat,
        covariance: est.covariance,
        design: design.clone(),
    })
}
