//! M-estimation: roots of stacked estimating equations and the empirical
//! sandwich covariance.
//!
//! An estimating function maps each unit `O_i` and a parameter vector `θ`
//! (length `k`) to a length-`k` contribution `φ(O_i; θ)`. The estimate `θ̂`
//! solves `Σᵢ φ(O_i; θ̂) = 0` and its covariance is
//!
//! ```text
//! V = B⁻¹ F B⁻ᵀ / n,   B = (1/n) Σᵢ −φ′(O_i; θ̂),   F = (1/n) Σᵢ φ(O_i; θ̂) φ(O_i; θ̂)ᵀ
//! ```
//!
//! Because the estimating functions of several sub-models can be stacked
//! into one vector, uncertainty in nuisance parameters flows into the
//! parameters that depend on them.

use thiserror::Error;

use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MestError {
    #[error("initial value has length {found}, estimating function expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("estimating function has no units")]
    Empty,
    #[error("estimating equations are not finite at the starting value")]
    NonFiniteStart,
    #[error("estimating function is not finite when perturbing coordinate {coordinate}")]
    NonFiniteJacobian { coordinate: usize },
    #[error("singular Jacobian at Newton iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("root-finding did not converge after {iterations} iterations (residual norm {residual_norm:.3e})")]
    NotConverged { iterations: usize, residual_norm: f64 },
    #[error("line search stalled at iteration {iteration} (residual norm {residual_norm:.3e})")]
    Stalled { iteration: usize, residual_norm: f64 },
    #[error("parameter {coordinate} diverged to {value:.3e} during root-finding")]
    Diverged { coordinate: usize, value: f64 },
    #[error("bread matrix is singular")]
    SingularBread,
}

/// Per-unit estimating function `φ(O_i; θ)` bound to its data.
pub trait EstimatingFunction<T: Scalar> {
    /// Number of parameters `k`.
    fn dim(&self) -> usize;

    /// Number of units `n`.
    fn n_units(&self) -> usize;

    /// Writes `φ(O_i; θ)` into `out` (length `k`).
    fn unit(&self, i: usize, theta: &[T], out: &mut [T]);

    /// All contributions as an `n × k` matrix.
    fn contributions(&self, theta: &[T]) -> Matrix<T> {
        let (n, k) = (self.n_units(), self.dim());
        let mut m = Matrix::zeros(n, k);
        for i in 0..n {
            self.unit(i, theta, m.row_mut(i));
        }
        m
    }

    /// `Σᵢ φ(O_i; θ)`.
    fn summed(&self, theta: &[T]) -> Vec<T> {
        let k = self.dim();
        let mut total = vec![T::zero(); k];
        let mut buf = vec![T::zero(); k];
        for i in 0..self.n_units() {
            self.unit(i, theta, &mut buf);
            for (t, b) in total.iter_mut().zip(&buf) {
                *t = *t + *b;
            }
        }
        total
    }
}

/// Estimating function built from a closure over unit indices.
pub struct FnEstimatingFunction<F> {
    dim: usize,
    n: usize,
    f: F,
}

impl<F> FnEstimatingFunction<F> {
    pub fn new(dim: usize, n: usize, f: F) -> Self {
        Self { dim, n, f }
    }
}

impl<T, F> EstimatingFunction<T> for FnEstimatingFunction<F>
where
    T: Scalar,
    F: Fn(usize, &[T], &mut [T]),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_units(&self) -> usize {
        self.n
    }

    fn unit(&self, i: usize, theta: &[T], out: &mut [T]) {
        (self.f)(i, theta, out)
    }
}

/// Aborts root-finding when a watched coordinate leaves `[-bound, bound]`.
#[derive(Debug, Clone)]
pub struct DivergenceGuard<T> {
    pub bound: T,
    pub coordinates: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SolverOptions<T> {
    /// Convergence threshold on `‖Σᵢ φ(O_i; θ)‖∞`.
    pub tolerance: T,
    pub max_iterations: usize,
    pub max_halvings: usize,
    pub divergence: Option<DivergenceGuard<T>>,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tolerance: T::lit(1e-9).max(T::lit(1e3) * T::epsilon()),
            max_iterations: 200,
            max_halvings: 40,
            divergence: None,
        }
    }
}

/// Solved estimating equations with the empirical sandwich covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MEstimate<T> {
    pub theta_hat: Vec<T>,
    pub bread: Matrix<T>,
    pub filling: Matrix<T>,
    pub covariance: Matrix<T>,
    pub converged: bool,
    pub residual_norm: T,
    pub iterations: usize,
}

impl<T: Scalar> MEstimate<T> {
    pub fn std_errors(&self) -> Vec<T> {
        self.covariance.diagonal().into_iter().map(|v| v.max(T::zero()).sqrt()).collect()
    }
}

fn inf_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

fn two_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

fn all_finite<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Relative step scale for central differences (1e-6 in double precision).
fn step_scale<T: Scalar>() -> T {
    if T::epsilon() < T::lit(1e-12) {
        T::lit(1e-6)
    } else {
        T::epsilon().cbrt()
    }
}

/// Central-difference Jacobian of `θ ↦ Σᵢ φ(O_i; θ)`; entry `(r, j)` is
/// `∂(Σφ)_r / ∂θ_j`.
pub fn numerical_jacobian<T: Scalar, E: EstimatingFunction<T> + ?Sized>(
    ef: &E,
    theta: &[T],
) -> Result<Matrix<T>, MestError> {
    let k = ef.dim();
    if theta.len() != k {
        return Err(MestError::Dimension {
            expected: k,
            found: theta.len(),
        });
    }
    let scale = step_scale::<T>();
    let two = T::lit(2.0);
    let mut jac = Matrix::zeros(k, k);
    let mut probe = theta.to_vec();
    for j in 0..k {
        let h = scale.max(scale * theta[j].abs());
        probe[j] = theta[j] + h;
        let up = ef.summed(&probe);
        probe[j] = theta[j] - h;
        let down = ef.summed(&probe);
        probe[j] = theta[j];
        if !all_finite(&up) || !all_finite(&down) {
            return Err(MestError::NonFiniteJacobian { coordinate: j });
        }
        // The realised step (θ+h) − (θ−h) can differ from 2h in floating point.
        let width = (theta[j] + h) - (theta[j] - h);
        let width = if width > T::zero() { width } else { two * h };
        for r in 0..k {
            jac[(r, j)] = (up[r] - down[r]) / width;
        }
    }
    Ok(jac)
}

/// Whether every coordinate of `Σᵢ φᵢ` is no larger than the rounding error
/// expected from summing the contributions, `ε·√n·Σᵢ|φᵢ|`. Only consulted
/// when no Newton step reduces the residual, which at very large `n` can
/// happen before the absolute tolerance is reachable.
fn within_rounding_floor<T: Scalar, E: EstimatingFunction<T> + ?Sized>(ef: &E, theta: &[T], total: &[T]) -> bool {
    let k = ef.dim();
    let mut magnitude = vec![T::zero(); k];
    let mut buf = vec![T::zero(); k];
    for i in 0..ef.n_units() {
        ef.unit(i, theta, &mut buf);
        for (m, b) in magnitude.iter_mut().zip(&buf) {
            *m = *m + b.abs();
        }
    }
    let scale = T::epsilon() * T::from_count(ef.n_units()).sqrt();
    total.iter().zip(&magnitude).all(|(t, m)| t.abs() <= scale * *m)
}

/// Damped Newton iterations on the summed estimating equations. Converges
/// when `‖Σᵢ φᵢ‖∞` reaches the tolerance, or when no step can reduce the
/// residual and it already sits at the floating-point rounding floor.
pub fn solve<T: Scalar, E: EstimatingFunction<T> + ?Sized>(
    ef: &E,
    init: &[T],
    options: &SolverOptions<T>,
) -> Result<(Vec<T>, T, usize), MestError> {
    let k = ef.dim();
    if init.len() != k {
        return Err(MestError::Dimension {
            expected: k,
            found: init.len(),
        });
    }
    if ef.n_units() == 0 {
        return Err(MestError::Empty);
    }
    let mut theta = init.to_vec();
    let mut total = ef.summed(&theta);
    if !all_finite(&total) {
        return Err(MestError::NonFiniteStart);
    }
    let half = T::lit(0.5);
    for iteration in 0..options.max_iterations {
        if inf_norm(&total) <= options.tolerance {
            return Ok((theta, inf_norm(&total), iteration));
        }
        let jac = numerical_jacobian(ef, &theta)?;
        let rhs: Vec<T> = total.iter().map(|&x| -x).collect();
        let step = jac
            .solve(&rhs)
            .map_err(|_| MestError::SingularJacobian { iteration })?;
        if !all_finite(&step) {
            return Err(MestError::SingularJacobian { iteration });
        }

        let current = two_norm(&total);
        let mut lambda = T::one();
        let mut accepted = None;
        for _ in 0..=options.max_halvings {
            let trial: Vec<T> = theta.iter().zip(&step).map(|(&t, &s)| t + lambda * s).collect();
            let trial_total = ef.summed(&trial);
            if all_finite(&trial_total) && two_norm(&trial_total) < current {
                accepted = Some((trial, trial_total));
                break;
            }
            lambda = lambda * half;
        }
        let Some((next, next_total)) = accepted else {
            if within_rounding_floor(ef, &theta, &total) {
                return Ok((theta, inf_norm(&total), iteration));
            }
            return Err(MestError::Stalled {
                iteration,
                residual_norm: inf_norm(&total).as_f64(),
            });
        };
        theta = next;
        total = next_total;

        if let Some(guard) = &options.divergence {
            for &c in &guard.coordinates {
                if theta[c].abs() > guard.bound {
                    return Err(MestError::Diverged {
                        coordinate: c,
                        value: theta[c].as_f64(),
                    });
                }
            }
        }
    }
    let residual = inf_norm(&total);
    if residual <= options.tolerance {
        Ok((theta, residual, options.max_iterations))
    } else {
        Err(MestError::NotConverged {
            iterations: options.max_iterations,
            residual_norm: residual.as_f64(),
        })
    }
}

/// Empirical sandwich covariance at `theta_hat` using the numerical Jacobian.
pub fn sandwich<T: Scalar, E: EstimatingFunction<T> + ?Sized>(
    ef: &E,
    theta_hat: &[T],
) -> Result<MEstimate<T>, MestError> {
    let jac = numerical_jacobian(ef, theta_hat)?;
    sandwich_with_jacobian(ef, theta_hat, &jac)
}

/// Sandwich covariance with a caller-supplied Jacobian of the summed
/// estimating functions (e.g. an analytic one).
pub fn sandwich_with_jacobian<T: Scalar, E: EstimatingFunction<T> + ?Sized>(
    ef: &E,
    theta_hat: &[T],
    jacobian: &Matrix<T>,
) -> Result<MEstimate<T>, MestError> {
    let (n, k) = (ef.n_units(), ef.dim());
    if n == 0 {
        return Err(MestError::Empty);
    }
    if jacobian.rows() != k || jacobian.cols() != k {
        return Err(MestError::Dimension {
            expected: k,
            found: jacobian.rows(),
        });
    }
    let n_t = T::from_count(n);
    let bread = jacobian.scale(-T::one() / n_t);

    let mut filling = Matrix::zeros(k, k);
    let mut buf = vec![T::zero(); k];
    let mut total = vec![T::zero(); k];
    for i in 0..n {
        ef.unit(i, theta_hat, &mut buf);
        for r in 0..k {
            total[r] = total[r] + buf[r];
            if buf[r] == T::zero() {
                continue;
            }
            for c in 0..k {
                filling[(r, c)] = filling[(r, c)] + buf[r] * buf[c];
            }
        }
    }
    let filling = filling.scale(T::one() / n_t);

    let bread_inv = bread.inverse().map_err(|_| MestError::SingularBread)?;
    let covariance = bread_inv
        .matmul(&filling)
        .and_then(|m| m.matmul(&bread_inv.transpose()))
        .map_err(|_| MestError::SingularBread)?
        .scale(T::one() / n_t)
        .symmetrized();
    if !covariance.is_finite() {
        return Err(MestError::SingularBread);
    }
    Ok(MEstimate {
        theta_hat: theta_hat.to_vec(),
        bread,
        filling,
        covariance,
        converged: true,
        residual_norm: inf_norm(&total),
        iterations: 0,
    })
}

/// `solve` followed by `sandwich`.
pub fn estimate<T: Scalar, E: EstimatingFunction<T> + ?Sized>(
    ef: &E,
    init: &[T],
    options: &SolverOptions<T>,
) -> Result<MEstimate<T>, MestError> {
    let (theta, residual, iterations) = solve(ef, init, options)?;
    let mut est = sandwich(ef, &theta)?;
    est.residual_norm = residual;
    est.iterations = iterations;
    est.converged = residual <= options.tolerance;
    Ok(est)
}
