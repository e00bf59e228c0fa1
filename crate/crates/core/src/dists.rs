//! Seeded sampling for the laws used by the data generator and the
//! simulation-model parameters.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("trapezoid requires min <= mode1 <= mode2 <= max with min < max")]
    InvalidTrapezoid,
    #[error("normal standard deviation must be finite and non-negative")]
    InvalidSigma,
    #[error("multivariate normal mean has length {mean} but covariance is {rows}x{cols}")]
    MvnShape { mean: usize, rows: usize, cols: usize },
    #[error("covariance matrix is not symmetric")]
    Asymmetric,
    #[error("covariance matrix is not positive semi-definite: {0}")]
    NotPsd(LinalgError),
    #[error("distribution parameters must be finite")]
    NonFinite,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha8 stream keyed by `(master_seed, stream_id)`.
///
/// Streams with different ids share the key but use different ChaCha
/// stream positions, so they never overlap. Child streams are derived
/// deterministically with [`SeededRng::substream`].
#[derive(Debug, Clone)]
pub struct SeededRng {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Independent child stream; depends only on `(master_seed, stream_id, child)`.
    pub fn substream(&self, child: u64) -> SeededRng {
        let id = splitmix64(self.stream_id.rotate_left(23) ^ splitmix64(child.wrapping_add(0xA24B_AED4_963E_E407)));
        SeededRng::new(self.master_seed, id)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// `n` draws from `0..n` with replacement.
pub fn resample_indices(n: usize, rng: &mut SeededRng) -> Vec<usize> {
    (0..n).map(|_| rng.index(n)).collect()
}

/// Trapezoidal law on `[min, max]`, flat between the two modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trapezoid<T> {
    min: T,
    mode1: T,
    mode2: T,
    max: T,
    height: T,
}

impl<T: Scalar> Trapezoid<T> {
    pub fn new(min: T, mode1: T, mode2: T, max: T) -> Result<Self, DistError> {
        if ![min, mode1, mode2, max].iter().all(|x| x.is_finite()) {
            return Err(DistError::NonFinite);
        }
        if !(min <= mode1 && mode1 <= mode2 && mode2 <= max && min < max) {
            return Err(DistError::InvalidTrapezoid);
        }
        let height = T::lit(2.0) / (max + mode2 - mode1 - min);
        Ok(Self {
            min,
            mode1,
            mode2,
            max,
            height,
        })
    }

    fn cdf_at_mode1(&self) -> T {
        self.height * (self.mode1 - self.min) / T::lit(2.0)
    }

    fn cdf_at_mode2(&self) -> T {
        self.cdf_at_mode1() + self.height * (self.mode2 - self.mode1)
    }

    pub fn cdf(&self, x: T) -> T {
        let two = T::lit(2.0);
        if x <= self.min {
            T::zero()
        } else if x < self.mode1 {
            self.height * (x - self.min).powi(2) / (two * (self.mode1 - self.min))
        } else if x <= self.mode2 {
            self.cdf_at_mode1() + self.height * (x - self.mode1)
        } else if x < self.max {
            T::one() - self.height * (self.max - x).powi(2) / (two * (self.max - self.mode2))
        } else {
            T::one()
        }
    }

    /// Inverse CDF of the piecewise-linear density.
    pub fn quantile(&self, u: T) -> T {
        let two = T::lit(2.0);
        let f1 = self.cdf_at_mode1();
        let f2 = self.cdf_at_mode2();
        let x = if u < f1 {
            self.min + (two * u * (self.mode1 - self.min) / self.height).sqrt()
        } else if u <= f2 {
            self.mode1 + (u - f1) / self.height
        } else {
            self.max - (two * (T::one() - u).max(T::zero()) * (self.max - self.mode2) / self.height).sqrt()
        };
        x.max(self.min).min(self.max)
    }

    pub fn mean(&self) -> T {
        let (a, b, c, d) = (self.min, self.mode1, self.mode2, self.max);
        let three = T::lit(3.0);
        // E[X] = h/6 · [(d³ − c³)/(d − c) − (b³ − a³)/(b − a)], with limits for degenerate edges.
        let ratio = |hi: T, lo: T| {
            if hi == lo {
                three * hi * hi
            } else {
                (hi.powi(3) - lo.powi(3)) / (hi - lo)
            }
        };
        self.height / T::lit(6.0) * (ratio(d, c) - ratio(b, a))
    }

    pub fn sample(&self, rng: &mut SeededRng) -> T {
        self.quantile(T::lit(rng.uniform()))
    }
}

/// External-knowledge law for a simulation-model parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParameterDistribution<T> {
    PointMass { value: T },
    Trapezoid { min: T, mode1: T, mode2: T, max: T },
    Normal { mu: T, sigma: T },
    #[serde(alias = "mvn")]
    MultivariateNormal { mu: Vec<T>, cov: Vec<Vec<T>> },
}

impl<T: Scalar> ParameterDistribution<T> {
    pub fn dim(&self) -> usize {
        match self {
            ParameterDistribution::MultivariateNormal { mu, .. } => mu.len(),
            _ => 1,
        }
    }

    /// Validates the parameters and precomputes what sampling needs.
    pub fn sampler(&self) -> Result<Sampler<T>, DistError> {
        match self {
            ParameterDistribution::PointMass { value } => {
                if !value.is_finite() {
                    return Err(DistError::NonFinite);
                }
                Ok(Sampler::PointMass(*value))
            }
            ParameterDistribution::Trapezoid {
                min,
                mode1,
                mode2,
                max,
            } => Ok(Sampler::Trapezoid(Trapezoid::new(*min, *mode1, *mode2, *max)?)),
            ParameterDistribution::Normal { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(DistError::NonFinite);
                }
                if !(*sigma >= T::zero()) || !sigma.is_finite() {
                    return Err(DistError::InvalidSigma);
                }
                Ok(Sampler::Normal { mu: *mu, sigma: *sigma })
            }
            ParameterDistribution::MultivariateNormal { mu, cov } => {
                let cov = Matrix::from_rows(cov).map_err(|_| DistError::MvnShape {
                    mean: mu.len(),
                    rows: cov.len(),
                    cols: cov.first().map_or(0, Vec::len),
                })?;
                Ok(Sampler::Mvn(Mvn::new(mu.clone(), &cov)?))
            }
        }
    }

    /// One draw (length 1 for univariate laws).
    pub fn sample(&self, rng: &mut SeededRng) -> Result<Vec<T>, DistError> {
        let s = self.sampler()?;
        let mut out = Vec::with_capacity(s.dim());
        s.draw_into(rng, &mut out);
        Ok(out)
    }
}

/// Multivariate normal with a precomputed Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Mvn<T> {
    mean: Vec<T>,
    chol: Matrix<T>,
}

impl<T: Scalar> Mvn<T> {
    pub fn new(mean: Vec<T>, cov: &Matrix<T>) -> Result<Self, DistError> {
        if cov.rows() != mean.len() || cov.cols() != mean.len() {
            return Err(DistError::MvnShape {
                mean: mean.len(),
                rows: cov.rows(),
                cols: cov.cols(),
            });
        }
        if !cov.is_finite() || mean.iter().any(|m| !m.is_finite()) {
            return Err(DistError::NonFinite);
        }
        let tol = T::lit(1e-8) * cov.max_abs().max(T::min_positive_value());
        for i in 0..cov.rows() {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > tol {
                    return Err(DistError::Asymmetric);
                }
            }
        }
        let chol = cov.symmetrized().cholesky().map_err(DistError::NotPsd)?;
        Ok(Self { mean, chol })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    /// Appends `μ + L z` to `out`.
    pub fn draw_into(&self, rng: &mut SeededRng, out: &mut Vec<T>) {
        let d = self.mean.len();
        let z: Vec<T> = (0..d).map(|_| T::lit(rng.standard_normal())).collect();
        for i in 0..d {
            let mut v = self.mean[i];
            for (j, &zj) in z.iter().enumerate().take(i + 1) {
                v = v + self.chol[(i, j)] * zj;
            }
            out.push(v);
        }
    }
}

/// Validated, ready-to-draw form of a [`ParameterDistribution`].
#[derive(Debug, Clone, PartialEq)]
pub enum Sampler<T> {
    PointMass(T),
    Trapezoid(Trapezoid<T>),
    Normal { mu: T, sigma: T },
    Mvn(Mvn<T>),
}

impl<T: Scalar> Sampler<T> {
    pub fn dim(&self) -> usize {
        match self {
            Sampler::Mvn(m) => m.dim(),
            _ => 1,
        }
    }

    pub fn draw_into(&self, rng: &mut SeededRng, out: &mut Vec<T>) {
        match self {
            Sampler::PointMass(v) => out.push(*v),
            Sampler::Trapezoid(t) => out.push(t.sample(rng)),
            Sampler::Normal { mu, sigma } => out.push(*mu + *sigma * T::lit(rng.standard_normal())),
            Sampler::Mvn(m) => m.draw_into(rng, out),
        }
    }
}
