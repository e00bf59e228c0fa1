//! Median and percentile summary of Monte Carlo draws.

use crate::scalar::Scalar;

use super::EstimatorError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawSummary<T> {
    pub point: T,
    pub ci_lower: T,
    pub ci_upper: T,
}

/// Percentile of already-sorted values by linear interpolation between
/// order statistics at position `(n − 1)·q`.
pub fn percentile<T: Scalar>(sorted: &[T], q: T) -> T {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = T::from_count(n - 1) * q;
    let lo = h.floor();
    let i = lo.to_usize().unwrap_or(0).min(n - 1);
    if i + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo;
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}

/// Median with 2.5th and 97.5th percentiles.
pub fn summarize_draws<T: Scalar>(draws: &[T]) -> Result<DrawSummary<T>, EstimatorError> {
    if draws.is_empty() {
        return Err(EstimatorError::EmptyDraws);
    }
    if draws.iter().any(|d| !d.is_finite()) {
        return Err(EstimatorError::NonFiniteDraws);
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
    Ok(DrawSummary {
        point: percentile(&sorted, T::lit(0.5)),
        ci_lower: percentile(&sorted, T::lit(0.025)),
        ci_upper: percentile(&sorted, T::lit(0.975)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::SeededRng;

    #[test]
    fn three_draws() {
        let s = summarize_draws(&[3.0f64, 1.0, 2.0]).unwrap();
        assert_eq!(s.point, 2.0);
        assert!((s.ci_lower - 1.05).abs() < 1e-12);
        assert!((s.ci_upper - 2.95).abs() < 1e-12);
    }

    #[test]
    fn constant_draws() {
        let s = summarize_draws(&[0.25f64; 17]).unwrap();
        assert_eq!((s.point, s.ci_lower, s.ci_upper), (0.25, 0.25, 0.25));
        let one = summarize_draws(&[-1.5f64]).unwrap();
        assert_eq!((one.point, one.ci_lower, one.ci_upper), (-1.5, -1.5, -1.5));
    }

    #[test]
    fn standard_normal_quantiles() {
        let mut rng = SeededRng::new(2024, 0);
        let draws: Vec<f64> = (0..100_000).map(|_| rng.standard_normal()).collect();
        let s = summarize_draws(&draws).unwrap();
        assert!((s.ci_lower + 1.959964).abs() < 0.03, "{}", s.ci_lower);
        assert!((s.ci_upper - 1.959964).abs() < 0.03, "{}", s.ci_upper);
        assert!(s.point.abs() < 0.02);
    }

    #[test]
    fn empty_and_non_finite_fail() {
        assert_eq!(summarize_draws::<f64>(&[]).unwrap_err(), EstimatorError::EmptyDraws);
        assert_eq!(
            summarize_draws(&[1.0, f64::NAN]).unwrap_err(),
            EstimatorError::NonFiniteDraws
        );
    }

    #[test]
    fn even_count_median_interpolates() {
        let s = summarize_draws(&[4.0f64, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(s.point, 2.5);
    }
}
