//! Nonparametric bounds: `W = 0` target rows are predicted from the outcome
//! model fit on `W = 0` trial rows, while `W = 1` target rows, which the
//! trial does not cover, are assigned the most extreme potential outcomes.

use crate::data::StudyDataset;
use crate::glm::{DesignSpec, FitOptions};
use crate::scalar::Scalar;

use super::synthesis::GcompSynthesis;
use super::EstimatorError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> Bounds<T> {
    pub fn width(&self) -> T {
        self.upper - self.lower
    }

    pub fn contains(&self, x: T) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Lower bound sets `f₁ = 0, f₀ = 1` for every `W = 1` target row and the
/// upper bound sets `f₁ = 1, f₀ = 0`, so the width is `2·Pr(W=1 | R=1)`.
pub fn nonparametric_bounds<T: Scalar>(
    data: &StudyDataset<T>,
    outcome_design: &DesignSpec<T>,
) -> Result<Bounds<T>, EstimatorError> {
    let fit = GcompSynthesis::fit(data, outcome_design, &FitOptions::default())?;
    let lower = fit.risks_with_female_constants(T::zero(), T::one()).rd();
    let upper = fit.risks_with_female_constants(T::one(), T::zero()).rd();
    Ok(Bounds { lower, upper })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;
    use crate::estimators::{restrict_population_gcomp, synthesis_gcomp, McSettings, SimulationModel, SynthesisSpec};

    fn data(female: impl Fn(usize) -> bool) -> StudyDataset<f64> {
        let target: Vec<_> = (0..200).map(|i| Observation::target(18.0 + (i % 10) as f64, female(i))).collect();
        let trial: Vec<_> = (0..200)
            .map(|i| Observation::trial(i % 2 == 0, i % 3 == 0 || (i % 2 == 0 && i % 7 == 0), 18.0 + (i % 11) as f64, false))
            .collect();
        StudyDataset::from_parts(target, trial).unwrap()
    }

    #[test]
    fn width_is_twice_female_share() {
        let d = data(|i| i % 2 == 0);
        let b = nonparametric_bounds(&d, &"1,A,V".parse().unwrap()).unwrap();
        assert!((b.width() - 1.0).abs() < 1e-12, "{}", b.width());
        let d = data(|i| i % 4 == 0);
        let b = nonparametric_bounds(&d, &"1,A,V".parse().unwrap()).unwrap();
        assert!((b.width() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn all_male_target_collapses_to_restriction() {
        let d = data(|_| false);
        let design: DesignSpec<f64> = "1,A,V".parse().unwrap();
        let b = nonparametric_bounds(&d, &design).unwrap();
        let r = restrict_population_gcomp(&d, &design).unwrap();
        assert!((b.lower - b.upper).abs() < 1e-15);
        assert!((b.lower - r.rd).abs() < 1e-7, "{} vs {}", b.lower, r.rd);
    }

    #[test]
    fn synthesis_lies_inside() {
        let d = data(|i| i % 3 == 0);
        let design: DesignSpec<f64> = "1,A,V".parse().unwrap();
        let b = nonparametric_bounds(&d, &design).unwrap();
        let spec = SynthesisSpec {
            simulation: SimulationModel::uncertain_null(),
            mc: McSettings::new(500, 1),
            statistical_design: design,
        };
        assert!(b.contains(synthesis_gcomp(&d, &spec).unwrap().rd));
    }
}
