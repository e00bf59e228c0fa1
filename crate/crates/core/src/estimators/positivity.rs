//! Deterministic positivity check at the level of observed strata.

use std::collections::BTreeMap;

use crate::data::StudyDataset;
use crate::scalar::Scalar;

/// Covariates the target population can be stratified on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StratumVar {
    V,
    W,
}

impl std::fmt::Display for StratumVar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StratumVar::V => "V",
            StratumVar::W => "W",
        })
    }
}

impl std::str::FromStr for StratumVar {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "V" => Ok(StratumVar::V),
            "W" => Ok(StratumVar::W),
            other => Err(format!("cannot stratify on `{other}` (expected V or W)")),
        }
    }
}

/// A target stratum with no trial observations.
#[derive(Debug, Clone, PartialEq)]
pub struct PositivityViolation<T> {
    pub stratum: Vec<(StratumVar, T)>,
    pub target_count: usize,
    pub trial_count: usize,
}

/// Total order on finite values through their sign-adjusted bit pattern.
fn key<T: Scalar>(x: T) -> i64 {
    let b = x.as_f64().to_bits() as i64;
    if b < 0 {
        b ^ i64::MAX
    } else {
        b
    }
}

/// Every stratum observed in the target population that has zero trial
/// observations, ordered by stratum value. An empty list means positivity
/// holds for the observed strata.
pub fn positivity_diagnostic<T: Scalar>(
    data: &StudyDataset<T>,
    strata: &[StratumVar],
) -> Vec<PositivityViolation<T>> {
    let value = |r: &crate::data::Observation<T>, v: StratumVar| match v {
        StratumVar::V => r.age,
        StratumVar::W => T::indicator(r.female),
    };
    let mut counts: BTreeMap<Vec<i64>, (Vec<T>, usize, usize)> = BTreeMap::new();
    for r in data.rows() {
        let vals: Vec<T> = strata.iter().map(|&v| value(r, v)).collect();
        let entry = counts
            .entry(vals.iter().map(|&x| key(x)).collect())
            .or_insert_with(|| (vals, 0, 0));
        if r.is_target() {
            entry.1 += 1;
        } else {
            entry.2 += 1;
        }
    }
    counts
        .into_values()
        .filter(|&(_, target, trial)| target > 0 && trial == 0)
        .map(|(vals, target_count, trial_count)| PositivityViolation {
            stratum: strata.iter().copied().zip(vals).collect(),
            target_count,
            trial_count,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;

    #[test]
    fn women_missing_from_trial_are_flagged() {
        let target = vec![
            Observation::<f64>::target(20.0, true),
            Observation::target(21.0, true),
            Observation::target(21.0, false),
        ];
        let trial = vec![
            Observation::trial(true, true, 20.0, false),
            Observation::trial(false, true, 21.0, false),
        ];
        let d = StudyDataset::from_parts(target, trial).unwrap();
        let v = positivity_diagnostic(&d, &[StratumVar::W]);
        assert_eq!(
            v,
            vec![PositivityViolation {
                stratum: vec![(StratumVar::W, 1.0)],
                target_count: 2,
                trial_count: 0
            }]
        );
        let v = positivity_diagnostic(&d, &[StratumVar::V, StratumVar::W]);
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|s| s.stratum[1] == (StratumVar::W, 1.0)));
        assert_eq!(v[0].stratum[0], (StratumVar::V, 20.0));
    }

    #[test]
    fn covered_strata_pass() {
        let target = vec![Observation::<f64>::target(20.0, false), Observation::target(22.0, true)];
        let trial = vec![
            Observation::trial(true, true, 20.0, false),
            Observation::trial(false, true, 22.0, true),
            Observation::trial(false, false, 30.0, true),
        ];
        let d = StudyDataset::from_parts(target, trial).unwrap();
        assert!(positivity_diagnostic(&d, &[StratumVar::V, StratumVar::W]).is_empty());
        assert!(positivity_diagnostic(&d, &[]).is_empty());
    }
}
