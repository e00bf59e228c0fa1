//! Combined target-population and trial observations.

use thiserror::Error;

use crate::scalar::Scalar;

/// Which data source an observation comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Population {
    /// `R = 1`: the population the effect is transported to.
    Target,
    /// `R = 2`: the randomized trial.
    Trial,
}

impl Population {
    pub fn code(self) -> u8 {
        match self {
            Population::Target => 1,
            Population::Trial => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Population::Target),
            2 => Some(Population::Trial),
            _ => None,
        }
    }
}

/// One row `(R, A, Y, V, W)`. Treatment and outcome are absent for target rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<T> {
    pub population: Population,
    pub treatment: Option<bool>,
    pub outcome: Option<bool>,
    /// Age in years.
    pub age: T,
    /// `true` for women (`W = 1`).
    pub female: bool,
}

impl<T: Scalar> Observation<T> {
    pub fn target(age: T, female: bool) -> Self {
        Self {
            population: Population::Target,
            treatment: None,
            outcome: None,
            age,
            female,
        }
    }

    pub fn trial(treatment: bool, outcome: bool, age: T, female: bool) -> Self {
        Self {
            population: Population::Trial,
            treatment: Some(treatment),
            outcome: Some(outcome),
            age,
            female,
        }
    }

    pub fn is_target(&self) -> bool {
        self.population == Population::Target
    }

    pub fn is_trial(&self) -> bool {
        self.population == Population::Trial
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DataError {
    #[error("row {row}: trial observation is missing its treatment (A)")]
    TrialMissingTreatment { row: usize },
    #[error("row {row}: trial observation is missing its outcome (Y)")]
    TrialMissingOutcome { row: usize },
    #[error("row {row}: age (V) is not finite")]
    NonFiniteAge { row: usize },
    #[error("dataset has no target-population rows (R=1)")]
    NoTargetRows,
    #[error("dataset has no trial rows (R=2)")]
    NoTrialRows,
}

/// Validated combined dataset: at least one row per population, trial rows
/// carry treatment and outcome, every row carries a finite age.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyDataset<T> {
    rows: Vec<Observation<T>>,
}

impl<T: Scalar> StudyDataset<T> {
    pub fn new(rows: Vec<Observation<T>>) -> Result<Self, DataError> {
        for (i, r) in rows.iter().enumerate() {
            if !r.age.is_finite() {
                return Err(DataError::NonFiniteAge { row: i });
            }
            if r.is_trial() {
                if r.treatment.is_none() {
                    return Err(DataError::TrialMissingTreatment { row: i });
                }
                if r.outcome.is_none() {
                    return Err(DataError::TrialMissingOutcome { row: i });
                }
            }
        }
        if !rows.iter().any(Observation::is_target) {
            return Err(DataError::NoTargetRows);
        }
        if !rows.iter().any(Observation::is_trial) {
            return Err(DataError::NoTrialRows);
        }
        Ok(Self { rows })
    }

    /// Target rows followed by trial rows.
    pub fn from_parts(
        target: impl IntoIterator<Item = Observation<T>>,
        trial: impl IntoIterator<Item = Observation<T>>,
    ) -> Result<Self, DataError> {
        Self::new(target.into_iter().chain(trial).collect())
    }

    pub fn rows(&self) -> &[Observation<T>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn target(&self) -> impl Iterator<Item = &Observation<T>> + '_ {
        self.rows.iter().filter(|r| r.is_target())
    }

    pub fn trial(&self) -> impl Iterator<Item = &Observation<T>> + '_ {
        self.rows.iter().filter(|r| r.is_trial())
    }

    pub fn n_target(&self) -> usize {
        self.target().count()
    }

    pub fn n_trial(&self) -> usize {
        self.trial().count()
    }

    /// `Pr(W = 1 | R = 1)` in the sample.
    pub fn target_female_share(&self) -> T {
        let (n, f) = self
            .target()
            .fold((0usize, 0usize), |(n, f), r| (n + 1, f + usize::from(r.female)));
        T::from_count(f) / T::from_count(n)
    }

    pub fn into_rows(self) -> Vec<Observation<T>> {
        self.rows
    }
}
