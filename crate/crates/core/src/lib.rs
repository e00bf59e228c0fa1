//! Transportability estimators for causal effects when positivity fails.
//!
//! The crate covers restriction estimators (target population or covariate
//! set), statistical/simulation model synthesis estimators, nonparametric
//! bounds, and the simulation study that benchmarks them. All numeric code
//! is generic over [`Scalar`]; the aliases below fix it to `f64`.

pub mod data;
pub mod datagen;
pub mod dists;
pub mod estimators;
pub mod glm;
pub mod linalg;
pub mod mest;
pub mod scalar;
pub mod simstudy;

pub use scalar::Scalar;

pub type Observation = data::Observation<f64>;
pub type StudyDataset = data::StudyDataset<f64>;
pub type DesignSpec = glm::DesignSpec<f64>;
pub type FittedLogistic = glm::FittedLogistic<f64>;
pub type Matrix = linalg::Matrix<f64>;
pub type MEstimate = mest::MEstimate<f64>;
pub type ParameterDistribution = dists::ParameterDistribution<f64>;
pub type EffectEstimate = estimators::EffectEstimate<f64>;
pub type SimulationModel = estimators::SimulationModel<f64>;
pub type SynthesisSpec = estimators::SynthesisSpec<f64>;
pub type Bounds = estimators::Bounds<f64>;
pub type ScenarioConfig = datagen::ScenarioConfig<f64>;
pub type SimulationConfig = simstudy::SimulationConfig<f64>;

pub use data::Population;
pub use dists::SeededRng;
pub use estimators::{McSettings, Method};
pub use simstudy::{Scenario, SimulationReport, SimulationResultRow};
