//! Synthesis configuration files: JSON objects holding either independent
//! `b0` and `b1` distributions or one bivariate `joint` distribution, each a
//! record tagged by `kind`.

use std::path::Path;

use serde::Deserialize;
use transport_core::{ParameterDistribution, SimulationModel};

use crate::error::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    b0: Option<ParameterDistribution>,
    b1: Option<ParameterDistribution>,
    joint: Option<ParameterDistribution>,
}

pub fn parse_simulation_model(text: &str, source: &str) -> Result<SimulationModel, CliError> {
    let raw: RawConfig =
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("{source}: {e}")))?;
    match raw {
        RawConfig {
            b0: Some(b0),
            b1: Some(b1),
            joint: None,
        } => Ok(SimulationModel::Independent { b0, b1 }),
        RawConfig {
            b0: None,
            b1: None,
            joint: Some(j),
        } => Ok(SimulationModel::Joint(j)),
        _ => Err(CliError::Usage(format!(
            "{source}: expected either both `b0` and `b1`, or `joint` alone"
        ))),
    }
}

pub fn load_simulation_model(path: &Path) -> Result<SimulationModel, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    parse_simulation_model(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_and_joint() {
        let m = parse_simulation_model(
            r#"{"b0": {"kind": "normal", "mu": -0.016, "sigma": 0.1761},
                "b1": {"kind": "point_mass", "value": 0}}"#,
            "c",
        )
        .unwrap();
        assert!(matches!(m, SimulationModel::Independent { .. }));
        let m = parse_simulation_model(
            r#"{"joint": {"kind": "mvn", "mu": [0, 0], "cov": [[1, 0], [0, 1]]}}"#,
            "c",
        )
        .unwrap();
        assert!(matches!(m, SimulationModel::Joint(_)));
    }

    #[test]
    fn rejects_mixed_or_partial() {
        assert!(parse_simulation_model(r#"{"b0": {"kind": "point_mass", "value": 0}}"#, "c").is_err());
        assert!(parse_simulation_model(r#"{"b0": {"kind": "nope"}}"#, "c").is_err());
        assert!(parse_simulation_model("not json", "c").is_err());
    }
}
