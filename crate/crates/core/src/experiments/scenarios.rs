//! Built-in scenarios, shipped as TOML alongside the crate.

use super::{ExperimentError, ScenarioConfig};

macro_rules! scenario {
    ($name:literal) => {
        ($name, include_str!(concat!("../../scenarios/", $name, ".toml")))
    };
}

/// `(name, TOML source)` of every built-in scenario.
pub const BUILT_IN: &[(&str, &str)] = &[
    scenario!("fig2a"),
    scenario!("fig2b"),
    scenario!("fig3"),
    scenario!("fig4"),
    scenario!("fig5"),
    scenario!("fig6a"),
    scenario!("fig6b"),
    scenario!("fig7a"),
    scenario!("fig7b"),
    scenario!("fig8a"),
    scenario!("fig8b"),
    scenario!("fig9a"),
    scenario!("fig9b"),
    scenario!("fig10"),
    scenario!("fig11"),
];

pub fn built_in_scenarios() -> Vec<ScenarioConfig> {
    BUILT_IN
        .iter()
        .map(|(name, src)| ScenarioConfig::from_toml(src).unwrap_or_else(|e| panic!("built-in `{name}`: {e}")))
        .collect()
}

pub fn find_scenario(name: &str) -> Result<ScenarioConfig, ExperimentError> {
    BUILT_IN
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, src)| ScenarioConfig::from_toml(src))
        .unwrap_or_else(|| Err(ExperimentError::UnknownScenario(name.to_string())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_built_ins_parse_with_matching_names() {
        let all = built_in_scenarios();
        assert_eq!(all.len(), BUILT_IN.len());
        for (cfg, (name, _)) in all.iter().zip(BUILT_IN) {
            assert_eq!(&cfg.name, name);
            assert!(!cfg.description.is_empty());
        }
    }

    #[test]
    fn unknown_scenario() {
        assert!(matches!(find_scenario("nope"), Err(ExperimentError::UnknownScenario(_))));
    }
}
