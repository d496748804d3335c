use std::fs;
use std::path::{Path, PathBuf};

use fleet_core::demo::demo_layout;
use fleet_core::graph::LayoutDoc;
use fleet_core::sim::SimConfig;
use fleet_core::WarehouseGraph;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Name that selects the bundled warehouse instead of a layout file.
pub const BUILTIN_LAYOUT: &str = "demo";

/// A scenario file: a layout reference plus simulator settings. Rosters,
/// job lists and deviation schedules live inside `config`; anything left
/// out takes the simulator default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    /// `"demo"` or a layout file path, relative to the scenario file.
    pub layout: String,
    #[serde(default)]
    pub config: SimConfig,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub graph: WarehouseGraph,
    pub config: SimConfig,
}

impl Scenario {
    /// The bundled warehouse with default settings.
    pub fn demo() -> Self {
        Self { name: "demo".into(), graph: demo_layout(), config: SimConfig::default() }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let file: ScenarioFile =
            serde_json::from_str(&text).map_err(|e| CliError::Scenario(format!("{}: {e}", path.display())))?;
        Self::from_file(file, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn from_file(file: ScenarioFile, base: &Path) -> Result<Self, CliError> {
        if file.version != SCHEMA_VERSION {
            return Err(CliError::Scenario(format!(
                "unsupported scenario version {} (expected {SCHEMA_VERSION})",
                file.version
            )));
        }
        let graph = if file.layout == BUILTIN_LAYOUT {
            demo_layout()
        } else {
            let path: PathBuf = base.join(&file.layout);
            let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let doc: LayoutDoc = serde_json::from_str(&text)
                .map_err(|e| CliError::Scenario(format!("{}: {e}", path.display())))?;
            WarehouseGraph::from_doc(&doc).map_err(|e| CliError::Scenario(format!("{}: {e}", path.display())))?
        };
        let scenario = Self { name: file.name, graph, config: file.config };
        scenario.check()?;
        Ok(scenario)
    }

    /// Every node the scenario mentions must exist in the layout.
    fn check(&self) -> Result<(), CliError> {
        self.config.validate()?;
        let cfg = &self.config;
        let mut nodes = Vec::new();
        nodes.extend(cfg.robot_roster.iter().filter_map(|r| r.start));
        for h in &cfg.human_roster {
            nodes.extend(h.start);
            nodes.extend(h.waypoints.iter().copied());
            nodes.extend(h.deviations.iter().map(|d| d.toward));
        }
        nodes.extend(cfg.jobs.iter().flatten().map(|j| j.rack));
        if let Some(bad) = nodes.into_iter().find(|&n| !self.graph.contains(n)) {
            return Err(CliError::Scenario(format!("scenario references unknown node {bad}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_other_versions() {
        let file = ScenarioFile { version: 2, name: "x".into(), layout: "demo".into(), config: SimConfig::default() };
        assert!(matches!(Scenario::from_file(file, Path::new(".")), Err(CliError::Scenario(_))));
    }

    #[test]
    fn rejects_dangling_nodes() {
        let text = r#"{"version":1,"layout":"demo","config":{"human_roster":[{"start":9999}]}}"#;
        let file: ScenarioFile = serde_json::from_str(text).unwrap();
        assert!(Scenario::from_file(file, Path::new(".")).is_err());
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let text = r#"{"version":1,"layout":"demo","config":{"humans":1}}"#;
        let file: ScenarioFile = serde_json::from_str(text).unwrap();
        let s = Scenario::from_file(file, Path::new(".")).unwrap();
        assert_eq!(s.config.humans, 1);
        assert_eq!(s.config.robots, SimConfig::default().robots);
    }
}
