use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph::NodeId;
use crate::hap::HapConfig;
use crate::intention::HirConfig;

use super::SimError;

/// How the fleet reacts to a deviating human.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Only safety stops.
    #[default]
    Nhir,
    /// Constant-heading prediction fed to the human-aware planner.
    Shir,
    /// Goal-belief prediction fed to the human-aware planner.
    Phir,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Nhir, Mode::Shir, Mode::Phir];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Nhir => "nhir",
            Mode::Shir => "shir",
            Mode::Phir => "phir",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nhir" => Ok(Mode::Nhir),
            "shir" => Ok(Mode::Shir),
            "phir" => Ok(Mode::Phir),
            other => Err(SimError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationSpec {
    pub at: f64,
    pub toward: NodeId,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotSpec {
    pub start: Option<NodeId>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HumanSpec {
    pub start: Option<NodeId>,
    /// Assignment targets in order; drawn at random once exhausted.
    pub waypoints: Vec<NodeId>,
    /// Deviations on top of the generated ones.
    pub deviations: Vec<DeviationSpec>,
    /// Steered through the bridge instead of scripted.
    pub external: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    /// Storage node holding the rack.
    pub rack: NodeId,
    /// Index into the layout's station list.
    pub station: usize,
}

/// Random deviations of scripted humans.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviationGenerator {
    pub enabled: bool,
    /// Mean time between deviations per human, in seconds.
    pub mean_interval: f64,
    /// Share of deviations that head for an auxiliary goal.
    pub aux_probability: f64,
    /// Time spent at the deviation target before returning to work.
    pub distraction: f64,
}

impl Default for DeviationGenerator {
    fn default() -> Self {
        Self { enabled: true, mean_interval: 40.0, aux_probability: 0.8, distraction: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    pub dt: f64,
    pub duration: f64,
    pub mode: Mode,
    pub robots: usize,
    pub humans: usize,
    pub robot_roster: Vec<RobotSpec>,
    pub human_roster: Vec<HumanSpec>,
    /// Fixed job list; `None` draws jobs forever from the seeded generator.
    pub jobs: Option<Vec<JobSpec>>,
    pub robot_speed: f64,
    pub human_speed: f64,
    /// Time a rack spends at the station head.
    pub service_time: f64,
    /// Time a human spends at an assignment target.
    pub human_dwell: f64,
    /// Time a human loses to a safety stop.
    pub encounter_pause: f64,
    /// Time a halted robot waits after the human has left.
    pub halt_recovery: f64,
    pub retry_period: f64,
    pub queue_retry: f64,
    pub deviation: DeviationGenerator,
    pub shir_horizon: usize,
    /// Ticks between state snapshots in the replay log.
    pub snapshot_every: u64,
    /// Resource conflict radius; defaults to the safety-2 radius.
    pub conflict_radius: Option<f64>,
    pub hir: HirConfig,
    pub hap: HapConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dt: 0.1,
            duration: 300.0,
            mode: Mode::Nhir,
            robots: 10,
            humans: 3,
            robot_roster: Vec::new(),
            human_roster: Vec::new(),
            jobs: None,
            robot_speed: 1.0,
            human_speed: 1.3,
            service_time: 10.0,
            human_dwell: 5.0,
            encounter_pause: 2.0,
            halt_recovery: 1.0,
            retry_period: 3.0,
            queue_retry: 0.5,
            deviation: DeviationGenerator::default(),
            shir_horizon: 12,
            snapshot_every: 10,
            conflict_radius: None,
            hir: HirConfig::default(),
            hap: HapConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return bad("duration must be a non-negative number of seconds");
        }
        if !(self.robot_speed > 0.0 && self.human_speed > 0.0) {
            return bad("speeds must be positive");
        }
        if self.human_speed > self.hap.band.v_max + 1e-12 || self.human_speed < self.hap.band.v_min - 1e-12 {
            return bad("human speed must lie inside the velocity band");
        }
        if self.snapshot_every == 0 {
            return bad("snapshot_every must be at least 1");
        }
        if self.robot_roster.len() > self.robots || self.human_roster.len() > self.humans {
            return bad("roster longer than the agent count");
        }
        self.hap.safety.validate().map_err(|e| SimError::Config(e.to_string()))?;
        self.hir.deviation.validate().map_err(|e| SimError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn ticks(&self) -> u64 {
        (self.duration / self.dt + 1e-9).floor() as u64
    }
}
