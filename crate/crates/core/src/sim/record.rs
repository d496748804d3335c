use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::graph::NodeId;
use crate::hap::{HapKind, StageAttempt};
use crate::intention::HirReport;
use crate::timeline::AgentId;

use super::{InternalState, Mode, PlanningState};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub robot_deliveries: u64,
    pub human_deliveries: u64,
    pub total_deliveries: u64,
    pub encounters: u64,
    pub encounters_per_min: f64,
    pub sim_time: f64,
}

impl Metrics {
    pub(crate) fn refresh(&mut self, sim_time: f64) {
        self.sim_time = sim_time;
        self.total_deliveries = self.robot_deliveries + self.human_deliveries;
        self.encounters_per_min =
            if sim_time > 0.0 { self.encounters as f64 / (sim_time / 60.0) } else { 0.0 };
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Start,
    State,
    Assignment,
    RobotDelivery,
    HumanDelivery,
    Encounter,
    Halt,
    Resume,
    Deviation,
    HirReport,
    HapOutcome,
    PlanFailed,
    End,
}

/// One line of the replay log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub tick: u64,
    pub kind: EventKind,
    pub payload: serde_json::Value,
}

impl LogRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("log records serialize")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotView {
    pub id: u32,
    pub pos: Point,
    pub planning_state: PlanningState,
    pub internal_state: InternalState,
    pub carried_rack: Option<u32>,
    pub halted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanView {
    pub id: u32,
    pub pos: Point,
    pub external: bool,
    pub deviating: bool,
    pub paused: bool,
    pub assigned_path: Vec<NodeId>,
    pub goals: Vec<NodeId>,
    pub belief: Vec<f64>,
}

/// World state as streamed to clients and written to the replay log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub time: f64,
    pub mode: Mode,
    pub robots: Vec<RobotView>,
    pub humans: Vec<HumanView>,
    pub metrics: Metrics,
}

/// A fresh intention report for one worker.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HirEvent {
    pub worker: u32,
    pub report: HirReport,
}

/// What the human-aware planner did about one worker.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HapEvent {
    pub worker: u32,
    pub kind: HapKind,
    pub human_path: Option<Vec<NodeId>>,
    pub replanned: Vec<AgentId>,
    pub evaders: Vec<AgentId>,
    pub failed: Vec<AgentId>,
    pub trace: Vec<StageAttempt>,
}
