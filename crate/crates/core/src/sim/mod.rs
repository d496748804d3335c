//! Deterministic fixed-step warehouse simulation.

mod config;
mod record;
mod world;

use thiserror::Error;

use crate::graph::{NodeId, WarehouseGraph};

pub use config::{DeviationGenerator, DeviationSpec, HumanSpec, JobSpec, Mode, RobotSpec, SimConfig};
pub use record::{EventKind, HapEvent, HirEvent, HumanView, LogRecord, Metrics, RobotView, Snapshot};
pub use world::{Controller, HumanWorker, InternalState, Job, PlanningState, RackLocation, Robot, Steer, World};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown worker {0}")]
    UnknownWorker(u32),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("worker {0} is not externally controlled")]
    NotExternal(u32),
}

/// Runs a full scenario and returns its metrics and replay log.
pub fn run_scenario(g: WarehouseGraph, cfg: SimConfig) -> Result<(Metrics, Vec<LogRecord>), SimError> {
    let mut world = World::new(g, cfg)?;
    let m = world.run();
    Ok((m, world.drain_log()))
}
