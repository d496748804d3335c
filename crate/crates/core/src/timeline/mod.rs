//! Time-window route planning over a resource graph.
//!
//! Every ground node is a resource with four occupancy layers. Robots plan
//! through the merged free windows of the physical, conflicting and
//! safety-2 layers; the safety-3 layer only slows them down.

mod influence;
mod plan;
mod planner;
mod resource;
mod table;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::NodeId;

pub use influence::{replan_influencing_set, InfluenceConfig, InfluenceOutcome};
pub use plan::{AgentPlan, Visit};
pub use planner::{plan_route, replan_cascade, replan_frozen, PlanRequest, PlannerConfig};
pub use resource::{build_resource_graph, ResourceGraph};
pub use table::ReservationTable;
pub use validate::{validate, validate_with_extra, ExtraKind, ExtraOccupation, Violation};

/// Resources map 1:1 onto ground nodes.
pub type ResourceId = NodeId;

/// Window comparisons tolerate this much slack, in seconds.
pub const TIME_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentId {
    Robot(u32),
    Human(u32),
}

impl AgentId {
    pub fn is_robot(self) -> bool {
        matches!(self, AgentId::Robot(_))
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentId::Robot(i) => write!(f, "robot{i}"),
            AgentId::Human(i) => write!(f, "human{i}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Physical,
    Conflicting,
    Safety2,
    Safety3,
}

impl Layer {
    pub const ALL: [Layer; 4] = [Layer::Physical, Layer::Conflicting, Layer::Safety2, Layer::Safety3];

    fn index(self) -> usize {
        self as usize
    }
}

/// A set of layers to merge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerMask(u8);

impl LayerMask {
    pub const NONE: LayerMask = LayerMask(0);
    pub const PHYSICAL: LayerMask = LayerMask(1);
    pub const CONFLICTING: LayerMask = LayerMask(2);
    pub const SAFETY2: LayerMask = LayerMask(4);
    pub const SAFETY3: LayerMask = LayerMask(8);
    /// What a robot must stay out of while planning.
    pub const ROBOT: LayerMask = LayerMask(1 | 2 | 4);

    pub fn of(layers: &[Layer]) -> Self {
        LayerMask(layers.iter().fold(0, |m, l| m | (1 << l.index())))
    }

    pub fn contains(self, layer: Layer) -> bool {
        self.0 & (1 << layer.index()) != 0
    }

    pub fn union(self, other: LayerMask) -> Self {
        LayerMask(self.0 | other.0)
    }
}

impl Default for LayerMask {
    fn default() -> Self {
        LayerMask::ROBOT
    }
}

/// An interval on a timeline; `owner == None` marks a free window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
    pub owner: Option<AgentId>,
}

impl TimeWindow {
    pub fn free(start: f64, end: f64) -> Self {
        Self { start, end, owner: None }
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= TIME_EPS
    }

    pub fn contains_interval(&self, start: f64, end: f64) -> bool {
        self.start <= start + TIME_EPS && end <= self.end + TIME_EPS
    }
}

pub(crate) fn overlap(a: (f64, f64), b: (f64, f64)) -> Option<(f64, f64)> {
    let s = a.0.max(b.0);
    let e = a.1.min(b.1);
    (e - s > TIME_EPS).then_some((s, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyRegionConfig {
    /// Robots stop inside this radius around a human.
    pub r1: f64,
    /// Robots are never planned inside this radius.
    pub r2: f64,
    /// Robots slow down inside this radius.
    pub r3: f64,
    pub slowdown_factor: f64,
}

impl Default for SafetyRegionConfig {
    fn default() -> Self {
        Self { r1: 0.5, r2: 1.0, r3: 2.0, slowdown_factor: 0.5 }
    }
}

impl SafetyRegionConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        let ordered = 0.0 < self.r1 && self.r1 <= self.r2 && self.r2 <= self.r3;
        let factor_ok = self.slowdown_factor > 0.0 && self.slowdown_factor <= 1.0;
        if ordered && factor_ok {
            Ok(())
        } else {
            Err(PlanError::BadConfig("safety radii must satisfy 0 < r1 <= r2 <= r3, factor in (0, 1]"))
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no window sequence brings {agent} to its goal")]
    NoPlan { agent: AgentId },
    #[error("start resource {resource} of {agent} is occupied at departure")]
    StartOccupied { agent: AgentId, resource: ResourceId },
    #[error("unknown resource {0}")]
    UnknownResource(ResourceId),
    #[error("plan for {agent} is stale: built at generation {plan}, table is at {table}")]
    Conflict { agent: AgentId, plan: u64, table: u64 },
    #[error("invalid planner configuration: {0}")]
    BadConfig(&'static str),
}
