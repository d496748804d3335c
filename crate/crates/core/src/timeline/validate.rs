use serde::{Deserialize, Serialize};

use super::{overlap, AgentId, AgentPlan, ResourceGraph, ResourceId, TIME_EPS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    PhysicalOverlap { resource: ResourceId, first: AgentId, second: AgentId, start: f64, end: f64 },
    ConflictOverlap {
        resource: ResourceId,
        other: ResourceId,
        first: AgentId,
        second: AgentId,
        start: f64,
        end: f64,
    },
    NonAdjacent { agent: AgentId, from: ResourceId, to: ResourceId },
    NonMonotone { agent: AgentId, index: usize },
    SafetyRegion { resource: ResourceId, robot: AgentId, human: AgentId, start: f64, end: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtraKind {
    /// The agent's body is on the resource.
    Body,
    /// No robot may be on the resource.
    Exclusion,
}

/// Occupancy that does not come from a robot plan, such as a human window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtraOccupation {
    pub agent: AgentId,
    pub resource: ResourceId,
    pub start: f64,
    pub end: f64,
    pub kind: ExtraKind,
}

pub fn validate(resources: &ResourceGraph, plans: &[AgentPlan]) -> Vec<Violation> {
    validate_with_extra(resources, plans, &[])
}

/// Checks plans for pairwise physical and conflict overlaps, adjacency,
/// time monotonicity, and intrusions into the given extra occupations.
pub fn validate_with_extra(
    resources: &ResourceGraph,
    plans: &[AgentPlan],
    extra: &[ExtraOccupation],
) -> Vec<Violation> {
    let mut out = Vec::new();
    for p in plans {
        for (i, w) in p.visits.windows(2).enumerate() {
            if !resources.are_adjacent(w[0].resource, w[1].resource) {
                out.push(Violation::NonAdjacent { agent: p.agent, from: w[0].resource, to: w[1].resource });
            }
            if w[1].entry + TIME_EPS < w[0].entry || w[0].exit + TIME_EPS < w[1].entry {
                out.push(Violation::NonMonotone { agent: p.agent, index: i + 1 });
            }
        }
        for (i, v) in p.visits.iter().enumerate() {
            if v.approach < -TIME_EPS || v.exit + TIME_EPS < v.entry {
                out.push(Violation::NonMonotone { agent: p.agent, index: i });
            }
        }
    }

    let occ: Vec<(AgentId, ResourceId, (f64, f64))> = plans
        .iter()
        .flat_map(|p| p.occupancies().map(move |(r, iv)| (p.agent, r, iv)))
        .collect();
    for (i, &(a, ra, ia)) in occ.iter().enumerate() {
        for &(b, rb, ib) in &occ[i + 1..] {
            if a == b {
                continue;
            }
            let Some((start, end)) = overlap(ia, ib) else { continue };
            if ra == rb {
                out.push(Violation::PhysicalOverlap { resource: ra, first: a, second: b, start, end });
            } else if resources.in_conflict(ra, rb) {
                out.push(Violation::ConflictOverlap { resource: ra, other: rb, first: a, second: b, start, end });
            }
        }
        for e in extra.iter().filter(|e| e.resource == ra && e.agent != a) {
            let Some((start, end)) = overlap(ia, (e.start, e.end)) else { continue };
            out.push(match e.kind {
                ExtraKind::Body => {
                    Violation::PhysicalOverlap { resource: ra, first: a, second: e.agent, start, end }
                }
                ExtraKind::Exclusion => {
                    Violation::SafetyRegion { resource: ra, robot: a, human: e.agent, start, end }
                }
            });
        }
    }
    out
}
