use serde::{Deserialize, Serialize};

use crate::geom::Point;

use super::{AgentId, PlanRequest, ResourceGraph, ResourceId};

/// One resource along a plan.
///
/// The agent starts moving into `resource` at `entry - approach`, arrives at
/// `entry` and leaves it when it arrives at the next resource (`exit`). The
/// resource is reserved over the whole `[entry - approach, exit]` span, which
/// keeps two agents from swapping across one edge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub resource: ResourceId,
    pub entry: f64,
    pub exit: f64,
    pub approach: f64,
}

impl Visit {
    pub fn occupancy(&self) -> (f64, f64) {
        (self.entry - self.approach, self.exit)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentPlan {
    pub agent: AgentId,
    pub visits: Vec<Visit>,
    /// Actual start position when the agent begins between two nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Point>,
    /// Table generation the plan was computed against.
    pub generation: u64,
    /// The request that produced the plan, kept for replanning.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<PlanRequest>,
}

impl AgentPlan {
    /// A plan that parks on `resource` from `from` on.
    pub fn parked(agent: AgentId, resource: ResourceId, from: f64, generation: u64) -> Self {
        Self {
            agent,
            visits: vec![Visit { resource, entry: from, exit: f64::INFINITY, approach: 0.0 }],
            origin: None,
            generation,
            request: None,
        }
    }

    /// Arrival time at the goal.
    pub fn cost(&self) -> f64 {
        self.visits.last().map_or(f64::INFINITY, |v| v.entry)
    }

    pub fn start(&self) -> ResourceId {
        self.visits[0].resource
    }

    pub fn goal(&self) -> ResourceId {
        self.visits.last().expect("plans are never empty").resource
    }

    pub fn resources(&self) -> impl Iterator<Item = ResourceId> + '_ {
        self.visits.iter().map(|v| v.resource)
    }

    /// Time the agent starts moving off visit `i`.
    pub fn departure(&self, i: usize) -> f64 {
        match self.visits.get(i + 1) {
            Some(next) => next.entry - next.approach,
            None => f64::INFINITY,
        }
    }

    /// Index of the visit the agent is on, or heading into, at time `t`.
    pub fn visit_index_at(&self, t: f64) -> usize {
        (0..self.visits.len()).find(|&i| t < self.departure(i)).unwrap_or(self.visits.len() - 1)
    }

    /// Interpolated position at time `t`.
    pub fn position_at(&self, t: f64, resources: &ResourceGraph) -> Point {
        let i = self.visit_index_at(t);
        let v = &self.visits[i];
        if i == 0 {
            return self.origin.unwrap_or_else(|| resources.pos(v.resource));
        }
        if t >= v.entry || v.approach <= 0.0 {
            return resources.pos(v.resource);
        }
        let from = if i == 1 {
            self.origin.unwrap_or_else(|| resources.pos(self.visits[0].resource))
        } else {
            resources.pos(self.visits[i - 1].resource)
        };
        let frac = ((t - (v.entry - v.approach)) / v.approach).clamp(0.0, 1.0);
        from.lerp(resources.pos(v.resource), frac)
    }

    pub fn is_finished(&self, t: f64) -> bool {
        t >= self.cost()
    }

    /// Cuts the plan at time `t`: the agent stops on the resource it is on,
    /// or on the one it is moving into, and stays there.
    pub fn freeze_at(&self, t: f64) -> AgentPlan {
        let i = self.visit_index_at(t);
        let mut visits = self.visits[..=i].to_vec();
        visits[i].exit = f64::INFINITY;
        AgentPlan { visits, ..self.clone() }
    }

    /// Replaces the last visit of `self` with `tail`, which must start on
    /// that resource. The join keeps the arrival of `self` and the departure
    /// of `tail`; the result carries the generation of `tail`.
    pub fn splice(&self, tail: AgentPlan) -> AgentPlan {
        let mut visits = self.visits.clone();
        let last = visits.pop().expect("plans are never empty");
        debug_assert_eq!(last.resource, tail.visits[0].resource);
        let generation = tail.generation;
        let mut rest = tail.visits.into_iter();
        let head = rest.next().expect("plans are never empty");
        visits.push(Visit { exit: head.exit, ..last });
        visits.extend(rest);
        AgentPlan { visits, generation, request: tail.request, ..self.clone() }
    }

    /// Occupancy intervals paired with their resource.
    pub fn occupancies(&self) -> impl Iterator<Item = (ResourceId, (f64, f64))> + '_ {
        self.visits.iter().map(|v| (v.resource, v.occupancy()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeId;

    fn plan() -> AgentPlan {
        AgentPlan {
            agent: AgentId::Robot(0),
            visits: vec![
                Visit { resource: NodeId(0), entry: 0.0, exit: 1.0, approach: 0.0 },
                Visit { resource: NodeId(1), entry: 1.0, exit: 3.0, approach: 1.0 },
                Visit { resource: NodeId(2), entry: 3.0, exit: f64::INFINITY, approach: 1.0 },
            ],
            origin: None,
            generation: 0,
            request: None,
        }
    }

    #[test]
    fn departures_and_cost() {
        let p = plan();
        assert_eq!(p.departure(0), 0.0);
        assert_eq!(p.departure(1), 2.0);
        assert_eq!(p.departure(2), f64::INFINITY);
        assert_eq!(p.cost(), 3.0);
        assert_eq!(p.visits[1].occupancy(), (0.0, 3.0));
    }

    #[test]
    fn freezing() {
        let p = plan();
        // Moving from node 1 toward node 2 at t = 2.5: stop on node 2.
        let f = p.freeze_at(2.5);
        assert_eq!(f.goal(), NodeId(2));
        // Waiting on node 1 at t = 1.5.
        let f = p.freeze_at(1.5);
        assert_eq!(f.goal(), NodeId(1));
        assert_eq!(f.visits[1].exit, f64::INFINITY);
        assert_eq!(f.freeze_at(1.5), f);
    }
}
