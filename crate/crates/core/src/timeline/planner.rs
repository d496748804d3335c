use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{
    AgentId, AgentPlan, Layer, LayerMask, PlanError, ReservationTable, ResourceGraph, ResourceId,
    TimeWindow, Visit, TIME_EPS,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub agent: AgentId,
    pub start: ResourceId,
    pub goal: ResourceId,
    /// Earliest time the agent may leave `start`.
    pub depart: f64,
    /// Nominal speed in m/s.
    pub speed: f64,
    /// Time the agent started occupying `start`; defaults to `depart`.
    #[serde(default)]
    pub hold_from: Option<f64>,
    #[serde(default)]
    pub forbidden: BTreeSet<ResourceId>,
    /// Agents whose occupations are treated as free space.
    #[serde(default)]
    pub ignore: BTreeSet<AgentId>,
    #[serde(default)]
    pub layers: LayerMask,
}

impl PlanRequest {
    pub fn new(agent: AgentId, start: ResourceId, goal: ResourceId, depart: f64, speed: f64) -> Self {
        Self {
            agent,
            start,
            goal,
            depart,
            speed,
            hold_from: None,
            forbidden: BTreeSet::new(),
            ignore: BTreeSet::new(),
            layers: LayerMask::ROBOT,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Speed multiplier while crossing a slow-down region.
    pub slowdown_factor: f64,
    pub max_expansions: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { slowdown_factor: 0.5, max_expansions: 200_000 }
    }
}

struct SearchNode {
    resource: ResourceId,
    window: TimeWindow,
    arrival: f64,
    approach: f64,
    parent: Option<usize>,
}

#[derive(PartialEq)]
struct Frontier {
    f: f64,
    g: f64,
    resource: ResourceId,
    window: usize,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (f, g, resource, window).
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.g.total_cmp(&self.g))
            .then_with(|| other.resource.cmp(&self.resource))
            .then_with(|| other.window.cmp(&self.window))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Earliest-arrival route through the free windows of the requested layers.
///
/// Search states are (resource, free window) pairs. Waiting is allowed
/// inside a window; moving along an edge requires the agent to still be
/// inside its current window when it reaches the next resource. Edges into a
/// resource whose safety-3 layer is busy at that time take
/// `1 / slowdown_factor` times longer.
pub fn plan_route(
    table: &ReservationTable,
    resources: &ResourceGraph,
    req: &PlanRequest,
    cfg: &PlannerConfig,
) -> Result<AgentPlan, PlanError> {
    for r in [req.start, req.goal] {
        if !resources.contains(r) {
            return Err(PlanError::UnknownResource(r));
        }
    }
    if !(req.speed > 0.0) || !(cfg.slowdown_factor > 0.0 && cfg.slowdown_factor <= 1.0) {
        return Err(PlanError::BadConfig("speed and slowdown factor must be positive"));
    }
    let mut ignore = req.ignore.clone();
    ignore.insert(req.agent);
    let windows_of = |r: ResourceId| table.free_windows(r, req.layers, &ignore);

    let hold_from = req.hold_from.unwrap_or(req.depart);
    let start_windows = windows_of(req.start);
    let Some((w0, &start_window)) = start_windows
        .iter()
        .enumerate()
        .find(|(_, w)| w.start <= hold_from + TIME_EPS && w.end > req.depart + TIME_EPS)
    else {
        return Err(PlanError::StartOccupied { agent: req.agent, resource: req.start });
    };

    // Plans end parked on the goal, so it needs an unbounded free window.
    let goal_windows = windows_of(req.goal);
    if goal_windows.last().map_or(true, |w| w.end.is_finite()) {
        return Err(PlanError::NoPlan { agent: req.agent });
    }

    let goal_pos = resources.pos(req.goal);
    let h = |r: ResourceId| resources.pos(r).dist(goal_pos) / req.speed;

    let mut nodes = vec![SearchNode {
        resource: req.start,
        window: start_window,
        arrival: req.depart,
        approach: req.depart - hold_from,
        parent: None,
    }];
    let mut best: Vec<Vec<f64>> = vec![Vec::new(); resources.len()];
    let mut cache: Vec<Option<Vec<TimeWindow>>> = vec![None; resources.len()];
    cache[req.start.index()] = Some(start_windows);
    let record = |best: &mut Vec<Vec<f64>>, r: ResourceId, w: usize, t: f64| -> bool {
        let row = &mut best[r.index()];
        if row.len() <= w {
            row.resize(w + 1, f64::INFINITY);
        }
        if t < row[w] - TIME_EPS {
            row[w] = t;
            true
        } else {
            false
        }
    };
    record(&mut best, req.start, w0, req.depart);
    let mut heap = BinaryHeap::new();
    heap.push(Frontier { f: req.depart + h(req.start), g: req.depart, resource: req.start, window: w0, node: 0 });

    let mut expansions = 0;
    while let Some(Frontier { g, resource, window: wi, node, .. }) = heap.pop() {
        if g > best[resource.index()][wi] + TIME_EPS {
            continue;
        }
        let here = nodes[node].window;
        if resource == req.goal && here.end == f64::INFINITY {
            return Ok(build_plan(table, req, &nodes, node));
        }
        expansions += 1;
        if expansions > cfg.max_expansions {
            break;
        }
        for &(next, len) in resources.neighbors(resource) {
            if req.forbidden.contains(&next) {
                continue;
            }
            let base = len / req.speed;
            let windows = cache[next.index()].get_or_insert_with(|| windows_of(next)).clone();
            for (nwi, w) in windows.iter().enumerate() {
                if w.start >= here.end {
                    break;
                }
                let depart = g.max(w.start);
                let slowed = table.intersects(next, Layer::Safety3, depart, depart + base, &ignore);
                let tau = if slowed { base / cfg.slowdown_factor } else { base };
                let arrival = depart + tau;
                if arrival > here.end + TIME_EPS {
                    break;
                }
                if arrival >= w.end - TIME_EPS {
                    continue;
                }
                if record(&mut best, next, nwi, arrival) {
                    nodes.push(SearchNode {
                        resource: next,
                        window: *w,
                        arrival,
                        approach: tau,
                        parent: Some(node),
                    });
                    heap.push(Frontier {
                        f: arrival + h(next),
                        g: arrival,
                        resource: next,
                        window: nwi,
                        node: nodes.len() - 1,
                    });
                }
            }
        }
    }
    Err(PlanError::NoPlan { agent: req.agent })
}

/// Replans `agent` from wherever it will stand after `now`, keeping the
/// part of its current plan it can no longer abandon. On failure the agent
/// is left frozen on that resource. Parked agents without a request are
/// left untouched.
pub fn replan_frozen(
    table: &mut ReservationTable,
    resources: &ResourceGraph,
    agent: AgentId,
    now: f64,
    cfg: &PlannerConfig,
) -> Result<AgentPlan, PlanError> {
    let plan = table.plan(agent).cloned().ok_or(PlanError::NoPlan { agent })?;
    let frozen = plan.freeze_at(now);
    let Some(mut req) = plan.request.clone() else {
        return Err(PlanError::NoPlan { agent });
    };
    let last = *frozen.visits.last().expect("plans are never empty");
    req.start = last.resource;
    req.depart = last.entry.max(now);
    req.hold_from = Some(last.occupancy().0);
    match plan_route(table, resources, &req, cfg) {
        Ok(tail) => {
            let p = frozen.splice(tail);
            table.commit(resources, p.clone());
            Ok(p)
        }
        Err(e) => {
            table.commit(resources, frozen);
            Err(e)
        }
    }
}

/// Replans `agents` from where they stand at `now`, in order. A robot that
/// cannot be replanned stays frozen, which may strand others that planned
/// to pass through its resource later; those are replanned in turn.
/// Returns the new plans and the agents left frozen.
pub fn replan_cascade(
    table: &mut ReservationTable,
    resources: &ResourceGraph,
    agents: impl IntoIterator<Item = AgentId>,
    now: f64,
    cfg: &PlannerConfig,
) -> (Vec<AgentPlan>, Vec<AgentId>) {
    let mut queue: VecDeque<AgentId> = VecDeque::new();
    for a in agents {
        if !queue.contains(&a) {
            queue.push_back(a);
        }
    }
    let mut replanned: BTreeMap<AgentId, AgentPlan> = BTreeMap::new();
    let mut failed: BTreeSet<AgentId> = BTreeSet::new();
    let mut budget = 8 * (table.plans().count() + queue.len() + 1);
    while let Some(a) = queue.pop_front() {
        if budget == 0 {
            break;
        }
        budget -= 1;
        if table.plan(a).is_none_or(|p| p.request.is_none()) {
            continue;
        }
        match replan_frozen(table, resources, a, now, cfg) {
            Ok(p) => {
                replanned.insert(a, p);
            }
            Err(_) => {
                replanned.remove(&a);
                failed.insert(a);
                for b in table.conflicting_agents(a) {
                    if b.is_robot() && !failed.contains(&b) && !queue.contains(&b) {
                        queue.push_back(b);
                    }
                }
            }
        }
    }
    (replanned.into_values().collect(), failed.into_iter().collect())
}

fn build_plan(table: &ReservationTable, req: &PlanRequest, nodes: &[SearchNode], last: usize) -> AgentPlan {
    let mut chain = vec![last];
    while let Some(p) = nodes[*chain.last().expect("non-empty")].parent {
        chain.push(p);
    }
    chain.reverse();
    let visits = chain
        .iter()
        .enumerate()
        .map(|(i, &n)| Visit {
            resource: nodes[n].resource,
            entry: nodes[n].arrival,
            exit: chain.get(i + 1).map_or(f64::INFINITY, |&m| nodes[m].arrival),
            approach: nodes[n].approach,
        })
        .collect();
    AgentPlan {
        agent: req.agent,
        visits,
        origin: None,
        generation: table.generation(),
        request: Some(req.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeDoc, LayoutDoc, NodeDoc, NodeId, NodeKind, WarehouseGraph};
    use crate::timeline::build_resource_graph;

    fn line(n: u32) -> ResourceGraph {
        let g = WarehouseGraph::from_doc(&LayoutDoc {
            nodes: (0..n).map(|i| NodeDoc { id: NodeId(i), x: i as f64, y: 0.0, kind: NodeKind::Road }).collect(),
            edges: (1..n).map(|i| EdgeDoc { a: NodeId(i - 1), b: NodeId(i) }).collect(),
            stations: vec![],
        })
        .unwrap();
        build_resource_graph(&g, 0.0)
    }

    fn cross() -> ResourceGraph {
        let pts = [(0.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (1.0, 0.0), (0.0, -1.0)];
        let g = WarehouseGraph::from_doc(&LayoutDoc {
            nodes: pts
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| NodeDoc { id: NodeId(i as u32), x, y, kind: NodeKind::Road })
                .collect(),
            edges: (1..5).map(|i| EdgeDoc { a: NodeId(0), b: NodeId(i) }).collect(),
            stations: vec![],
        })
        .unwrap();
        build_resource_graph(&g, 0.0)
    }

    #[test]
    fn empty_table_gives_shortest_time() {
        let rg = line(4);
        let t = ReservationTable::for_graph(&rg);
        let req = PlanRequest::new(AgentId::Robot(0), NodeId(0), NodeId(3), 0.0, 1.0);
        let p = plan_route(&t, &rg, &req, &PlannerConfig::default()).unwrap();
        assert_eq!(p.resources().collect::<Vec<_>>(), vec![NodeId(0), NodeId(1), NodeId(2), NodeId(3)]);
        assert!((p.cost() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn waits_for_crossing_agent() {
        // A goes west to east through C; B wants north to south at the same time.
        let rg = cross();
        let mut t = ReservationTable::for_graph(&rg);
        let cfg = PlannerConfig::default();
        let a = PlanRequest::new(AgentId::Robot(0), NodeId(1), NodeId(3), 0.0, 1.0);
        let pa = plan_route(&t, &rg, &a, &cfg).unwrap();
        t.reserve(&rg, pa.clone()).unwrap();
        let b = PlanRequest::new(AgentId::Robot(1), NodeId(2), NodeId(4), 0.0, 1.0);
        let pb = plan_route(&t, &rg, &b, &cfg).unwrap();
        // C is held by A over [0, 2]; B enters after that.
        let c_b = pb.visits.iter().find(|v| v.resource == NodeId(0)).unwrap();
        assert!(c_b.occupancy().0 >= 2.0 - 1e-9, "{pb:?}");
        assert!((pb.cost() - 4.0).abs() < 1e-9);
        assert!(crate::timeline::validate(&rg, &[pa, pb]).is_empty());
    }

    #[test]
    fn start_occupied() {
        let rg = line(3);
        let mut t = ReservationTable::for_graph(&rg);
        t.hold(&rg, AgentId::Robot(9), &[NodeId(0)], 0.0);
        let req = PlanRequest::new(AgentId::Robot(0), NodeId(0), NodeId(2), 1.0, 1.0);
        assert_eq!(
            plan_route(&t, &rg, &req, &PlannerConfig::default()).unwrap_err(),
            PlanError::StartOccupied { agent: AgentId::Robot(0), resource: NodeId(0) }
        );
    }

    #[test]
    fn blocked_forever_is_no_plan() {
        let rg = line(3);
        let mut t = ReservationTable::for_graph(&rg);
        t.hold(&rg, AgentId::Robot(9), &[NodeId(1)], 0.0);
        let req = PlanRequest::new(AgentId::Robot(0), NodeId(0), NodeId(2), 0.0, 1.0);
        assert_eq!(
            plan_route(&t, &rg, &req, &PlannerConfig::default()).unwrap_err(),
            PlanError::NoPlan { agent: AgentId::Robot(0) }
        );
    }

    #[test]
    fn slowdown_region_stretches_edge() {
        let rg = line(3);
        let mut t = ReservationTable::for_graph(&rg);
        t.occupy(NodeId(2), Layer::Safety3, 0.0, 100.0, AgentId::Human(0));
        let req = PlanRequest::new(AgentId::Robot(0), NodeId(0), NodeId(2), 0.0, 1.0);
        let p = plan_route(&t, &rg, &req, &PlannerConfig::default()).unwrap();
        assert!((p.cost() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn stale_plan_rejected() {
        let rg = line(3);
        let mut t = ReservationTable::for_graph(&rg);
        let cfg = PlannerConfig::default();
        let p0 = plan_route(&t, &rg, &PlanRequest::new(AgentId::Robot(0), NodeId(0), NodeId(1), 0.0, 1.0), &cfg)
            .unwrap();
        let p1 = plan_route(&t, &rg, &PlanRequest::new(AgentId::Robot(1), NodeId(2), NodeId(1), 0.0, 1.0), &cfg)
            .unwrap();
        t.reserve(&rg, p0).unwrap();
        assert!(matches!(t.reserve(&rg, p1), Err(PlanError::Conflict { .. })));
    }

    #[test]
    fn release_restores_table() {
        let rg = cross();
        let mut t = ReservationTable::for_graph(&rg);
        let cfg = PlannerConfig::default();
        let a = plan_route(&t, &rg, &PlanRequest::new(AgentId::Robot(0), NodeId(1), NodeId(3), 0.0, 1.0), &cfg)
            .unwrap();
        t.reserve(&rg, a).unwrap();
        let before = t.clone();
        let b = plan_route(&t, &rg, &PlanRequest::new(AgentId::Robot(1), NodeId(2), NodeId(4), 0.0, 1.0), &cfg)
            .unwrap();
        t.reserve(&rg, b).unwrap();
        t.release(AgentId::Robot(1));
        assert!(t.same_contents(&before));
    }
}
