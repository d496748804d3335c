use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{plan_route, AgentId, AgentPlan, PlanError, PlanRequest, PlannerConfig, ReservationTable, ResourceGraph};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InfluenceConfig {
    /// Largest replanned set, the new agent included.
    pub max_agents: usize,
}

impl Default for InfluenceConfig {
    fn default() -> Self {
        Self { max_agents: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluenceOutcome {
    /// Agents that were (re)planned, in commit order.
    pub replanned: Vec<AgentId>,
    /// Sum of plan costs over the whole table afterwards.
    pub total_cost: f64,
}

struct Candidate {
    table: ReservationTable,
    set_cost: f64,
    total: f64,
}

fn total_cost(t: &ReservationTable) -> f64 {
    t.plans().map(AgentPlan::cost).sum()
}

/// Plans `order` one after another on a copy of `table` with the agents in
/// `order` and `removed` taken out first.
fn evaluate(
    table: &ReservationTable,
    resources: &ResourceGraph,
    order: &[AgentId],
    removed: &BTreeSet<AgentId>,
    request: &PlanRequest,
    planner: &PlannerConfig,
) -> Option<Candidate> {
    let mut t = table.clone();
    let reqs: Vec<PlanRequest> = order
        .iter()
        .map(|&a| if a == request.agent { Some(request.clone()) } else { t.plan(a)?.request.clone() })
        .collect::<Option<_>>()?;
    for a in order.iter().chain(removed) {
        t.release(*a);
    }
    let mut set_cost = 0.0;
    for req in &reqs {
        let p = plan_route(&t, resources, req, planner).ok()?;
        set_cost += p.cost();
        t.commit(resources, p);
    }
    let total = total_cost(&t);
    Some(Candidate { table: t, set_cost, total })
}

/// Lexicographic successor permutation; false once the last one is reached.
fn next_permutation(v: &mut [AgentId]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else { return false };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("pivot has a successor");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Best ordering of `set` by the cost of the set itself; ties keep the
/// lexicographically first order.
fn best_order(
    table: &ReservationTable,
    resources: &ResourceGraph,
    set: &[AgentId],
    removed: &BTreeSet<AgentId>,
    request: &PlanRequest,
    planner: &PlannerConfig,
) -> Option<Candidate> {
    let mut order = set.to_vec();
    order.sort();
    let mut best: Option<Candidate> = None;
    loop {
        if let Some(c) = evaluate(table, resources, &order, removed, request, planner) {
            if best.as_ref().map_or(true, |b| c.set_cost < b.set_cost - 1e-9) {
                best = Some(c);
            }
        }
        if !next_permutation(&mut order) {
            return best;
        }
    }
}

/// Adds `request.agent` to the table, replanning the agents that delay it.
///
/// Starting from the new agent alone, the agent whose removal most reduces
/// the cost of the current set is added to the set, and all orderings of the
/// set are tried. This repeats until nobody outside the set matters or the
/// set reaches `max_agents`. Other agents are replanned from the request
/// stored with their plan. The lowest total cost seen is committed.
pub fn replan_influencing_set(
    table: &mut ReservationTable,
    resources: &ResourceGraph,
    request: &PlanRequest,
    planner: &PlannerConfig,
    cfg: &InfluenceConfig,
) -> Result<InfluenceOutcome, PlanError> {
    let ak = request.agent;
    let outside: Vec<AgentId> = table
        .plans()
        .filter(|p| p.agent != ak && p.request.is_some())
        .map(|p| p.agent)
        .collect();
    let none = BTreeSet::new();
    let mut set = vec![ak];
    let mut current = best_order(table, resources, &set, &none, request, planner);
    let mut best_set = set.clone();
    let mut best = current.as_ref().map(|c| (c.table.clone(), c.total));

    while set.len() < cfg.max_agents.max(1) {
        let reference = current.as_ref().map_or(f64::INFINITY, |c| c.set_cost);
        let mut pick: Option<(AgentId, f64)> = None;
        for &b in outside.iter().filter(|b| !set.contains(b)) {
            let removed: BTreeSet<AgentId> = [b].into();
            let without = best_order(table, resources, &set, &removed, request, planner)
                .map_or(f64::INFINITY, |c| c.set_cost);
            let gain = if reference.is_infinite() && without.is_infinite() { 0.0 } else { reference - without };
            if gain > 1e-9 && pick.map_or(true, |(_, g)| gain > g + 1e-12) {
                pick = Some((b, gain));
            }
        }
        let b = match pick {
            Some((b, _)) => b,
            None if current.is_none() => match blocker(table, resources, &set, &outside, request, planner) {
                Some(b) => b,
                None => break,
            },
            None => break,
        };
        set.push(b);
        current = best_order(table, resources, &set, &none, request, planner);
        if let Some(c) = &current {
            if best.as_ref().map_or(true, |(_, t)| c.total < t - 1e-9) {
                best = Some((c.table.clone(), c.total));
                best_set = set.clone();
            }
        }
    }

    let (t, total) = best.ok_or(PlanError::NoPlan { agent: ak })?;
    *table = t;
    let mut replanned = best_set;
    replanned.sort();
    Ok(InfluenceOutcome { replanned, total_cost: total })
}

/// When no single removal makes the set feasible, picks the lowest-id
/// outside agent whose plan touches the route the new agent would take on
/// an empty floor.
fn blocker(
    table: &ReservationTable,
    resources: &ResourceGraph,
    set: &[AgentId],
    outside: &[AgentId],
    request: &PlanRequest,
    planner: &PlannerConfig,
) -> Option<AgentId> {
    let free = plan_route(&ReservationTable::for_graph(resources), resources, request, planner).ok()?;
    let route: BTreeSet<_> = free.resources().collect();
    outside.iter().copied().filter(|b| !set.contains(b)).find(|&b| {
        table.plan(b).is_some_and(|p| {
            p.resources().any(|r| route.contains(&r) || resources.conflicts(r).iter().any(|c| route.contains(c)))
        })
    })
}
