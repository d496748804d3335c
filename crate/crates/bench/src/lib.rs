//! Shared fixtures for the criterion benches.

use fleet_core::demo::demo_layout;
use fleet_core::timeline::{
    build_resource_graph, plan_route, AgentId, PlanRequest, PlannerConfig, ReservationTable, ResourceGraph,
};
use fleet_core::{NodeId, WarehouseGraph};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The demo warehouse with `robots` routes already reserved, plus one
/// corner-to-corner request that has to thread through them.
pub struct BusyDemo {
    pub graph: WarehouseGraph,
    pub resources: ResourceGraph,
    pub table: ReservationTable,
    pub request: PlanRequest,
}

pub fn busy_demo(robots: u32, seed: u64) -> BusyDemo {
    let graph = demo_layout();
    let resources = build_resource_graph(&graph, 1.0);
    let mut table = ReservationTable::for_graph(&resources);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (from, to) = (NodeId(0), NodeId(resources.len() as u32 - 1));
    let mut nodes: Vec<u32> = (1..resources.len() as u32 - 1).collect();
    nodes.shuffle(&mut rng);
    let cfg = PlannerConfig::default();
    let mut pairs = nodes.chunks(2).map(|c| (NodeId(c[0]), NodeId(c[1])));
    let mut placed = 0;
    for (start, goal) in pairs.by_ref() {
        if placed == robots {
            break;
        }
        // Robots parked across the corridor ends would make the request
        // infeasible rather than hard.
        if [start, goal].iter().any(|&n| resources.in_conflict(n, from) || resources.in_conflict(n, to)) {
            continue;
        }
        let req = PlanRequest::new(AgentId::Robot(placed), start, goal, 0.0, 1.0);
        if let Ok(p) = plan_route(&table, &resources, &req, &cfg) {
            if table.reserve(&resources, p).is_ok() {
                placed += 1;
            }
        }
    }
    let request = PlanRequest::new(AgentId::Robot(robots), from, to, 0.0, 1.0);
    assert!(plan_route(&table, &resources, &request, &cfg).is_ok(), "bench request must be feasible");
    BusyDemo { graph, resources, table, request }
}
