mod common;

use fleet_core::hap::{plan_human, react_to_hir, HapConfig, HapKind, Stage};
use fleet_core::intention::{CandidatePath, HirReport};
use fleet_core::timeline::{
    build_resource_graph, plan_route, validate, validate_with_extra, AgentId, AgentPlan, Layer, PlanRequest,
    ReservationTable, ResourceGraph, Violation,
};
use fleet_core::{NodeId, WarehouseGraph};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SPACING: f64 = 2.0;
const HUMAN: AgentId = AgentId::Human(0);

/// Corridor 0..=8 along x; with `pocket`, node 9 hangs off node 5.
fn corridor(pocket: bool) -> WarehouseGraph {
    let mut pts: Vec<(f64, f64)> = (0..9).map(|i| (i as f64 * SPACING, 0.0)).collect();
    let mut edges: Vec<(u32, u32)> = (1..9).map(|i| (i - 1, i)).collect();
    if pocket {
        pts.push((5.0 * SPACING, SPACING));
        edges.push((5, 9));
    }
    common::graph(&pts, &edges)
}

fn setup(g: &WarehouseGraph) -> (ResourceGraph, ReservationTable, HapConfig) {
    let cfg = HapConfig::default();
    let rg = build_resource_graph(g, cfg.safety.r1);
    let t = ReservationTable::for_graph(&rg);
    (rg, t, cfg)
}

/// Sends robot `id` from `from` to `to`, leaving at `depart`.
fn drive(t: &mut ReservationTable, rg: &ResourceGraph, cfg: &HapConfig, id: u32, from: u32, to: u32, depart: f64) {
    let req = PlanRequest::new(AgentId::Robot(id), NodeId(from), NodeId(to), depart, 1.0);
    let p = plan_route(t, rg, &req, &cfg.planner).expect("robot route");
    t.reserve(rg, p).expect("fresh reservation");
}

fn robot_plans(t: &ReservationTable) -> Vec<AgentPlan> {
    t.plans().filter(|p| p.agent.is_robot()).cloned().collect()
}

fn assert_precedence(t: &ReservationTable, rg: &ResourceGraph, cfg: &HapConfig, out: &fleet_core::hap::HapOutcome) {
    let hp = out.human_plan.as_ref().expect("outcome carries a human plan");
    let extra = hp.precedence_occupations(rg, cfg.safety.r2);
    let v = validate_with_extra(rg, &robot_plans(t), &extra);
    assert!(v.is_empty(), "{v:?}");
}

#[test]
fn robot_in_corridor_steps_into_pocket() {
    let g = corridor(true);
    let (rg, mut t, cfg) = setup(&g);
    drive(&mut t, &rg, &cfg, 0, 6, 4, 0.0);
    let out = plan_human(&mut t, &g, &rg, HUMAN, NodeId(0), NodeId(8), 0.0, &cfg).unwrap();
    assert_eq!(out.kind, HapKind::EvasiveManeuver);
    assert_eq!(out.evaders, vec![AgentId::Robot(0)]);
    assert_eq!(out.human_plan.as_ref().unwrap().path, common::ids(&[0, 1, 2, 3, 4, 5, 6, 7, 8]));
    let trace: Vec<(Stage, bool)> = out.trace.iter().map(|s| (s.stage, s.success)).collect();
    assert_eq!(trace, vec![(Stage::Static, false), (Stage::Evasion, true)]);
    let plan = t.plan(AgentId::Robot(0)).unwrap();
    assert_eq!(plan.goal(), NodeId(9));
    assert!(out.resume_at >= out.human_plan.as_ref().unwrap().end_time());
    assert_precedence(&t, &rg, &cfg, &out);
}

#[test]
fn corridor_without_pocket_fails_and_restores_table() {
    let g = corridor(false);
    let (rg, mut t, cfg) = setup(&g);
    drive(&mut t, &rg, &cfg, 0, 6, 4, 0.0);
    let before = t.clone();
    let out = plan_human(&mut t, &g, &rg, HUMAN, NodeId(0), NodeId(8), 0.0, &cfg).unwrap();
    assert_eq!(out.kind, HapKind::Failure);
    assert!(out.human_plan.is_none());
    assert_eq!(out.trace.last().map(|s| (s.stage, s.success)), Some((Stage::Evasion, false)));
    assert!(t.same_contents(&before));
}

#[test]
fn clear_route_needs_no_evasion() {
    let g = common::grid(5, 5, SPACING);
    let (rg, mut t, cfg) = setup(&g);
    // Robot works along the far row, away from the human's column.
    drive(&mut t, &rg, &cfg, 0, 20, 24, 0.0);
    let before = t.plan(AgentId::Robot(0)).unwrap().clone();
    let out = plan_human(&mut t, &g, &rg, HUMAN, NodeId(0), NodeId(4), 0.0, &cfg).unwrap();
    assert_eq!(out.kind, HapKind::NewHumanPlan);
    assert!(out.evaders.is_empty());
    assert_eq!(t.plan(AgentId::Robot(0)).unwrap(), &before);
    assert_precedence(&t, &rg, &cfg, &out);
}

fn deviation(paths: &[&[u32]]) -> HirReport {
    HirReport {
        deviating: true,
        original_goal_plausible: false,
        candidate_paths: paths
            .iter()
            .map(|p| CandidatePath {
                goal: NodeId(*p.last().unwrap()),
                probability: 1.0 / paths.len() as f64,
                path: common::ids(p),
            })
            .collect(),
    }
}

/// A T junction: corridor 0..=8 with a branch 9, 10 leaving node 3 upward.
fn junction() -> WarehouseGraph {
    let mut pts: Vec<(f64, f64)> = (0..9).map(|i| (i as f64 * SPACING, 0.0)).collect();
    pts.push((3.0 * SPACING, SPACING));
    pts.push((3.0 * SPACING, 2.0 * SPACING));
    let mut edges: Vec<(u32, u32)> = (1..9).map(|i| (i - 1, i)).collect();
    edges.extend([(3, 9), (9, 10)]);
    common::graph(&pts, &edges)
}

#[test]
fn blocked_common_segment_stops_the_human() {
    let g = junction();
    let (rg, mut t, cfg) = setup(&g);
    // The robot sits inside the shared stretch 0..=3 with nowhere to go.
    drive(&mut t, &rg, &cfg, 0, 2, 1, 0.0);
    let report = deviation(&[&[0, 1, 2, 3, 4, 5], &[0, 1, 2, 3, 9, 10]]);
    let out = react_to_hir(&mut t, &g, &rg, HUMAN, &report, NodeId(0), 0.0, &cfg);
    assert_eq!(out.kind, HapKind::StopHuman);
    assert!(out.human_plan.is_none());
    assert!(out.trace.iter().all(|s| s.restricted));
    // The human's node is held for the stop period.
    let none = Default::default();
    assert!(t.intersects(NodeId(0), Layer::Physical, 0.0, cfg.stop_hold, &none));
    let v: Vec<Violation> = validate(&rg, &robot_plans(&t));
    assert!(v.is_empty(), "{v:?}");
}

#[test]
fn free_common_segment_is_planned_restricted() {
    let g = junction();
    let (rg, mut t, cfg) = setup(&g);
    drive(&mut t, &rg, &cfg, 0, 8, 7, 0.0);
    let report = deviation(&[&[0, 1, 2, 3, 4, 5], &[0, 1, 2, 3, 9, 10]]);
    let out = react_to_hir(&mut t, &g, &rg, HUMAN, &report, NodeId(0), 0.0, &cfg);
    assert_eq!(out.kind, HapKind::NewHumanPlan);
    assert_eq!(out.human_plan.as_ref().unwrap().path, common::ids(&[0, 1, 2, 3]));
    assert!(out.trace.iter().all(|s| s.restricted));
    assert_precedence(&t, &rg, &cfg, &out);
}

#[test]
fn no_shared_segment_or_plausible_goal_keeps_plan() {
    let g = junction();
    let (rg, mut t, cfg) = setup(&g);
    let split = deviation(&[&[3, 4], &[3, 9]]);
    let out = react_to_hir(&mut t, &g, &rg, HUMAN, &split, NodeId(3), 0.0, &cfg);
    assert_eq!(out.kind, HapKind::KeepPlan);
    let mut plausible = deviation(&[&[0, 1, 2]]);
    plausible.original_goal_plausible = true;
    let out = react_to_hir(&mut t, &g, &rg, HUMAN, &plausible, NodeId(0), 0.0, &cfg);
    assert_eq!(out.kind, HapKind::KeepPlan);
    assert!(t.plan(HUMAN).is_none());
}

/// Robots parked apart on a grid, some of them sent on random errands.
fn busy_grid(seed: u64) -> (WarehouseGraph, ResourceGraph, ReservationTable, HapConfig, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = common::grid(7, 7, SPACING);
    let (rg, mut t, cfg) = setup(&g);
    let mut nodes: Vec<u32> = (0..rg.len() as u32).collect();
    nodes.shuffle(&mut rng);
    let robots = rng.gen_range(1..=6);
    for (i, &n) in nodes.iter().take(robots).enumerate() {
        t.commit(&rg, AgentPlan::parked(AgentId::Robot(i as u32), NodeId(n), 0.0, t.generation()));
    }
    for i in 0..robots as u32 {
        let a = AgentId::Robot(i);
        let old = t.plan(a).unwrap().clone();
        let goal = NodeId(rng.gen_range(0..rg.len() as u32));
        let mut req = PlanRequest::new(a, old.goal(), goal, 0.0, 1.0);
        req.hold_from = Some(0.0);
        if let Ok(p) = plan_route(&t, &rg, &req, &cfg.planner) {
            t.reserve(&rg, old.splice(p)).unwrap();
        }
    }
    (g, rg, t, cfg, rng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn every_human_plan_keeps_robots_out_of_reach(seed in any::<u64>(), now in 0.0f64..6.0) {
        let (g, rg, mut t, cfg, mut rng) = busy_grid(seed);
        let from = NodeId(rng.gen_range(0..rg.len() as u32));
        let to = NodeId(rng.gen_range(0..rg.len() as u32));
        let before = t.clone();
        let out = plan_human(&mut t, &g, &rg, HUMAN, from, to, now, &cfg).unwrap();
        match out.kind {
            HapKind::NewHumanPlan | HapKind::EvasiveManeuver => {
                let hp = out.human_plan.as_ref().unwrap();
                prop_assert_eq!(hp.path.first(), Some(&from));
                prop_assert_eq!(hp.path.last(), Some(&to));
                let extra = hp.precedence_occupations(&rg, cfg.safety.r2);
                let v = validate_with_extra(&rg, &robot_plans(&t), &extra);
                prop_assert!(v.is_empty(), "{:?}", v);
            }
            HapKind::Failure => prop_assert!(t.same_contents(&before)),
            k => prop_assert!(false, "unexpected outcome {:?}", k),
        }
    }
}
