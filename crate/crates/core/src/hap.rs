//! Human-aware planning: humans get precedence, robots make room.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{NodeId, WarehouseGraph};
use crate::intention::HirReport;
use crate::timeline::{
    plan_route, replan_cascade, validate_with_extra, AgentId, AgentPlan, ExtraKind, ExtraOccupation, Layer,
    PlanRequest, PlannerConfig, ReservationTable, ResourceGraph, SafetyRegionConfig,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HapError {
    #[error("candidate paths share no segment starting at {0}")]
    EmptySegment(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("invalid velocity band: need 0 < v_min <= v_max")]
    BadBand,
}

/// Walking speed range of a human.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityBand {
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for VelocityBand {
    fn default() -> Self {
        Self { v_min: 0.8, v_max: 1.6 }
    }
}

impl VelocityBand {
    pub fn new(v_min: f64, v_max: f64) -> Result<Self, HapError> {
        if v_min > 0.0 && v_min <= v_max && v_max.is_finite() {
            Ok(Self { v_min, v_max })
        } else {
            Err(HapError::BadBand)
        }
    }

    /// Window of a stretch of path that starts `from` meters and ends `to`
    /// meters along it: entered at the fastest, left at the slowest pace.
    pub fn window(&self, from: f64, to: f64, t0: f64) -> (f64, f64) {
        (t0 + from / self.v_max, t0 + to / self.v_min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanWindow {
    pub resource: NodeId,
    pub entry: f64,
    pub exit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanPlan {
    pub human: AgentId,
    pub path: Vec<NodeId>,
    pub windows: Vec<HumanWindow>,
}

impl HumanPlan {
    pub fn end_time(&self) -> f64 {
        self.windows.last().map_or(0.0, |w| w.exit)
    }

    /// The human's own windows plus the no-robot zone within `r2` of every
    /// path node during that node's window.
    pub fn precedence_occupations(&self, resources: &ResourceGraph, r2: f64) -> Vec<ExtraOccupation> {
        let mut out = Vec::new();
        for w in &self.windows {
            out.push(ExtraOccupation {
                agent: self.human,
                resource: w.resource,
                start: w.entry,
                end: w.exit,
                kind: ExtraKind::Body,
            });
            for r in resources.within(resources.pos(w.resource), r2) {
                out.push(ExtraOccupation {
                    agent: self.human,
                    resource: r,
                    start: w.entry,
                    end: w.exit,
                    kind: ExtraKind::Exclusion,
                });
            }
        }
        out
    }
}

/// Windows for a human walking `path` from `t0`.
///
/// The human counts as being on node i from the moment they leave node i-1
/// until they reach node i+1, so consecutive windows overlap.
pub fn human_windows(human: AgentId, path: &[NodeId], resources: &ResourceGraph, band: VelocityBand, t0: f64) -> HumanPlan {
    let mut along = Vec::with_capacity(path.len());
    let mut acc = 0.0;
    for (i, &n) in path.iter().enumerate() {
        if i > 0 {
            acc += resources.distance(path[i - 1], n);
        }
        along.push(acc);
    }
    let windows = path
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let from = if i == 0 { 0.0 } else { along[i - 1] };
            let to = along[(i + 1).min(path.len() - 1)];
            let (entry, exit) = band.window(from, to, t0);
            HumanWindow { resource: n, entry, exit }
        })
        .collect();
    HumanPlan { human, path: path.to_vec(), windows }
}

/// Maximal common prefix of all candidate paths, anchored at `current`.
pub fn longest_common_segment(paths: &[Vec<NodeId>], current: NodeId) -> Result<Vec<NodeId>, HapError> {
    let empty = HapError::EmptySegment(current);
    if paths.is_empty() || paths.iter().any(|p| p.first() != Some(&current)) {
        return Err(empty);
    }
    if paths.len() == 1 {
        return Ok(paths[0].clone());
    }
    let first = &paths[0];
    let len = (0..first.len())
        .take_while(|&i| paths.iter().all(|p| p.get(i) == Some(&first[i])))
        .count();
    if len < 2 {
        return Err(empty);
    }
    Ok(first[..len].to_vec())
}

/// Cuts every robot plan at `now`, leaving each robot on the resource it is
/// on or moving into. Returns the robots touched. Repeated calls at the same
/// time change nothing.
pub fn interrupt_robots(table: &mut ReservationTable, resources: &ResourceGraph, now: f64) -> Vec<AgentId> {
    // Parked robots have nowhere to go and keep their holds.
    let robots: Vec<AgentId> = table
        .plans()
        .filter(|p| p.agent.is_robot() && p.request.is_some())
        .map(|p| p.agent)
        .collect();
    for &r in &robots {
        let plan = table.plan(r).expect("listed agent").clone();
        let frozen = plan.freeze_at(now);
        if frozen != plan {
            table.commit(resources, frozen);
        }
    }
    robots
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HapKind {
    KeepPlan,
    NewHumanPlan,
    EvasiveManeuver,
    StopHuman,
    Failure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Stopped robots and their no-plan zones are obstacles.
    Static,
    /// Robots are ignored and asked to step aside.
    Evasion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageAttempt {
    pub stage: Stage,
    /// Whether the search was confined to the common segment.
    pub restricted: bool,
    pub success: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HapOutcome {
    pub kind: HapKind,
    pub human_plan: Option<HumanPlan>,
    /// Robot plans that were replanned and committed.
    pub robot_plans: Vec<AgentPlan>,
    /// Robots that had to step aside; they resume after `resume_at`.
    pub evaders: Vec<AgentId>,
    /// Robots left frozen because their replan failed.
    pub failed: Vec<AgentId>,
    pub resume_at: f64,
    pub trace: Vec<StageAttempt>,
}

impl HapOutcome {
    fn bare(kind: HapKind, trace: Vec<StageAttempt>) -> Self {
        Self {
            kind,
            human_plan: None,
            robot_plans: Vec::new(),
            evaders: Vec::new(),
            failed: Vec::new(),
            resume_at: 0.0,
            trace,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HapConfig {
    pub safety: SafetyRegionConfig,
    pub band: VelocityBand,
    pub planner: PlannerConfig,
    /// Side nodes tried per blocking robot.
    pub evasion_candidates: usize,
    /// How long a stopped human keeps robots out of reach.
    pub stop_hold: f64,
    /// Retry period for robots whose replan failed.
    pub retry_period: f64,
}

impl Default for HapConfig {
    fn default() -> Self {
        let safety = SafetyRegionConfig::default();
        Self {
            safety,
            band: VelocityBand::default(),
            planner: PlannerConfig { slowdown_factor: safety.slowdown_factor, ..PlannerConfig::default() },
            evasion_candidates: 8,
            stop_hold: 3.0,
            retry_period: 3.0,
        }
    }
}

/// Writes a human plan into the table: body on the path, no-plan zone within
/// r2 and slow-down zone within r3 of each path node during its window.
pub fn reserve_human(table: &mut ReservationTable, resources: &ResourceGraph, plan: &HumanPlan, safety: &SafetyRegionConfig) {
    table.release(plan.human);
    for w in &plan.windows {
        let p = resources.pos(w.resource);
        table.occupy(w.resource, Layer::Physical, w.entry, w.exit, plan.human);
        for r in resources.within(p, safety.r2) {
            table.occupy(r, Layer::Safety2, w.entry, w.exit, plan.human);
        }
        for r in resources.within(p, safety.r3) {
            table.occupy(r, Layer::Safety3, w.entry, w.exit, plan.human);
        }
    }
}

/// Resources each robot would still stand on or head into if it were
/// stopped at `now`.
fn stopped_nodes(table: &ReservationTable, now: f64) -> BTreeMap<AgentId, Vec<NodeId>> {
    table
        .plans()
        .filter(|p| p.agent.is_robot())
        .map(|p| {
            let frozen = p.freeze_at(now);
            let nodes = frozen.visits.iter().filter(|v| v.exit > now + 1e-9).map(|v| v.resource).collect();
            (p.agent, nodes)
        })
        .collect()
}

/// Robots whose remaining plan meets the human's body, no-plan or slowdown
/// zone while the human holds it.
fn affected_robots(
    table: &ReservationTable,
    resources: &ResourceGraph,
    hp: &HumanPlan,
    now: f64,
    safety: &SafetyRegionConfig,
) -> Vec<AgentId> {
    let mut zone: BTreeMap<NodeId, Vec<(f64, f64)>> = BTreeMap::new();
    for w in &hp.windows {
        for r in resources.within(resources.pos(w.resource), safety.r3) {
            zone.entry(r).or_default().push((w.entry, w.exit));
        }
    }
    table
        .plans()
        .filter(|p| p.agent.is_robot() && p.request.is_some())
        .filter(|p| {
            p.occupancies().any(|(r, (s, e))| {
                e > now && zone.get(&r).is_some_and(|ws| ws.iter().any(|&(a, b)| s < b && a < e))
            })
        })
        .map(|p| p.agent)
        .collect()
}

/// Replans the robots the new human plan gets in the way of. The others
/// keep plans that are already compatible with it.
fn replan_affected(
    table: &mut ReservationTable,
    resources: &ResourceGraph,
    hp: &HumanPlan,
    skip: &[AgentId],
    now: f64,
    cfg: &HapConfig,
    out: &mut HapOutcome,
) {
    let affected = affected_robots(table, resources, hp, now, &cfg.safety).into_iter().filter(|r| !skip.contains(r));
    let (plans, failed) = replan_cascade(table, resources, affected, now, &cfg.planner);
    out.robot_plans.extend(plans);
    out.failed.extend(failed);
}

/// Moves `robot` to the free node closest to its goal that lies outside the
/// human's no-plan zone, checking the result against the human's windows.
fn evade(
    table: &mut ReservationTable,
    resources: &ResourceGraph,
    robot: AgentId,
    zone: &BTreeSet<NodeId>,
    occupied: &BTreeSet<NodeId>,
    precedence: &[ExtraOccupation],
    now: f64,
    cfg: &HapConfig,
) -> Option<AgentPlan> {
    let current = table.plan(robot)?;
    let base = current.request.clone()?;
    let frozen = current.freeze_at(now);
    let last = *frozen.visits.last()?;
    let goal_pos = resources.pos(base.goal);
    let mut candidates: Vec<NodeId> = (0..resources.len() as u32)
        .map(NodeId)
        .filter(|n| !zone.contains(n) && !occupied.contains(n) && !base.forbidden.contains(n))
        .collect();
    candidates.sort_by(|a, b| {
        resources.pos(*a).dist(goal_pos).total_cmp(&resources.pos(*b).dist(goal_pos)).then(a.cmp(b))
    });
    // Plan against the table without this robot's old reservation.
    table.commit(resources, frozen.clone());
    for c in candidates.into_iter().take(cfg.evasion_candidates) {
        let mut req = base.clone();
        req.start = last.resource;
        req.goal = c;
        req.depart = last.entry.max(now);
        req.hold_from = Some(last.occupancy().0);
        let Ok(tail) = plan_route(table, resources, &req, &cfg.planner) else { continue };
        let mut plan = frozen.splice(tail);
        // The onward job is replanned once the human has passed.
        plan.request = Some(PlanRequest { goal: base.goal, ..req });
        if validate_with_extra(resources, std::slice::from_ref(&plan), precedence).is_empty() {
            table.commit(resources, plan.clone());
            return Some(plan);
        }
    }
    None
}

/// Two-stage human planning from `from` to `to`, optionally confined to
/// `allowed` nodes. Failure restores the table.
///
/// Every robot counts as stopped where it stands while the human's path is
/// chosen. Robots whose remaining plans stay clear of the human afterwards
/// carry on unchanged; the rest are replanned around the human.
fn plan_human_within(
    table: &mut ReservationTable,
    g: &WarehouseGraph,
    resources: &ResourceGraph,
    human: AgentId,
    from: NodeId,
    to: NodeId,
    now: f64,
    allowed: Option<&BTreeSet<NodeId>>,
    cfg: &HapConfig,
) -> HapOutcome {
    let snapshot = table.clone();
    let restricted = allowed.is_some();
    let in_scope = |n: NodeId| allowed.map_or(true, |a| a.contains(&n));
    table.release(human);
    let held = stopped_nodes(table, now);
    let near_robots: BTreeSet<NodeId> = held
        .values()
        .flatten()
        .flat_map(|&n| resources.within(resources.pos(n), cfg.safety.r2))
        .collect();

    let mut trace = Vec::new();
    let path = g.restricted_path(from, to, |n| in_scope(n) && !near_robots.contains(&n));
    trace.push(StageAttempt { stage: Stage::Static, restricted, success: path.is_some() });
    if let Some(path) = path {
        let hp = human_windows(human, &path, resources, cfg.band, now);
        reserve_human(table, resources, &hp, &cfg.safety);
        let mut out = HapOutcome::bare(HapKind::NewHumanPlan, trace);
        replan_affected(table, resources, &hp, &[], now, cfg, &mut out);
        out.human_plan = Some(hp);
        return out;
    }

    let Some(path) = g.restricted_path(from, to, in_scope) else {
        trace.push(StageAttempt { stage: Stage::Evasion, restricted, success: false });
        *table = snapshot;
        return HapOutcome::bare(HapKind::Failure, trace);
    };
    let hp = human_windows(human, &path, resources, cfg.band, now);
    reserve_human(table, resources, &hp, &cfg.safety);
    let zone: BTreeSet<NodeId> = path
        .iter()
        .flat_map(|&n| resources.within(resources.pos(n), cfg.safety.r2))
        .collect();
    let blocking: Vec<AgentId> = held
        .iter()
        .filter(|(_, nodes)| nodes.iter().any(|n| zone.contains(n)))
        .map(|(a, _)| *a)
        .collect();
    let precedence = hp.precedence_occupations(resources, cfg.safety.r2);
    let mut evaded = Vec::new();
    for &b in &blocking {
        let occupied: BTreeSet<NodeId> = table
            .plans()
            .filter(|p| p.agent != b && p.agent.is_robot())
            .map(|p| p.goal())
            .collect();
        match evade(table, resources, b, &zone, &occupied, &precedence, now, cfg) {
            Some(p) => evaded.push(p),
            None => {
                trace.push(StageAttempt { stage: Stage::Evasion, restricted, success: false });
                *table = snapshot;
                return HapOutcome::bare(HapKind::Failure, trace);
            }
        }
    }
    trace.push(StageAttempt { stage: Stage::Evasion, restricted, success: true });
    let kind = if blocking.is_empty() { HapKind::NewHumanPlan } else { HapKind::EvasiveManeuver };
    let mut out = HapOutcome::bare(kind, trace);
    replan_affected(table, resources, &hp, &blocking, now, cfg, &mut out);
    out.robot_plans.extend(evaded);
    out.evaders = blocking;
    out.resume_at = hp.end_time();
    out.human_plan = Some(hp);
    out
}

/// Plans a human from `from` to `to` with precedence over every robot.
#[allow(clippy::too_many_arguments)]
pub fn plan_human(
    table: &mut ReservationTable,
    g: &WarehouseGraph,
    resources: &ResourceGraph,
    human: AgentId,
    from: NodeId,
    to: NodeId,
    now: f64,
    cfg: &HapConfig,
) -> Result<HapOutcome, HapError> {
    for n in [from, to] {
        if !g.contains(n) {
            return Err(HapError::UnknownNode(n));
        }
    }
    Ok(plan_human_within(table, g, resources, human, from, to, now, None, cfg))
}

/// Keeps robots out of reach of a human told to stop on `node`.
pub fn stop_human(
    table: &mut ReservationTable,
    resources: &ResourceGraph,
    human: AgentId,
    node: NodeId,
    now: f64,
    cfg: &HapConfig,
) -> Vec<AgentId> {
    table.release(human);
    let until = now + cfg.stop_hold;
    let zone = resources.within(resources.pos(node), cfg.safety.r2);
    table.occupy(node, Layer::Physical, now, until, human);
    for &r in &zone {
        table.occupy(r, Layer::Safety2, now, until, human);
    }
    let affected: Vec<AgentId> = table
        .plans()
        .filter(|p| p.agent.is_robot())
        .filter(|p| p.occupancies().any(|(r, (s, e))| zone.contains(&r) && e > now && s < until))
        .map(|p| p.agent)
        .collect();
    replan_cascade(table, resources, affected, now, &cfg.planner).1
}

/// Reacts to an intention report for `human`, who is nearest to `current`.
#[allow(clippy::too_many_arguments)]
pub fn react_to_hir(
    table: &mut ReservationTable,
    g: &WarehouseGraph,
    resources: &ResourceGraph,
    human: AgentId,
    report: &HirReport,
    current: NodeId,
    now: f64,
    cfg: &HapConfig,
) -> HapOutcome {
    if !report.deviating || report.original_goal_plausible {
        return HapOutcome::bare(HapKind::KeepPlan, Vec::new());
    }
    let paths: Vec<Vec<NodeId>> = report.candidate_paths.iter().map(|c| c.path.clone()).collect();
    let segment = match longest_common_segment(&paths, current) {
        Ok(s) => s,
        Err(e) => {
            log::debug!("{human}: {e}");
            return HapOutcome::bare(HapKind::KeepPlan, Vec::new());
        }
    };
    let allowed: BTreeSet<NodeId> = segment.iter().copied().collect();
    let goal = *segment.last().expect("segments are non-empty");
    let out = plan_human_within(table, g, resources, human, segment[0], goal, now, Some(&allowed), cfg);
    if out.kind != HapKind::Failure {
        return out;
    }
    let failed = stop_human(table, resources, human, current, now, cfg);
    HapOutcome { failed, ..HapOutcome::bare(HapKind::StopHuman, out.trace) }
}
