use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::geom::Point;
use crate::graph::{all_pairs_distances, shortest_path, DistanceMatrix, NodeId, NodeKind, WarehouseGraph};
use crate::hap::{plan_human, react_to_hir, reserve_human, HapKind, HapOutcome, HumanPlan};
use crate::intention::{shir_predict, CandidatePath, HirReport, IntentionTracker};
use crate::timeline::{
    build_resource_graph, plan_route, replan_cascade, AgentId, PlanRequest, ReservationTable, ResourceGraph, Visit,
};

use super::record::{EventKind, HapEvent, HirEvent, HumanView, LogRecord, Metrics, RobotView, Snapshot};
use super::{DeviationSpec, JobSpec, Mode, SimConfig, SimError};

// Independent random streams, so that one concern drawing more numbers in
// one mode does not shift the others.
const STREAM_JOBS: u64 = 1;
const STREAM_HUMANS: u64 = 2;
const STREAM_DEVIATIONS: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanningState {
    ToRack,
    RackToQueueStart,
    InQueue,
    ReturnRack,
    ToCharger,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InternalState {
    Idle,
    Busy,
    Free,
    Interrupted,
    Failed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub id: u64,
    pub rack: u32,
    pub station: usize,
    pub return_node: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RackLocation {
    Storage(NodeId),
    Carried(u32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Halt {
    held: Vec<NodeId>,
    clear_since: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Robot {
    pub id: u32,
    pub pos: Point,
    pub speed: f64,
    pub planning_state: PlanningState,
    pub internal_state: InternalState,
    pub carried_rack: Option<u32>,
    pub job: Option<Job>,
    home: NodeId,
    target: NodeId,
    pending_arrival: bool,
    queue_slot: usize,
    service_until: Option<f64>,
    halt: Option<Halt>,
    wait_until: f64,
}

impl Robot {
    pub fn agent(&self) -> AgentId {
        AgentId::Robot(self.id)
    }

    pub fn is_halted(&self) -> bool {
        self.halt.is_some()
    }

    pub fn target(&self) -> NodeId {
        self.target
    }
}

/// Steering input for an externally controlled worker.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Steer {
    /// Heading to walk along; normalized by the server.
    #[serde(default)]
    pub direction: Option<Point>,
    /// Point to walk to; takes precedence over `direction`.
    #[serde(default)]
    pub target: Option<Point>,
    /// Requested speed in m/s; clamped to the band maximum.
    #[serde(default)]
    pub speed: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Controller {
    Scripted,
    External { steer: Option<Steer> },
    /// Stands still; used when a steering client goes away.
    Hold,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
enum Activity {
    Walking,
    Dwelling { until: f64 },
    Deviating { toward: NodeId },
    Distracted { until: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct HumanWorker {
    pub id: u32,
    pub pos: Point,
    pub controller: Controller,
    /// Accepts steering from the bridge.
    pub external: bool,
    pub assigned_path: Vec<NodeId>,
    pub tracker: IntentionTracker,
    activity: Activity,
    route: Vec<NodeId>,
    route_idx: usize,
    target: NodeId,
    waypoints: VecDeque<NodeId>,
    deviations: VecDeque<DeviationSpec>,
    paused_until: f64,
    last_reaction: Option<Vec<NodeId>>,
    /// Assigned route and progress when the current deviation began, plus
    /// the node the human left it at.
    left_at: Option<(Vec<NodeId>, usize, NodeId)>,
    /// Whether the system has noticed the current deviation.
    noticed: bool,
    /// The human's plan as last written into the reservation table.
    reservation: Option<HumanPlan>,
    rng: ChaCha8Rng,
}

impl HumanWorker {
    pub fn agent(&self) -> AgentId {
        AgentId::Human(self.id)
    }

    pub fn is_deviating(&self) -> bool {
        self.tracker.is_deviating()
    }

    pub fn pending_deviations(&self) -> impl Iterator<Item = &DeviationSpec> {
        self.deviations.iter()
    }
}

struct Station {
    /// Queue nodes from the entry to the head, head last.
    slots: Vec<NodeId>,
}

/// The whole simulated warehouse.
pub struct World {
    cfg: SimConfig,
    g: WarehouseGraph,
    f: DistanceMatrix,
    rg: ResourceGraph,
    table: ReservationTable,
    tick: u64,
    robots: Vec<Robot>,
    humans: Vec<HumanWorker>,
    racks: Vec<RackLocation>,
    rack_home: Vec<NodeId>,
    stations: Vec<Station>,
    storage: BTreeSet<NodeId>,
    aux_goals: Vec<NodeId>,
    human_targets: Vec<NodeId>,
    job_list: VecDeque<JobSpec>,
    generate_jobs: bool,
    next_job: u64,
    job_rng: ChaCha8Rng,
    encounter_pairs: BTreeSet<(u32, u32)>,
    metrics: Metrics,
    log: Vec<LogRecord>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

impl World {
    pub fn new(g: WarehouseGraph, cfg: SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        if g.stations().is_empty() {
            return Err(SimError::Config("layout has no picking stations".into()));
        }
        let f = all_pairs_distances(&g);
        let radius = cfg.conflict_radius.unwrap_or(cfg.hap.safety.r2);
        let rg = build_resource_graph(&g, radius);
        let table = ReservationTable::for_graph(&rg);
        let storage: BTreeSet<NodeId> = g.nodes_of_kind(NodeKind::Storage).into_iter().collect();
        let rack_home: Vec<NodeId> = storage.iter().copied().collect();
        let racks = rack_home.iter().map(|&n| RackLocation::Storage(n)).collect();
        let stations = g
            .stations()
            .iter()
            .map(|s| Station { slots: s.queue.iter().copied().chain([s.head]).collect() })
            .collect();
        let aux_goals = g.nodes_of_kind(NodeKind::GoalMarker);
        let human_targets: Vec<NodeId> = g
            .node_ids()
            .filter(|&n| g.kind(n) == NodeKind::Road && g.neighbors(n).any(|(m, _)| storage.contains(&m)))
            .collect();
        if human_targets.is_empty() {
            return Err(SimError::Config("layout has no road node next to storage".into()));
        }
        let chargers = g.nodes_of_kind(NodeKind::ChargingStation);
        let parking: Vec<NodeId> = if chargers.is_empty() { g.nodes_of_kind(NodeKind::Road) } else { chargers };
        if cfg.robots > parking.len() {
            return Err(SimError::Config(format!("{} robots but only {} charging spots", cfg.robots, parking.len())));
        }

        let mut world = World {
            f,
            rg,
            table,
            tick: 0,
            robots: Vec::new(),
            humans: Vec::new(),
            racks,
            rack_home,
            stations,
            storage,
            aux_goals,
            human_targets,
            job_list: cfg.jobs.clone().unwrap_or_default().into(),
            generate_jobs: cfg.jobs.is_none(),
            next_job: 0,
            job_rng: stream(cfg.seed, STREAM_JOBS),
            encounter_pairs: BTreeSet::new(),
            metrics: Metrics::default(),
            log: Vec::new(),
            g,
            cfg,
        };
        for n in world.cfg.jobs.iter().flatten().map(|j| j.rack) {
            if !world.storage.contains(&n) {
                return Err(SimError::UnknownNode(n));
            }
        }
        world.log(EventKind::Start, json!({ "config": world.cfg }));
        for i in 0..world.cfg.robots {
            let home = world.cfg.robot_roster.get(i).and_then(|r| r.start).unwrap_or(parking[i]);
            if !world.g.contains(home) {
                return Err(SimError::UnknownNode(home));
            }
            world.spawn_robot(i as u32, home);
        }
        for i in 0..world.cfg.humans {
            world.spawn_human(i as u32)?;
        }
        world.log_state();
        Ok(world)
    }

    fn spawn_robot(&mut self, id: u32, home: NodeId) {
        let agent = AgentId::Robot(id);
        let req = PlanRequest::new(agent, home, home, 0.0, self.cfg.robot_speed);
        let plan = plan_route(&self.table, &self.rg, &req, &self.cfg.hap.planner).expect("start node is free");
        self.table.commit(&self.rg, plan);
        self.robots.push(Robot {
            id,
            pos: self.g.pos(home),
            speed: self.cfg.robot_speed,
            planning_state: PlanningState::ToCharger,
            internal_state: InternalState::Idle,
            carried_rack: None,
            job: None,
            home,
            target: home,
            pending_arrival: false,
            queue_slot: 0,
            service_until: None,
            halt: None,
            wait_until: 0.0,
        });
    }

    fn spawn_human(&mut self, id: u32) -> Result<(), SimError> {
        let spec = self.cfg.human_roster.get(id as usize).cloned().unwrap_or_default();
        let mut rng = stream(self.cfg.seed, STREAM_HUMANS + 16 * (id as u64 + 1));
        let start = match spec.start {
            Some(n) if self.g.contains(n) => n,
            Some(n) => return Err(SimError::UnknownNode(n)),
            None => self.human_targets[rng.gen_range(0..self.human_targets.len())],
        };
        for n in spec.waypoints.iter().chain(spec.deviations.iter().map(|d| &d.toward)) {
            if !self.g.contains(*n) {
                return Err(SimError::UnknownNode(*n));
            }
        }
        let mut deviations: Vec<DeviationSpec> = spec.deviations.clone();
        if self.cfg.deviation.enabled && !spec.external {
            let mut drng = stream(self.cfg.seed, STREAM_DEVIATIONS + 16 * (id as u64 + 1));
            let mut t = 0.0;
            loop {
                let u: f64 = drng.gen_range(f64::EPSILON..1.0);
                t += -u.ln() * self.cfg.deviation.mean_interval;
                if t >= self.cfg.duration {
                    break;
                }
                let toward = if drng.gen_bool(self.cfg.deviation.aux_probability) && !self.aux_goals.is_empty() {
                    self.aux_goals[drng.gen_range(0..self.aux_goals.len())]
                } else {
                    NodeId(drng.gen_range(0..self.g.node_count() as u32))
                };
                deviations.push(DeviationSpec { at: t, toward });
            }
        }
        deviations.sort_by(|a, b| a.at.total_cmp(&b.at));
        let pos = self.g.pos(start);
        let tracker = IntentionTracker::new(vec![start], &self.aux_goals, pos, &self.cfg.hir)
            .map_err(|e| SimError::Config(e.to_string()))?;
        self.humans.push(HumanWorker {
            id,
            pos,
            external: spec.external,
            controller: if spec.external { Controller::External { steer: None } } else { Controller::Scripted },
            assigned_path: vec![start],
            tracker,
            activity: Activity::Walking,
            route: vec![start],
            route_idx: 0,
            target: start,
            waypoints: spec.waypoints.into_iter().collect(),
            deviations: deviations.into(),
            paused_until: 0.0,
            last_reaction: None,
            left_at: None,
            noticed: false,
            reservation: None,
            rng,
        });
        let h = self.humans.len() - 1;
        self.next_assignment(h);
        Ok(())
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn graph(&self) -> &WarehouseGraph {
        &self.g
    }

    pub fn resources(&self) -> &ResourceGraph {
        &self.rg
    }

    pub fn table(&self) -> &ReservationTable {
        &self.table
    }

    pub fn robots(&self) -> &[Robot] {
        &self.robots
    }

    pub fn humans(&self) -> &[HumanWorker] {
        &self.humans
    }

    pub fn racks(&self) -> &[RackLocation] {
        &self.racks
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.cfg.dt
    }

    pub fn mode(&self) -> Mode {
        self.cfg.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.cfg.mode = mode;
    }

    pub fn metrics(&self) -> Metrics {
        let mut m = self.metrics;
        m.refresh(self.time());
        m
    }

    pub fn log_records(&self) -> &[LogRecord] {
        &self.log
    }

    /// Hands over the records produced since the last call.
    pub fn drain_log(&mut self) -> Vec<LogRecord> {
        std::mem::take(&mut self.log)
    }

    fn log(&mut self, kind: EventKind, payload: serde_json::Value) {
        self.log.push(LogRecord { tick: self.tick, kind, payload });
    }

    /// Appends a state record for the current tick without advancing time.
    pub fn record_state(&mut self) {
        self.log_state();
    }

    fn log_state(&mut self) {
        let snap = serde_json::to_value(self.snapshot()).expect("snapshots serialize");
        self.log(EventKind::State, snap);
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            tick: self.tick,
            time: self.time(),
            mode: self.cfg.mode,
            robots: self
                .robots
                .iter()
                .map(|r| RobotView {
                    id: r.id,
                    pos: r.pos,
                    planning_state: r.planning_state,
                    internal_state: r.internal_state,
                    carried_rack: r.carried_rack,
                    halted: r.is_halted(),
                })
                .collect(),
            humans: self
                .humans
                .iter()
                .map(|h| HumanView {
                    id: h.id,
                    pos: h.pos,
                    external: h.external,
                    deviating: h.is_deviating(),
                    paused: h.paused_until > self.time(),
                    assigned_path: h.assigned_path.clone(),
                    goals: h.tracker.goals().goals(),
                    belief: h.tracker.hmm().belief().to_vec(),
                })
                .collect(),
            metrics: self.metrics(),
        }
    }

    // ---- external control -------------------------------------------------

    /// Queues a deviation for a scripted worker.
    pub fn inject_deviation(&mut self, worker: u32, at: f64, toward: NodeId) -> Result<(), SimError> {
        if !self.g.contains(toward) {
            return Err(SimError::UnknownNode(toward));
        }
        let h = self.humans.iter_mut().find(|h| h.id == worker).ok_or(SimError::UnknownWorker(worker))?;
        let idx = h.deviations.partition_point(|d| d.at <= at);
        h.deviations.insert(idx, DeviationSpec { at, toward });
        Ok(())
    }

    /// Sets the steering input of an external worker. Returns whether the
    /// requested speed had to be clamped.
    pub fn steer(&mut self, worker: u32, steer: Steer) -> Result<bool, SimError> {
        let v_max = self.cfg.hap.band.v_max;
        let h = self.humans.iter_mut().find(|h| h.id == worker).ok_or(SimError::UnknownWorker(worker))?;
        if !h.external {
            return Err(SimError::NotExternal(worker));
        }
        let clamped = steer.speed.is_some_and(|s| s > v_max);
        h.controller = Controller::External { steer: Some(steer) };
        Ok(clamped)
    }

    pub fn set_controller(&mut self, worker: u32, controller: Controller) -> Result<(), SimError> {
        let h = self.humans.iter_mut().find(|h| h.id == worker).ok_or(SimError::UnknownWorker(worker))?;
        h.controller = controller;
        Ok(())
    }

    // ---- main loop --------------------------------------------------------

    /// Advances the world by one tick of `cfg.dt`.
    pub fn step(&mut self) {
        self.tick += 1;
        let now = self.time();
        for h in 0..self.humans.len() {
            self.step_human(h, now);
        }
        for r in 0..self.robots.len() {
            self.step_robot(r, now);
        }
        self.safety_stops(now);
        for h in 0..self.humans.len() {
            self.intention(h, now);
        }
        if self.tick % 10 == 0 {
            for h in 0..self.humans.len() {
                self.trim_reservation(h, now);
            }
        }
        if self.tick % 50 == 0 {
            self.table.prune_before(now - 1.0);
        }
        if self.tick % self.cfg.snapshot_every == 0 {
            self.log_state();
        }
    }

    pub fn run(&mut self) -> Metrics {
        for _ in self.tick..self.cfg.ticks() {
            self.step();
        }
        let m = self.metrics();
        self.log(EventKind::End, json!({ "metrics": m }));
        m
    }

    // ---- humans -----------------------------------------------------------

    /// Gives back the windows of path nodes the human has already left
    /// behind. Only ever shortens occupations, so robot plans stay valid.
    fn trim_reservation(&mut self, h: usize, now: f64) {
        let pos = self.humans[h].pos;
        let Some(hp) = self.humans[h].reservation.as_mut() else { return };
        let Some(k) = (0..hp.path.len())
            .min_by(|&a, &b| self.g.pos(hp.path[a]).dist(pos).total_cmp(&self.g.pos(hp.path[b]).dist(pos)))
        else {
            return;
        };
        let mut changed = false;
        for w in hp.windows.iter_mut().take(k.saturating_sub(1)) {
            if w.exit > now && w.exit > w.entry {
                w.exit = now.max(w.entry);
                changed = true;
            }
        }
        if changed {
            let hp = hp.clone();
            reserve_human(&mut self.table, &self.rg, &hp, &self.cfg.hap.safety);
        }
    }

    fn next_assignment(&mut self, h: usize) {
        let human = &mut self.humans[h];
        let target = match human.waypoints.pop_front() {
            Some(t) => t,
            None => {
                let here = self.g.nearest_node(human.pos);
                let options: Vec<NodeId> = self.human_targets.iter().copied().filter(|&n| n != here).collect();
                options[human.rng.gen_range(0..options.len())]
            }
        };
        human.target = target;
        self.plan_assignment(h);
    }

    /// Asks the human-aware planner for a path to the current target and
    /// points the intention tracker at it.
    fn plan_assignment(&mut self, h: usize) {
        let path = self.replan_human(h);
        let human = &mut self.humans[h];
        human.route = path;
        human.route_idx = 0;
        human.activity = Activity::Walking;
        human.last_reaction = None;
        human.left_at = None;
        human.noticed = false;
    }

    /// Plans the human's current assignment with precedence over robots and
    /// makes it the path the tracker measures deviations against.
    fn replan_human(&mut self, h: usize) -> Vec<NodeId> {
        let now = self.time();
        let agent = self.humans[h].agent();
        let from = self.g.nearest_node(self.humans[h].pos);
        let to = self.humans[h].target;
        let outcome = plan_human(&mut self.table, &self.g, &self.rg, agent, from, to, now, &self.cfg.hap)
            .expect("nodes come from the layout");
        let path = match &outcome.human_plan {
            Some(p) => p.path.clone(),
            None => shortest_path(&self.g, &self.f, from, to).unwrap_or_else(|_| vec![from]),
        };
        self.apply_outcome(h, &outcome, now);
        let human = &mut self.humans[h];
        human.assigned_path = path.clone();
        let pos = human.pos;
        human.tracker.reassign(path.clone(), &self.aux_goals, pos, &self.cfg.hir).expect("valid goal set");
        self.log(EventKind::Assignment, json!({ "human": agent, "path": path, "outcome": outcome.kind }));
        path
    }

    /// Moves along the current route by up to `step` meters.
    fn walk(&mut self, h: usize, mut step: f64) -> bool {
        let human = &mut self.humans[h];
        while step > 0.0 && human.route_idx < human.route.len() {
            let goal = self.g.pos(human.route[human.route_idx]);
            let d = human.pos.dist(goal);
            if d <= step {
                human.pos = goal;
                step -= d;
                human.route_idx += 1;
            } else {
                human.pos = human.pos.step_toward(goal, step);
                step = 0.0;
            }
        }
        human.route_idx >= human.route.len()
    }

    fn step_human(&mut self, h: usize, now: f64) {
        let dt = self.cfg.dt;
        if self.humans[h].paused_until > now + 1e-9 {
            return;
        }
        match self.humans[h].controller {
            Controller::Hold => {}
            Controller::External { steer } => {
                let v_max = self.cfg.hap.band.v_max;
                if let Some(s) = steer {
                    let human = &mut self.humans[h];
                    let step = s.speed.unwrap_or(self.cfg.human_speed).clamp(0.0, v_max) * dt;
                    if let Some(t) = s.target {
                        human.pos = human.pos.step_toward(t, step);
                    } else if let Some(d) = s.direction {
                        if d.norm() > 1e-12 {
                            human.pos = human.pos.add(d.scale(step / d.norm()));
                        }
                    }
                }
                let target = self.g.pos(self.humans[h].target);
                if self.humans[h].pos.dist(target) <= self.cfg.hir.deviation.r {
                    self.human_delivery(h);
                }
            }
            Controller::Scripted => self.step_scripted(h, now),
        }
    }

    fn step_scripted(&mut self, h: usize, now: f64) {
        let step = self.cfg.human_speed * self.cfg.dt;
        match self.humans[h].activity {
            Activity::Walking => {
                if let Some(dev) = self.humans[h].deviations.front().copied() {
                    if dev.at <= now + 1e-9 {
                        self.humans[h].deviations.pop_front();
                        self.start_deviation(h, dev.toward);
                        return;
                    }
                }
                if self.walk(h, step) {
                    self.humans[h].activity = Activity::Dwelling { until: now + self.cfg.human_dwell };
                }
            }
            Activity::Dwelling { until } => {
                if now + 1e-9 >= until {
                    self.human_delivery(h);
                }
            }
            Activity::Deviating { .. } => {
                if self.walk(h, step) {
                    self.humans[h].activity = Activity::Distracted { until: now + self.cfg.deviation.distraction };
                }
            }
            Activity::Distracted { until } => {
                if now + 1e-9 >= until {
                    self.return_to_work(h);
                }
            }
        }
    }

    fn start_deviation(&mut self, h: usize, toward: NodeId) {
        let from = self.g.nearest_node(self.humans[h].pos);
        let route = shortest_path(&self.g, &self.f, from, toward).unwrap_or_else(|_| vec![from]);
        let agent = self.humans[h].agent();
        let human = &mut self.humans[h];
        if human.left_at.is_none() {
            human.left_at = Some((std::mem::take(&mut human.route), human.route_idx, from));
        }
        human.route = route;
        human.route_idx = 0;
        human.activity = Activity::Deviating { toward };
        self.log(EventKind::Deviation, json!({ "human": agent, "toward": toward }));
    }

    /// A noticed deviation ends with a fresh plan from where the human
    /// stands. Otherwise nobody has told the human anything new, so they walk
    /// back to where they left the assigned route and carry on along it.
    fn return_to_work(&mut self, h: usize) {
        let human = &self.humans[h];
        let Some((route, idx, left)) = human.left_at.clone().filter(|_| !human.noticed) else {
            self.plan_assignment(h);
            return;
        };
        let here = self.g.nearest_node(human.pos);
        let mut back = shortest_path(&self.g, &self.f, here, left).unwrap_or_else(|_| vec![here]);
        let rest = &route[idx.min(route.len())..];
        if back.last() == rest.first() {
            back.pop();
        }
        back.extend_from_slice(rest);
        let human = &mut self.humans[h];
        human.route = back;
        human.route_idx = 0;
        human.left_at = None;
        human.activity = Activity::Walking;
    }

    fn human_delivery(&mut self, h: usize) {
        self.metrics.human_deliveries += 1;
        let agent = self.humans[h].agent();
        let target = self.humans[h].target;
        self.log(EventKind::HumanDelivery, json!({ "human": agent, "node": target }));
        self.next_assignment(h);
    }

    // ---- intention recognition and mode dispatch --------------------------

    fn intention(&mut self, h: usize, now: f64) {
        let p = self.humans[h].pos;
        let was = self.humans[h].is_deviating();
        let deviating = self.humans[h].tracker.cycle(p, &self.g, &self.cfg.hir);
        let observed = self.humans[h].tracker.observe(p, &self.g, &self.f, &self.cfg.hir);
        if !deviating {
            if was {
                self.humans[h].last_reaction = None;
            }
            return;
        }
        if self.cfg.mode != Mode::Nhir {
            self.humans[h].noticed = true;
        }
        let rising = !was;
        if !(rising || observed.is_some()) {
            return;
        }
        let report = match self.cfg.mode {
            Mode::Nhir => return,
            Mode::Phir => self.humans[h].tracker.report(p, &self.g, &self.f, &self.cfg.hir),
            Mode::Shir => {
                let prev = observed.map_or(self.humans[h].tracker.anchor(), |(prev, _)| prev);
                match shir_predict(prev, p, &self.g, self.cfg.shir_horizon) {
                    Ok(path) => HirReport {
                        deviating: true,
                        original_goal_plausible: false,
                        candidate_paths: vec![CandidatePath {
                            goal: *path.last().expect("non-empty"),
                            probability: 1.0,
                            path,
                        }],
                    },
                    Err(_) => return,
                }
            }
        };
        // React when the predicted goals change, not on every step along them.
        let mut signature: Vec<NodeId> = report.candidate_paths.iter().map(|c| c.goal).collect();
        signature.sort();
        if report.original_goal_plausible || self.humans[h].last_reaction.as_ref() == Some(&signature) {
            return;
        }
        self.humans[h].last_reaction = Some(signature);
        let agent = self.humans[h].agent();
        let event = HirEvent { worker: self.humans[h].id, report: report.clone() };
        self.log(EventKind::HirReport, serde_json::to_value(event).expect("events serialize"));
        let current = self.g.nearest_node(p);
        let outcome = react_to_hir(&mut self.table, &self.g, &self.rg, agent, &report, current, now, &self.cfg.hap);
        if outcome.kind == HapKind::StopHuman {
            self.humans[h].paused_until = self.humans[h].paused_until.max(now + self.cfg.hap.stop_hold);
        }
        self.apply_outcome(h, &outcome, now);
    }

    fn apply_outcome(&mut self, h: usize, outcome: &HapOutcome, now: f64) {
        match (&outcome.human_plan, outcome.kind) {
            (Some(hp), _) => self.humans[h].reservation = Some(hp.clone()),
            (None, HapKind::StopHuman) => self.humans[h].reservation = None,
            _ => {}
        }
        for a in &outcome.evaders {
            if let Some(r) = self.robot_mut(*a) {
                r.wait_until = r.wait_until.max(outcome.resume_at);
                r.internal_state = InternalState::Interrupted;
            }
        }
        let retry = now + self.cfg.retry_period;
        for a in &outcome.failed {
            if let Some(r) = self.robot_mut(*a) {
                if r.halt.is_none() {
                    r.wait_until = r.wait_until.max(retry);
                    r.internal_state = InternalState::Failed;
                }
            }
        }
        if outcome.kind != HapKind::KeepPlan {
            let event = HapEvent {
                worker: self.humans[h].id,
                kind: outcome.kind,
                human_path: outcome.human_plan.as_ref().map(|p| p.path.clone()),
                replanned: outcome.robot_plans.iter().map(|p| p.agent).collect(),
                evaders: outcome.evaders.clone(),
                failed: outcome.failed.clone(),
                trace: outcome.trace.clone(),
            };
            self.log(EventKind::HapOutcome, serde_json::to_value(event).expect("events serialize"));
        }
    }

    fn robot_index(&self, a: AgentId) -> Option<usize> {
        match a {
            AgentId::Robot(id) => self.robots.iter().position(|r| r.id == id),
            AgentId::Human(_) => None,
        }
    }

    fn robot_mut(&mut self, a: AgentId) -> Option<&mut Robot> {
        match a {
            AgentId::Robot(id) => self.robots.iter_mut().find(|r| r.id == id),
            AgentId::Human(_) => None,
        }
    }

    // ---- robots -----------------------------------------------------------

    fn forbidden_for(&self, r: usize, start: NodeId) -> BTreeSet<NodeId> {
        if self.robots[r].carried_rack.is_none() {
            return BTreeSet::new();
        }
        let target = self.robots[r].target;
        self.storage.iter().copied().filter(|&n| n != target && n != start).collect()
    }

    /// Plans robot `r` to its target. `lead_in` is the node it has to reach
    /// first when it stands between two nodes.
    fn plan_robot(&mut self, r: usize, now: f64, start: NodeId, lead_in: Option<NodeId>) -> bool {
        let agent = self.robots[r].agent();
        let speed = self.robots[r].speed;
        let pos = self.robots[r].pos;
        let (first, depart) = match lead_in {
            Some(b) => (b, now + pos.dist(self.g.pos(b)) / speed),
            None => (start, now),
        };
        let mut req = PlanRequest::new(agent, first, self.robots[r].target, depart, speed);
        req.hold_from = Some(now);
        req.forbidden = self.forbidden_for(r, first);
        match plan_route(&self.table, &self.rg, &req, &self.cfg.hap.planner) {
            Ok(mut plan) => {
                if lead_in.is_some() {
                    let lead = Visit { resource: start, entry: now, exit: depart, approach: 0.0 };
                    plan.visits.insert(0, lead);
                    plan.origin = Some(pos);
                }
                self.table.commit(&self.rg, plan);
                let robot = &mut self.robots[r];
                robot.pending_arrival = true;
                robot.internal_state = InternalState::Busy;
                true
            }
            Err(e) => {
                let held: Vec<NodeId> = lead_in.map_or(vec![start], |b| vec![start, b]);
                self.table.hold(&self.rg, agent, &held, now);
                let wait = match self.robots[r].planning_state {
                    PlanningState::RackToQueueStart | PlanningState::InQueue => self.cfg.queue_retry,
                    _ => self.cfg.retry_period,
                };
                let robot = &mut self.robots[r];
                robot.wait_until = now + wait;
                let first = robot.internal_state != InternalState::Failed;
                robot.internal_state = InternalState::Failed;
                if first {
                    let state = robot.planning_state;
                    self.log(EventKind::PlanFailed, json!({ "robot": agent, "state": state, "error": e.to_string() }));
                }
                false
            }
        }
    }

    /// Takes the earliest pending job whose rack is in storage. Generated
    /// jobs come from one seeded sequence that does not depend on which
    /// robot asks first, so every mode sees the same job set.
    fn take_job(&mut self) -> Option<Job> {
        let free = |w: &World, n: NodeId| {
            w.rack_home.binary_search(&n).is_ok_and(|i| {
                matches!(w.racks[i], RackLocation::Storage(_)) && !w.robots.iter().any(|r| r.job.is_some_and(|j| j.rack == i as u32))
            })
        };
        let mut idx = self.job_list.iter().position(|j| free(self, j.rack));
        if idx.is_none() && self.generate_jobs {
            for _ in 0..64 {
                let rack = self.rack_home[self.job_rng.gen_range(0..self.rack_home.len())];
                let station = self.job_rng.gen_range(0..self.stations.len());
                self.job_list.push_back(JobSpec { rack, station });
                if free(self, rack) {
                    idx = Some(self.job_list.len() - 1);
                    break;
                }
            }
        }
        let spec = self.job_list.remove(idx?).expect("index in range");
        let rack = self.rack_home.binary_search(&spec.rack).expect("checked above") as u32;
        self.next_job += 1;
        Some(Job {
            id: self.next_job,
            rack,
            station: spec.station.min(self.stations.len() - 1),
            return_node: spec.rack,
        })
    }

    fn start_next_job(&mut self, r: usize, now: f64, node: NodeId) {
        match self.take_job() {
            Some(job) => {
                let robot = &mut self.robots[r];
                robot.job = Some(job);
                robot.planning_state = PlanningState::ToRack;
                robot.target = job.return_node;
            }
            None => {
                let robot = &mut self.robots[r];
                robot.planning_state = PlanningState::ToCharger;
                robot.target = robot.home;
                if node == robot.home {
                    robot.internal_state = InternalState::Idle;
                    return;
                }
            }
        }
        self.plan_robot(r, now, node, None);
    }

    fn arrive(&mut self, r: usize, now: f64, node: NodeId) {
        let agent = self.robots[r].agent();
        match self.robots[r].planning_state {
            PlanningState::ToRack => {
                let job = self.robots[r].job.expect("busy robots carry a job");
                self.racks[job.rack as usize] = RackLocation::Carried(self.robots[r].id);
                let robot = &mut self.robots[r];
                robot.carried_rack = Some(job.rack);
                robot.planning_state = PlanningState::RackToQueueStart;
                robot.target = self.stations[job.station].slots[0];
                self.plan_robot(r, now, node, None);
            }
            PlanningState::RackToQueueStart | PlanningState::InQueue => {
                let job = self.robots[r].job.expect("busy robots carry a job");
                let slots = &self.stations[job.station].slots;
                let robot = &mut self.robots[r];
                if robot.planning_state == PlanningState::RackToQueueStart {
                    robot.planning_state = PlanningState::InQueue;
                    robot.queue_slot = 0;
                }
                if robot.queue_slot + 1 >= slots.len() {
                    robot.service_until = Some(now + self.cfg.service_time);
                    robot.internal_state = InternalState::Free;
                    self.metrics.robot_deliveries += 1;
                    self.log(EventKind::RobotDelivery, json!({ "robot": agent, "job": job }));
                } else {
                    robot.queue_slot += 1;
                    robot.target = slots[robot.queue_slot];
                    self.plan_robot(r, now, node, None);
                }
            }
            PlanningState::ReturnRack => {
                let job = self.robots[r].job.take().expect("busy robots carry a job");
                self.racks[job.rack as usize] = RackLocation::Storage(job.return_node);
                self.robots[r].carried_rack = None;
                self.start_next_job(r, now, node);
            }
            PlanningState::ToCharger => {
                self.robots[r].internal_state = InternalState::Idle;
            }
        }
    }

    fn step_robot(&mut self, r: usize, now: f64) {
        if self.robots[r].halt.is_some() {
            self.try_resume(r, now);
            return;
        }
        let agent = self.robots[r].agent();
        let plan = self.table.plan(agent).expect("every robot has a plan or hold").clone();
        self.robots[r].pos = plan.position_at(now, &self.rg);
        if now + 1e-9 < plan.cost() {
            return;
        }
        let node = plan.goal();
        if let Some(until) = self.robots[r].service_until {
            if now + 1e-9 >= until {
                let robot = &mut self.robots[r];
                robot.service_until = None;
                robot.planning_state = PlanningState::ReturnRack;
                robot.target = robot.job.expect("serviced robots carry a job").return_node;
                self.plan_robot(r, now, node, None);
            }
            return;
        }
        let robot = &self.robots[r];
        if node == robot.target && robot.pending_arrival {
            self.robots[r].pending_arrival = false;
            self.arrive(r, now, node);
        } else if node != robot.target && now + 1e-9 >= robot.wait_until {
            self.plan_robot(r, now, node, None);
        } else if robot.internal_state == InternalState::Idle && now + 1e-9 >= robot.wait_until {
            self.start_next_job(r, now, node);
            if self.robots[r].internal_state == InternalState::Idle {
                self.robots[r].wait_until = now + self.cfg.retry_period;
            }
        }
    }

    /// Where a robot stands: one node, or the two ends of the edge it is on.
    fn standing(&self, r: usize, now: f64) -> (NodeId, Option<NodeId>) {
        let plan = self.table.plan(self.robots[r].agent()).expect("every robot has a plan");
        let i = plan.visit_index_at(now);
        let here = plan.visits[i].resource;
        let pos = self.robots[r].pos;
        if pos.dist(self.g.pos(here)) < 1e-6 || i == 0 {
            (here, None)
        } else {
            (plan.visits[i - 1].resource, Some(here))
        }
    }

    fn halt(&mut self, r: usize, now: f64) {
        let agent = self.robots[r].agent();
        let (a, b) = self.standing(r, now);
        let held: Vec<NodeId> = [Some(a), b].into_iter().flatten().collect();
        self.table.hold(&self.rg, agent, &held, now);
        let robot = &mut self.robots[r];
        robot.halt = Some(Halt { held: held.clone(), clear_since: None });
        robot.internal_state = InternalState::Interrupted;
        self.log(EventKind::Halt, json!({ "robot": agent, "held": held }));
        // Robots planned through the held nodes have to go around.
        let affected: Vec<AgentId> = self
            .table
            .conflicting_agents(agent)
            .into_iter()
            .filter(|a| a.is_robot() && self.robot_index(*a).is_some_and(|o| self.robots[o].halt.is_none()))
            .collect();
        let (_, failed) = replan_cascade(&mut self.table, &self.rg, affected, now, &self.cfg.hap.planner);
        for a in failed {
            let o = self.robot_index(a).expect("robot exists");
            if self.robots[o].halt.is_none() {
                self.robots[o].wait_until = now + self.cfg.retry_period;
                self.robots[o].internal_state = InternalState::Failed;
            }
        }
    }

    fn try_resume(&mut self, r: usize, now: f64) {
        let r1 = self.cfg.hap.safety.r1;
        let pos = self.robots[r].pos;
        let near = self.humans.iter().any(|h| h.pos.dist(pos) <= r1);
        let wait_until = self.robots[r].wait_until;
        let halt = self.robots[r].halt.as_mut().expect("halted");
        if near {
            halt.clear_since = None;
            return;
        }
        let since = *halt.clear_since.get_or_insert(now);
        if now + 1e-9 < since + self.cfg.halt_recovery || now + 1e-9 < wait_until {
            return;
        }
        let held = halt.held.clone();
        self.robots[r].halt = None;
        let agent = self.robots[r].agent();
        let ok = self.plan_robot(r, now, held[0], held.get(1).copied());
        if ok {
            self.log(EventKind::Resume, json!({ "robot": agent }));
        } else {
            self.robots[r].halt = Some(Halt { held, clear_since: Some(since) });
            self.robots[r].internal_state = InternalState::Interrupted;
        }
    }

    /// Rising-edge encounters and safety stops.
    fn safety_stops(&mut self, now: f64) {
        let r1 = self.cfg.hap.safety.r1;
        let mut inside = BTreeSet::new();
        for r in 0..self.robots.len() {
            for h in 0..self.humans.len() {
                if self.robots[r].pos.dist(self.humans[h].pos) <= r1 {
                    inside.insert((self.robots[r].id, self.humans[h].id));
                }
            }
        }
        for &(rid, hid) in inside.difference(&self.encounter_pairs.clone()) {
            self.metrics.encounters += 1;
            let r = self.robots.iter().position(|x| x.id == rid).expect("robot exists");
            let h = self.humans.iter().position(|x| x.id == hid).expect("human exists");
            self.humans[h].paused_until = self.humans[h].paused_until.max(now + self.cfg.encounter_pause);
            // Without intention recognition a safety stop is the first the
            // planner hears of a human off their plan.
            let off_plan = matches!(self.humans[h].activity, Activity::Deviating { .. } | Activity::Distracted { .. });
            if self.cfg.mode == Mode::Nhir && off_plan && !self.humans[h].noticed {
                self.replan_human(h);
            }
            self.humans[h].noticed = true;
            self.log(EventKind::Encounter, json!({ "robot": AgentId::Robot(rid), "human": AgentId::Human(hid) }));
            if self.robots[r].halt.is_none() {
                self.halt(r, now);
            }
        }
        // Any robot still inside a stop radius stays halted.
        for &(rid, _) in &inside {
            let r = self.robots.iter().position(|x| x.id == rid).expect("robot exists");
            if self.robots[r].halt.is_none() {
                self.halt(r, now);
            }
        }
        self.encounter_pairs = inside;
    }
}
