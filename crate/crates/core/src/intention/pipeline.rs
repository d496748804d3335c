use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::graph::{DistanceMatrix, NodeId, WarehouseGraph};

use super::{
    alternative_positions, emit_report, modulated_distances, observation_vector, AssociationConfig,
    DecodeMode, DeviationConfig, GoalHmm, GoalSet, HirReport, IntentionError, ObservationVector,
    PathTracker, ReportConfig, DEFAULT_ALPHA,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HirConfig {
    pub deviation: DeviationConfig,
    pub association: AssociationConfig,
    pub n_alt: usize,
    /// Cumulative displacement (m) that triggers a belief update.
    pub update_displacement: f64,
    pub alpha: f64,
    pub decode: DecodeMode,
    pub report: ReportConfig,
}

impl Default for HirConfig {
    fn default() -> Self {
        Self {
            deviation: DeviationConfig::default(),
            association: AssociationConfig::default(),
            n_alt: 8,
            update_displacement: 0.3,
            alpha: DEFAULT_ALPHA,
            decode: DecodeMode::Viterbi,
            report: ReportConfig::default(),
        }
    }
}

/// Deviation detector plus goal belief for one worker.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntentionTracker {
    tracker: PathTracker,
    goals: GoalSet,
    hmm: GoalHmm,
    anchor: Point,
    deviating: bool,
}

impl IntentionTracker {
    pub fn new(
        assigned_path: Vec<NodeId>,
        auxiliary_goals: &[NodeId],
        position: Point,
        cfg: &HirConfig,
    ) -> Result<Self, IntentionError> {
        let tracker = PathTracker::new(assigned_path);
        let goals = GoalSet::absorbing(auxiliary_goals, tracker.terminal())?;
        let hmm = GoalHmm::new(goals.len(), cfg.alpha, cfg.decode)?;
        Ok(Self { tracker, goals, hmm, anchor: position, deviating: false })
    }

    /// A fresh assignment resets the tracker and the belief.
    pub fn reassign(
        &mut self,
        assigned_path: Vec<NodeId>,
        auxiliary_goals: &[NodeId],
        position: Point,
        cfg: &HirConfig,
    ) -> Result<(), IntentionError> {
        *self = Self::new(assigned_path, auxiliary_goals, position, cfg)?;
        Ok(())
    }

    pub fn tracker(&self) -> &PathTracker {
        &self.tracker
    }

    pub fn goals(&self) -> &GoalSet {
        &self.goals
    }

    pub fn hmm(&self) -> &GoalHmm {
        &self.hmm
    }

    pub fn is_deviating(&self) -> bool {
        self.deviating
    }

    pub fn anchor(&self) -> Point {
        self.anchor
    }

    /// One deviation-detector cycle.
    pub fn cycle(&mut self, p: Point, g: &WarehouseGraph, cfg: &HirConfig) -> bool {
        self.deviating = self.tracker.update_deviation(p, g, &cfg.deviation);
        self.deviating
    }

    /// Runs a belief update once the worker has moved far enough since the
    /// previous one. Returns the anchor used and the observation folded in.
    pub fn observe(
        &mut self,
        p: Point,
        g: &WarehouseGraph,
        f: &DistanceMatrix,
        cfg: &HirConfig,
    ) -> Option<(Point, ObservationVector)> {
        if p.dist(self.anchor) < cfg.update_displacement {
            return None;
        }
        let prev = self.anchor;
        let alts = alternative_positions(prev, p, cfg.n_alt, 1e-9).ok()?;
        let m = modulated_distances(g, f, &self.goals.goals(), p, &alts, &cfg.association);
        let o = observation_vector(&m);
        self.hmm.update(o.clone()).expect("observation sized to the goal set");
        self.anchor = p;
        Some((prev, o))
    }

    pub fn report(&self, p: Point, g: &WarehouseGraph, f: &DistanceMatrix, cfg: &HirConfig) -> HirReport {
        emit_report(&self.hmm, &self.goals, g, f, self.deviating, p, &cfg.report)
    }
}
