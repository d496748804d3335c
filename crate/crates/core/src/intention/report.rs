use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::graph::{shortest_path, DistanceMatrix, NodeId, WarehouseGraph};

use super::{GoalHmm, IntentionError};

/// Auxiliary goals plus the terminal node of the assigned path, which is
/// always the last HMM state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalSet {
    auxiliary: Vec<NodeId>,
    terminal: NodeId,
}

impl GoalSet {
    pub fn new(auxiliary: Vec<NodeId>, terminal: NodeId) -> Result<Self, IntentionError> {
        let mut all = auxiliary.clone();
        all.push(terminal);
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != all.len() || all.len() < 2 {
            return Err(IntentionError::BadGoalSet);
        }
        Ok(Self { auxiliary, terminal })
    }

    /// Like [`GoalSet::new`] but lets the terminal goal absorb an auxiliary
    /// goal at the same node.
    pub fn absorbing(auxiliary: &[NodeId], terminal: NodeId) -> Result<Self, IntentionError> {
        let aux: Vec<NodeId> = auxiliary.iter().copied().filter(|&n| n != terminal).collect();
        Self::new(aux, terminal)
    }

    pub fn auxiliary(&self) -> &[NodeId] {
        &self.auxiliary
    }

    pub fn terminal(&self) -> NodeId {
        self.terminal
    }

    /// Goal count `g`, terminal included.
    pub fn len(&self) -> usize {
        self.auxiliary.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// HMM state order: auxiliary goals, then the terminal goal.
    pub fn goals(&self) -> Vec<NodeId> {
        let mut v = self.auxiliary.clone();
        v.push(self.terminal);
        v
    }
}

/// How the keep-original threshold scales with the goal count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "coefficient")]
pub enum KeepThreshold {
    /// coefficient / g
    PerGoal(f64),
    /// coefficient * g, taken literally; exceeds 1 for g >= 4.
    Literal(f64),
}

impl KeepThreshold {
    pub fn value(self, g: usize) -> f64 {
        match self {
            KeepThreshold::PerGoal(c) => c / g as f64,
            KeepThreshold::Literal(c) => c * g as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub keep: KeepThreshold,
    /// Goals need belief above goal_factor / g to yield a candidate path.
    pub goal_factor: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { keep: KeepThreshold::PerGoal(0.25), goal_factor: 0.8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidatePath {
    pub goal: NodeId,
    pub probability: f64,
    pub path: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HirReport {
    pub deviating: bool,
    pub original_goal_plausible: bool,
    pub candidate_paths: Vec<CandidatePath>,
}

impl HirReport {
    pub fn quiet() -> Self {
        Self { deviating: false, original_goal_plausible: true, candidate_paths: Vec::new() }
    }
}

pub fn emit_report(
    hmm: &GoalHmm,
    goals: &GoalSet,
    g: &WarehouseGraph,
    f: &DistanceMatrix,
    deviating: bool,
    p: Point,
    cfg: &ReportConfig,
) -> HirReport {
    if !deviating {
        return HirReport::quiet();
    }
    let belief = hmm.belief();
    let n = goals.len();
    debug_assert_eq!(belief.len(), n);
    let max = belief.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let terminal = belief[n - 1];
    if max - terminal < cfg.keep.value(n) {
        return HirReport { deviating: true, original_goal_plausible: true, candidate_paths: Vec::new() };
    }
    let start = g.nearest_node(p);
    let threshold = cfg.goal_factor / n as f64;
    let candidate_paths = goals
        .goals()
        .into_iter()
        .zip(belief.iter().copied())
        .filter(|(_, b)| *b > threshold)
        .filter_map(|(goal, probability)| match shortest_path(g, f, start, goal) {
            Ok(path) => Some(CandidatePath { goal, probability, path }),
            Err(e) => {
                log::debug!("dropping candidate goal {goal}: {e}");
                None
            }
        })
        .collect();
    HirReport { deviating: true, original_goal_plausible: false, candidate_paths }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::{demo_goals, demo_layout};
    use crate::graph::all_pairs_distances;
    use crate::intention::{DecodeMode, ObservationVector, DEFAULT_ALPHA};

    #[test]
    fn goal_set_rules() {
        assert!(GoalSet::new(vec![NodeId(1)], NodeId(1)).is_err());
        let gs = GoalSet::absorbing(&[NodeId(1), NodeId(2)], NodeId(1)).unwrap();
        assert_eq!(gs.goals(), vec![NodeId(2), NodeId(1)]);
        assert_eq!(KeepThreshold::PerGoal(0.25).value(5), 0.05);
        assert_eq!(KeepThreshold::Literal(0.25).value(5), 1.25);
    }

    #[test]
    fn report_paths() {
        let g = demo_layout();
        let f = all_pairs_distances(&g);
        let terminal = NodeId(100);
        let gs = GoalSet::new(demo_goals(), terminal).unwrap();
        let p = g.pos(NodeId(60));
        let cfg = ReportConfig::default();

        let uniform = GoalHmm::new(5, DEFAULT_ALPHA, DecodeMode::Viterbi).unwrap();
        let r = emit_report(&uniform, &gs, &g, &f, true, p, &cfg);
        assert!(r.original_goal_plausible && r.candidate_paths.is_empty());

        let r = emit_report(&uniform, &gs, &g, &f, false, p, &cfg);
        assert!(!r.deviating && r.candidate_paths.is_empty());

        // Drive the belief toward goal 0.
        let mut h = uniform.clone();
        for _ in 0..3 {
            h.update(ObservationVector { values: vec![1.0, 0.0, 0.0, 0.0, 0.0], clamped: 0 }).unwrap();
        }
        let r = emit_report(&h, &gs, &g, &f, true, p, &cfg);
        assert!(!r.original_goal_plausible);
        assert_eq!(r.candidate_paths.len(), 1);
        let c = &r.candidate_paths[0];
        assert_eq!(c.goal, demo_goals()[0]);
        assert_eq!(c.path[0], NodeId(60));
        assert_eq!(*c.path.last().unwrap(), c.goal);
    }
}
