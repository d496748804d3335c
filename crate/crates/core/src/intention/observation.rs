use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::graph::{DistanceMatrix, NodeId, WarehouseGraph};

use super::IntentionError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociationConfig {
    /// Support size: number of nearest nodes that receive weight.
    pub k: usize,
    /// Kernel softening in meters; weight = 1 / (dist + epsilon).
    pub epsilon: f64,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self { k: 4, epsilon: 0.05 }
    }
}

/// Sparse, normalized node weights for a worker position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociationVector {
    pub weights: Vec<(NodeId, f64)>,
}

impl AssociationVector {
    pub fn weight(&self, n: NodeId) -> f64 {
        self.weights.iter().find(|(m, _)| *m == n).map_or(0.0, |(_, w)| *w)
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().map(|(_, w)| w).sum()
    }
}

pub fn association_vector(g: &WarehouseGraph, p: Point, cfg: &AssociationConfig) -> AssociationVector {
    let support = g.nearest_nodes(p, cfg.k.max(1));
    // A position sitting exactly on a node with k = 1 degenerates to a point mass.
    let raw: Vec<(NodeId, f64)> = support
        .iter()
        .map(|&(n, d)| (n, 1.0 / (d + cfg.epsilon)))
        .collect();
    let sum: f64 = raw.iter().map(|(_, w)| w).sum();
    AssociationVector { weights: raw.into_iter().map(|(n, w)| (n, w / sum)).collect() }
}

/// Candidate positions at the same step length from `p_prev`, at evenly
/// spaced headings. Index 0 is always `p_now` itself.
pub fn alternative_positions(
    p_prev: Point,
    p_now: Point,
    n_alt: usize,
    min_displacement: f64,
) -> Result<Vec<Point>, IntentionError> {
    let step = p_now.sub(p_prev);
    let radius = step.norm();
    if radius <= min_displacement || radius == 0.0 {
        return Err(IntentionError::ZeroDisplacement(radius));
    }
    let n_alt = n_alt.max(2);
    let heading = step.heading();
    let mut out = Vec::with_capacity(n_alt);
    out.push(p_now);
    for i in 1..n_alt {
        let a = heading + std::f64::consts::TAU * i as f64 / n_alt as f64;
        out.push(Point::new(p_prev.x + radius * a.cos(), p_prev.y + radius * a.sin()));
    }
    Ok(out)
}

/// Goal distances seen through the association vectors of the actual
/// position (`d`) and of each alternative position (rows of `alternatives`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulatedDistances {
    pub actual: Vec<f64>,
    pub alternatives: Vec<Vec<f64>>,
}

fn modulate(c: &AssociationVector, f: &DistanceMatrix, goals: &[NodeId]) -> Vec<f64> {
    goals
        .iter()
        .map(|&goal| {
            c.weights
                .iter()
                .filter(|(_, w)| *w > 0.0)
                .map(|&(n, w)| w * f.get(n, goal))
                .sum()
        })
        .collect()
}

pub fn modulated_distances(
    g: &WarehouseGraph,
    f: &DistanceMatrix,
    goals: &[NodeId],
    actual: Point,
    alternatives: &[Point],
    cfg: &AssociationConfig,
) -> ModulatedDistances {
    let d = modulate(&association_vector(g, actual, cfg), f, goals);
    let rows = alternatives
        .iter()
        .map(|&p| modulate(&association_vector(g, p, cfg), f, goals))
        .collect();
    ModulatedDistances { actual: d, alternatives: rows }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationVector {
    pub values: Vec<f64>,
    /// Components that fell outside [0, 1] before clamping.
    pub clamped: usize,
}

impl ObservationVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Normalized progress toward each goal relative to the alternative moves:
/// 1 when the actual move is the best alternative for that goal, 0 when it is
/// the worst. A column without spread yields the uninformative 0.5.
pub fn observation_vector(m: &ModulatedDistances) -> ObservationVector {
    let mut clamped = 0;
    let values = m
        .actual
        .iter()
        .enumerate()
        .map(|(j, &d)| {
            let (lo, hi) = m
                .alternatives
                .iter()
                .map(|row| row[j])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
            if !d.is_finite() {
                // Goal unreachable from the actual position.
                return if lo.is_finite() { 0.0 } else { 0.5 };
            }
            if !hi.is_finite() {
                // Some alternative loses the goal while the actual move keeps it.
                return 1.0;
            }
            if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
                return 0.5;
            }
            let o = (hi - d) / (hi - lo);
            if !(0.0..=1.0).contains(&o) {
                clamped += 1;
            }
            o.clamp(0.0, 1.0)
        })
        .collect();
    ObservationVector { values, clamped }
}
