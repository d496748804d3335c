use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::graph::{NodeId, WarehouseGraph};

use super::IntentionError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationConfig {
    /// Node capture radius and ellipse margin, meters.
    pub r: f64,
    pub consecutive_cycles: u32,
    /// Seconds between tracker samples.
    pub cycle_period: f64,
}

impl Default for DeviationConfig {
    fn default() -> Self {
        Self { r: 0.25, consecutive_cycles: 4, cycle_period: 0.1 }
    }
}

impl DeviationConfig {
    pub fn validate(&self) -> Result<(), IntentionError> {
        if !(self.r > 0.0) {
            return Err(IntentionError::Config("deviation radius must be positive"));
        }
        if self.consecutive_cycles == 0 {
            return Err(IntentionError::Config("consecutive_cycles must be at least 1"));
        }
        if !(self.cycle_period > 0.0) {
            return Err(IntentionError::Config("cycle_period must be positive"));
        }
        Ok(())
    }
}

/// Follows a worker along the assigned node sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathTracker {
    assigned_path: Vec<NodeId>,
    current_index: usize,
    outside_counter: u32,
}

impl PathTracker {
    /// # Panics
    /// Panics if `assigned_path` is empty.
    pub fn new(assigned_path: Vec<NodeId>) -> Self {
        assert!(!assigned_path.is_empty(), "assigned path must be nonempty");
        Self { assigned_path, current_index: 0, outside_counter: 0 }
    }

    pub fn assigned_path(&self) -> &[NodeId] {
        &self.assigned_path
    }

    pub fn current_index(&self) -> usize {
        self.current_index
    }

    pub fn current_node(&self) -> NodeId {
        self.assigned_path[self.current_index]
    }

    pub fn next_node(&self) -> Option<NodeId> {
        self.assigned_path.get(self.current_index + 1).copied()
    }

    pub fn terminal(&self) -> NodeId {
        *self.assigned_path.last().expect("nonempty")
    }

    pub fn outside_counter(&self) -> u32 {
        self.outside_counter
    }

    pub fn is_complete(&self) -> bool {
        self.current_index + 1 >= self.assigned_path.len()
    }

    /// Captures the next node (repeatedly) while the worker is within `r` of it.
    pub fn advance(&mut self, p: Point, g: &WarehouseGraph, cfg: &DeviationConfig) {
        while let Some(next) = self.next_node() {
            if p.dist(g.pos(next)) < cfg.r {
                self.current_index += 1;
            } else {
                break;
            }
        }
    }

    /// Focal-sum test against the ellipse spanned by the current and next
    /// node; once complete, both foci sit on the terminal node.
    pub fn inside_allowed_area(&self, p: Point, g: &WarehouseGraph, cfg: &DeviationConfig) -> bool {
        let f1 = g.pos(self.current_node());
        let f2 = self.next_node().map_or(f1, |n| g.pos(n));
        inside_ellipse(p, f1, f2, cfg.r)
    }

    /// One detector cycle. Returns whether the worker counts as deviating.
    pub fn update_deviation(&mut self, p: Point, g: &WarehouseGraph, cfg: &DeviationConfig) -> bool {
        self.advance(p, g, cfg);
        if self.inside_allowed_area(p, g, cfg) {
            self.outside_counter = 0;
        } else {
            self.outside_counter = self.outside_counter.saturating_add(1);
        }
        self.is_deviating(cfg)
    }

    pub fn is_deviating(&self, cfg: &DeviationConfig) -> bool {
        self.outside_counter >= cfg.consecutive_cycles
    }
}

pub(crate) fn inside_ellipse(p: Point, f1: Point, f2: Point, r: f64) -> bool {
    p.dist(f1) + p.dist(f2) <= f1.dist(f2) + 2.0 * r
}
