use crate::geom::Point;
use crate::graph::{NodeId, WarehouseGraph};

use super::ResourceId;

/// Planner view of the warehouse: positions, traversable neighbors and the
/// symmetric conflict relation.
#[derive(Clone, Debug, PartialEq)]
pub struct ResourceGraph {
    positions: Vec<Point>,
    neighbors: Vec<Vec<(ResourceId, f64)>>,
    conflicts: Vec<Vec<ResourceId>>,
}

/// Every node becomes a resource; resources conflict when their nodes lie
/// within `conflict_radius` of each other.
pub fn build_resource_graph(g: &WarehouseGraph, conflict_radius: f64) -> ResourceGraph {
    let positions: Vec<Point> = g.nodes().iter().map(|n| n.pos).collect();
    let neighbors = g.node_ids().map(|n| g.neighbors(n).collect()).collect();
    let conflicts = (0..positions.len())
        .map(|i| {
            if conflict_radius <= 0.0 {
                return Vec::new();
            }
            (0..positions.len())
                .filter(|&j| j != i && positions[i].dist(positions[j]) <= conflict_radius + 1e-9)
                .map(|j| NodeId(j as u32))
                .collect()
        })
        .collect();
    ResourceGraph { positions, neighbors, conflicts }
}

impl ResourceGraph {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn contains(&self, r: ResourceId) -> bool {
        r.index() < self.positions.len()
    }

    pub fn pos(&self, r: ResourceId) -> Point {
        self.positions[r.index()]
    }

    pub fn neighbors(&self, r: ResourceId) -> &[(ResourceId, f64)] {
        &self.neighbors[r.index()]
    }

    pub fn edge_length(&self, a: ResourceId, b: ResourceId) -> Option<f64> {
        self.neighbors[a.index()].iter().find(|(m, _)| *m == b).map(|(_, l)| *l)
    }

    pub fn are_adjacent(&self, a: ResourceId, b: ResourceId) -> bool {
        self.edge_length(a, b).is_some()
    }

    pub fn conflicts(&self, r: ResourceId) -> &[ResourceId] {
        &self.conflicts[r.index()]
    }

    pub fn in_conflict(&self, a: ResourceId, b: ResourceId) -> bool {
        self.conflicts[a.index()].binary_search(&b).is_ok()
    }

    /// Resources whose node lies within `radius` of `p`, inclusive.
    pub fn within(&self, p: Point, radius: f64) -> Vec<ResourceId> {
        self.positions
            .iter()
            .enumerate()
            .filter(|(_, q)| q.dist(p) <= radius + 1e-9)
            .map(|(i, _)| NodeId(i as u32))
            .collect()
    }

    pub fn distance(&self, a: ResourceId, b: ResourceId) -> f64 {
        self.pos(a).dist(self.pos(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeDoc, LayoutDoc, NodeDoc, NodeKind};

    /// Cross: C = 0 in the middle, A/B/D/E around it at distance 1.
    pub(crate) fn cross() -> WarehouseGraph {
        let pts = [(0.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (1.0, 0.0), (0.0, -1.0)];
        WarehouseGraph::from_doc(&LayoutDoc {
            nodes: pts
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| NodeDoc { id: NodeId(i as u32), x, y, kind: NodeKind::Road })
                .collect(),
            edges: (1..5).map(|i| EdgeDoc { a: NodeId(0), b: NodeId(i) }).collect(),
            stations: vec![],
        })
        .unwrap()
    }

    #[test]
    fn zero_radius_has_no_conflicts() {
        let r = build_resource_graph(&cross(), 0.0);
        assert!((0..5).all(|i| r.conflicts(NodeId(i)).is_empty()));
    }

    #[test]
    fn center_conflicts_with_neighbors() {
        let r = build_resource_graph(&cross(), 1.0);
        assert_eq!(r.conflicts(NodeId(0)), &[NodeId(1), NodeId(2), NodeId(3), NodeId(4)]);
        // Diagonal neighbors sit at sqrt(2) > 1.
        assert_eq!(r.conflicts(NodeId(1)), &[NodeId(0)]);
        assert!(!r.in_conflict(NodeId(0), NodeId(0)));
    }
}
