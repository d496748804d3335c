#![allow(dead_code)]

use fleet_core::graph::{EdgeDoc, LayoutDoc, NodeDoc};
use fleet_core::{NodeId, NodeKind, WarehouseGraph};

/// Open `cols` x `rows` road grid with the given spacing; node id is
/// `row * cols + col`.
pub fn grid(cols: u32, rows: u32, spacing: f64) -> WarehouseGraph {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let id = NodeId(r * cols + c);
            nodes.push(NodeDoc { id, x: c as f64 * spacing, y: r as f64 * spacing, kind: NodeKind::Road });
            if c + 1 < cols {
                edges.push(EdgeDoc { a: id, b: NodeId(id.0 + 1) });
            }
            if r + 1 < rows {
                edges.push(EdgeDoc { a: id, b: NodeId(id.0 + cols) });
            }
        }
    }
    WarehouseGraph::from_doc(&LayoutDoc { nodes, edges, stations: vec![] }).expect("grid is valid")
}

/// Nodes at the given positions joined by the given edges.
pub fn graph(points: &[(f64, f64)], edges: &[(u32, u32)]) -> WarehouseGraph {
    let nodes = points
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| NodeDoc { id: NodeId(i as u32), x, y, kind: NodeKind::Road })
        .collect();
    let edges = edges.iter().map(|&(a, b)| EdgeDoc { a: NodeId(a), b: NodeId(b) }).collect();
    WarehouseGraph::from_doc(&LayoutDoc { nodes, edges, stations: vec![] }).expect("graph is valid")
}

pub fn line(n: u32, spacing: f64) -> WarehouseGraph {
    let pts: Vec<(f64, f64)> = (0..n).map(|i| (i as f64 * spacing, 0.0)).collect();
    let edges: Vec<(u32, u32)> = (1..n).map(|i| (i - 1, i)).collect();
    graph(&pts, &edges)
}

pub fn ids(v: &[u32]) -> Vec<NodeId> {
    v.iter().map(|&i| NodeId(i)).collect()
}
