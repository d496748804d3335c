//! The bundled demo warehouse: a 19 x 12 node floor with 228 ground nodes and
//! 348 edges. Storage columns are reachable only sideways from the adjacent
//! cross aisles; the four corners carry the auxiliary goal markers.

use crate::graph::{EdgeDoc, LayoutDoc, NodeDoc, NodeId, NodeKind, StationDoc, WarehouseGraph};

pub const COLS: u32 = 19;
pub const ROWS: u32 = 12;
pub const SPACING: f64 = 1.25;

/// Columns without vertical edges; their interior rows hold racks.
pub const STORAGE_COLS: [u32; 7] = [1, 4, 7, 10, 13, 16, 18];
pub const STATION_COLS: [u32; 3] = [4, 10, 16];

pub fn node_at(row: u32, col: u32) -> NodeId {
    NodeId(row * COLS + col)
}

fn kind_of(row: u32, col: u32) -> NodeKind {
    let storage_col = STORAGE_COLS.contains(&col);
    let edge_row = row == 0 || row == ROWS - 1;
    let corner = edge_row && (col == 0 || col == COLS - 1);
    if corner {
        NodeKind::GoalMarker
    } else if row == ROWS - 1 && STATION_COLS.contains(&col) {
        NodeKind::PickingStation
    } else if edge_row || !storage_col {
        NodeKind::Road
    } else if row == 1 || row == ROWS - 2 {
        NodeKind::ChargingStation
    } else {
        NodeKind::Storage
    }
}

pub fn demo_layout_doc() -> LayoutDoc {
    let mut nodes = Vec::new();
    for row in 0..ROWS {
        for col in 0..COLS {
            nodes.push(NodeDoc {
                id: node_at(row, col),
                x: col as f64 * SPACING,
                y: row as f64 * SPACING,
                kind: kind_of(row, col),
            });
        }
    }
    let mut edges = Vec::new();
    for row in 0..ROWS {
        for col in 0..COLS - 1 {
            edges.push(EdgeDoc { a: node_at(row, col), b: node_at(row, col + 1) });
        }
    }
    for col in (0..COLS).filter(|c| !STORAGE_COLS.contains(c)) {
        for row in 0..ROWS - 1 {
            edges.push(EdgeDoc { a: node_at(row, col), b: node_at(row + 1, col) });
        }
    }
    let stations = STATION_COLS
        .iter()
        .map(|&c| StationDoc {
            head: node_at(ROWS - 1, c),
            queue: vec![node_at(ROWS - 1, c - 2), node_at(ROWS - 1, c - 1)],
        })
        .collect();
    LayoutDoc { nodes, edges, stations }
}

pub fn demo_layout() -> WarehouseGraph {
    WarehouseGraph::from_doc(&demo_layout_doc()).expect("demo layout is valid")
}

/// Corner goal markers, in a fixed order.
pub fn demo_goals() -> Vec<NodeId> {
    vec![
        node_at(0, 0),
        node_at(0, COLS - 1),
        node_at(ROWS - 1, 0),
        node_at(ROWS - 1, COLS - 1),
    ]
}
