//! Warehouse road graph: node taxonomy, adjacency, the all-pairs road distance
//! matrix and its recomputation when edges get blocked.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Point;

/// Dense index of a ground node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u32);

/// Every kind is a traversable ground node; the kind only tags its role.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Road,
    Storage,
    PickingStation,
    ChargingStation,
    GoalMarker,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub pos: Point,
    pub kind: NodeKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub a: NodeId,
    pub b: NodeId,
    pub length: f64,
}

impl Edge {
    pub fn other(&self, n: NodeId) -> NodeId {
        if self.a == n {
            self.b
        } else {
            self.a
        }
    }
}

/// A picking station head and the ordered queue leading into it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StationDoc {
    pub head: NodeId,
    /// Queue nodes ordered from the entry toward the head, head excluded.
    pub queue: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
    pub kind: NodeKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeDoc {
    pub a: NodeId,
    pub b: NodeId,
}

/// On-disk layout document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutDoc {
    pub nodes: Vec<NodeDoc>,
    pub edges: Vec<EdgeDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stations: Vec<StationDoc>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ValidationError {
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("node ids are not dense: missing {0}")]
    SparseIds(NodeId),
    #[error("node {0} has a non-finite position")]
    NonFinite(NodeId),
    #[error("edge {index} references missing node {node}")]
    DanglingEdge { index: usize, node: NodeId },
    #[error("edge {index} is a self loop on {node}")]
    SelfLoop { index: usize, node: NodeId },
    #[error("duplicate edge {a}-{b}")]
    DuplicateEdge { a: NodeId, b: NodeId },
    #[error("edge {a}-{b} has zero length")]
    ZeroLength { a: NodeId, b: NodeId },
    #[error("graph is disconnected: {0} unreachable from n0")]
    Disconnected(NodeId),
    #[error("storage node {0} has no adjacent road node")]
    IsolatedStorage(NodeId),
    #[error("station references invalid node {0}")]
    BadStation(NodeId),
    #[error("layout has no nodes")]
    Empty,
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("layout parse error: {0}")]
    Parse(String),
    #[error("invalid layout: {0}")]
    Validation(#[from] ValidationError),
    #[error("unknown edge {0:?}")]
    UnknownEdge(EdgeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("{to} is unreachable from {from}")]
    Unreachable { from: NodeId, to: NodeId },
}

#[derive(Clone, Debug)]
pub struct WarehouseGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    /// Per node: (neighbor, edge) sorted by neighbor id.
    adjacency: Vec<Vec<(NodeId, EdgeId)>>,
    blocked: BTreeSet<EdgeId>,
    stations: Vec<StationDoc>,
}

impl WarehouseGraph {
    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let doc: LayoutDoc =
            serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
        Self::from_doc(&doc)
    }

    pub fn from_doc(doc: &LayoutDoc) -> Result<Self, GraphError> {
        if doc.nodes.is_empty() {
            return Err(ValidationError::Empty.into());
        }
        let n = doc.nodes.len();
        let mut slots: Vec<Option<Node>> = vec![None; n];
        for nd in &doc.nodes {
            let idx = nd.id.index();
            if idx >= n {
                // Some lower id must be missing.
                let missing = (0..n).find(|i| !doc.nodes.iter().any(|m| m.id.index() == *i));
                return Err(ValidationError::SparseIds(NodeId(missing.unwrap_or(0) as u32)).into());
            }
            if slots[idx].is_some() {
                return Err(ValidationError::DuplicateNode(nd.id).into());
            }
            let pos = Point::new(nd.x, nd.y);
            if !pos.is_finite() {
                return Err(ValidationError::NonFinite(nd.id).into());
            }
            slots[idx] = Some(Node { id: nd.id, pos, kind: nd.kind });
        }
        let nodes: Vec<Node> = slots.into_iter().map(|s| s.expect("dense ids")).collect();

        let mut edges = Vec::with_capacity(doc.edges.len());
        let mut seen = BTreeSet::new();
        let mut adjacency = vec![Vec::new(); n];
        for (index, ed) in doc.edges.iter().enumerate() {
            for node in [ed.a, ed.b] {
                if node.index() >= n {
                    return Err(ValidationError::DanglingEdge { index, node }.into());
                }
            }
            if ed.a == ed.b {
                return Err(ValidationError::SelfLoop { index, node: ed.a }.into());
            }
            let key = (ed.a.min(ed.b), ed.a.max(ed.b));
            if !seen.insert(key) {
                return Err(ValidationError::DuplicateEdge { a: key.0, b: key.1 }.into());
            }
            let length = nodes[ed.a.index()].pos.dist(nodes[ed.b.index()].pos);
            if length <= 0.0 {
                return Err(ValidationError::ZeroLength { a: ed.a, b: ed.b }.into());
            }
            let id = EdgeId(index as u32);
            adjacency[ed.a.index()].push((ed.b, id));
            adjacency[ed.b.index()].push((ed.a, id));
            edges.push(Edge { id, a: ed.a, b: ed.b, length });
        }
        for adj in &mut adjacency {
            adj.sort();
        }

        for st in &doc.stations {
            for node in st.queue.iter().chain(std::iter::once(&st.head)) {
                if node.index() >= n {
                    return Err(ValidationError::BadStation(*node).into());
                }
            }
        }

        let g = Self {
            nodes,
            edges,
            adjacency,
            blocked: BTreeSet::new(),
            stations: doc.stations.clone(),
        };
        g.check_connected()?;
        for node in &g.nodes {
            if node.kind == NodeKind::Storage
                && !g.adjacency[node.id.index()]
                    .iter()
                    .any(|(m, _)| g.nodes[m.index()].kind == NodeKind::Road)
            {
                return Err(ValidationError::IsolatedStorage(node.id).into());
            }
        }
        Ok(g)
    }

    fn check_connected(&self) -> Result<(), ValidationError> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![NodeId(0)];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(v, e) in &self.adjacency[u.index()] {
                if !self.blocked.contains(&e) && !seen[v.index()] {
                    seen[v.index()] = true;
                    stack.push(v);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(ValidationError::Disconnected(NodeId(i as u32))),
            None => Ok(()),
        }
    }

    pub fn to_doc(&self) -> LayoutDoc {
        LayoutDoc {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDoc { id: n.id, x: n.pos.x, y: n.pos.y, kind: n.kind })
                .collect(),
            edges: self.edges.iter().map(|e| EdgeDoc { a: e.a, b: e.b }).collect(),
            stations: self.stations.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("layout serializes")
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn stations(&self) -> &[StationDoc] {
        &self.stations
    }

    pub fn contains(&self, n: NodeId) -> bool {
        n.index() < self.nodes.len()
    }

    pub fn pos(&self, n: NodeId) -> Point {
        self.nodes[n.index()].pos
    }

    pub fn kind(&self, n: NodeId) -> NodeKind {
        self.nodes[n.index()].kind
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| n.kind == kind).map(|n| n.id).collect()
    }

    pub fn edge(&self, e: EdgeId) -> Option<&Edge> {
        self.edges.get(e.0 as usize)
    }

    pub fn find_edge(&self, a: NodeId, b: NodeId) -> Option<EdgeId> {
        self.adjacency
            .get(a.index())?
            .iter()
            .find(|(m, _)| *m == b)
            .map(|(_, e)| *e)
    }

    pub fn is_blocked(&self, e: EdgeId) -> bool {
        self.blocked.contains(&e)
    }

    pub fn blocked_edges(&self) -> &BTreeSet<EdgeId> {
        &self.blocked
    }

    /// Neighbors over non-blocked edges with edge lengths, by ascending id.
    pub fn neighbors(&self, n: NodeId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.adjacency[n.index()]
            .iter()
            .filter(|(_, e)| !self.blocked.contains(e))
            .map(|&(m, e)| (m, self.edges[e.0 as usize].length))
    }

    pub fn are_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.find_edge(a, b).is_some_and(|e| !self.blocked.contains(&e))
    }

    pub fn edge_length(&self, a: NodeId, b: NodeId) -> Option<f64> {
        self.find_edge(a, b).map(|e| self.edges[e.0 as usize].length)
    }

    pub fn block_edge(&mut self, e: EdgeId) -> Result<(), GraphError> {
        if e.0 as usize >= self.edges.len() {
            return Err(GraphError::UnknownEdge(e));
        }
        self.blocked.insert(e);
        Ok(())
    }

    pub fn restore_edge(&mut self, e: EdgeId) -> Result<(), GraphError> {
        if e.0 as usize >= self.edges.len() {
            return Err(GraphError::UnknownEdge(e));
        }
        self.blocked.remove(&e);
        Ok(())
    }

    /// The `k` nodes closest to `p`, ascending by distance then id.
    pub fn nearest_nodes(&self, p: Point, k: usize) -> Vec<(NodeId, f64)> {
        let mut all: Vec<(NodeId, f64)> = self.nodes.iter().map(|n| (n.id, n.pos.dist(p))).collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k.max(1));
        all
    }

    pub fn nearest_node(&self, p: Point) -> NodeId {
        self.nearest_nodes(p, 1)[0].0
    }

    /// Nodes whose position lies within `radius` of `p` (inclusive).
    pub fn nodes_within(&self, p: Point, radius: f64) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.pos.dist(p) <= radius + 1e-9)
            .map(|n| n.id)
            .collect()
    }

    /// Dijkstra over the nodes accepted by `allowed`; returns the
    /// lexicographically smallest among equal-cost paths.
    pub fn restricted_path(
        &self,
        from: NodeId,
        to: NodeId,
        allowed: impl Fn(NodeId) -> bool,
    ) -> Option<Vec<NodeId>> {
        if !allowed(from) || !allowed(to) {
            return None;
        }
        let dist = dijkstra(self, to, &allowed);
        if !dist[from.index()].is_finite() {
            return None;
        }
        Some(walk_down(self, &dist, from, to, &allowed))
    }
}

/// All-pairs road distances with a generation counter.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
    generation: u64,
}

impl DistanceMatrix {
    pub fn get(&self, a: NodeId, b: NodeId) -> f64 {
        self.data[a.index() * self.n + b.index()]
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn row(&self, a: NodeId) -> &[f64] {
        &self.data[a.index() * self.n..(a.index() + 1) * self.n]
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: NodeId,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(g: &WarehouseGraph, source: NodeId, allowed: &impl Fn(NodeId) -> bool) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; g.node_count()];
    let mut heap = BinaryHeap::new();
    dist[source.index()] = 0.0;
    heap.push(HeapItem { dist: 0.0, node: source });
    while let Some(HeapItem { dist: d, node: u }) = heap.pop() {
        if d > dist[u.index()] {
            continue;
        }
        for (v, w) in g.neighbors(u) {
            if !allowed(v) {
                continue;
            }
            let nd = d + w;
            if nd < dist[v.index()] {
                dist[v.index()] = nd;
                heap.push(HeapItem { dist: nd, node: v });
            }
        }
    }
    dist
}

/// Shortest road distances between every pair of nodes, blocked edges excluded.
pub fn all_pairs_distances(g: &WarehouseGraph) -> DistanceMatrix {
    distances_with_generation(g, 0)
}

fn distances_with_generation(g: &WarehouseGraph, generation: u64) -> DistanceMatrix {
    let n = g.node_count();
    let mut data = Vec::with_capacity(n * n);
    for s in g.node_ids() {
        data.extend(dijkstra(g, s, &|_| true));
    }
    // Mirror the upper triangle so F is exactly symmetric regardless of
    // summation order along the two directions.
    for i in 0..n {
        for j in (i + 1)..n {
            data[j * n + i] = data[i * n + j];
        }
    }
    DistanceMatrix { n, data, generation }
}

/// Blocks edge `e` and recomputes the distance matrix.
pub fn invalidate_edge(
    g: &mut WarehouseGraph,
    f: &DistanceMatrix,
    e: EdgeId,
) -> Result<DistanceMatrix, GraphError> {
    g.block_edge(e)?;
    Ok(distances_with_generation(g, f.generation + 1))
}

/// Unblocks edge `e` and recomputes the distance matrix.
pub fn restore_edge(
    g: &mut WarehouseGraph,
    f: &DistanceMatrix,
    e: EdgeId,
) -> Result<DistanceMatrix, GraphError> {
    g.restore_edge(e)?;
    Ok(distances_with_generation(g, f.generation + 1))
}

fn on_shortest(remaining: f64, step: f64, rest: f64) -> bool {
    (step + rest - remaining).abs() <= 1e-9 * remaining.max(1.0)
}

fn walk_down(
    g: &WarehouseGraph,
    to_target: &[f64],
    from: NodeId,
    to: NodeId,
    allowed: &impl Fn(NodeId) -> bool,
) -> Vec<NodeId> {
    let mut path = vec![from];
    let mut u = from;
    while u != to {
        let remaining = to_target[u.index()];
        let next = g
            .neighbors(u)
            .filter(|(v, _)| allowed(*v))
            .find(|&(v, w)| on_shortest(remaining, w, to_target[v.index()]) && to_target[v.index()] < remaining)
            .map(|(v, _)| v)
            .expect("a shortest-path successor exists for finite distances");
        path.push(next);
        u = next;
    }
    path
}

/// Shortest road path `from -> to`; among equal-cost paths the
/// lexicographically smallest node sequence wins.
pub fn shortest_path(
    g: &WarehouseGraph,
    f: &DistanceMatrix,
    from: NodeId,
    to: NodeId,
) -> Result<Vec<NodeId>, GraphError> {
    for n in [from, to] {
        if !g.contains(n) {
            return Err(GraphError::UnknownNode(n));
        }
    }
    if !f.get(from, to).is_finite() {
        return Err(GraphError::Unreachable { from, to });
    }
    // Column `to` of F holds distances to the target (F is symmetric).
    let to_target: Vec<f64> = g.node_ids().map(|v| f.get(v, to)).collect();
    Ok(walk_down(g, &to_target, from, to, &|_| true))
}

pub fn path_length(g: &WarehouseGraph, path: &[NodeId]) -> f64 {
    path.windows(2)
        .map(|w| g.edge_length(w[0], w[1]).unwrap_or(f64::INFINITY))
        .sum()
}

/// Counts of nodes per kind, handy for layout summaries.
pub fn kind_histogram(g: &WarehouseGraph) -> BTreeMap<NodeKind, usize> {
    let mut h = BTreeMap::new();
    for n in g.nodes() {
        *h.entry(n.kind).or_insert(0) += 1;
    }
    h
}
