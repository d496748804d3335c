use crate::geom::{heading_change, Point};
use crate::graph::{NodeId, WarehouseGraph};

use super::IntentionError;

/// Constant-velocity prediction: from the node nearest to `p_now`, keep
/// stepping to the unvisited neighbor that changes heading the least.
/// Stops early when no unvisited neighbor remains.
pub fn shir_predict(
    p_prev: Point,
    p_now: Point,
    g: &WarehouseGraph,
    horizon: usize,
) -> Result<Vec<NodeId>, IntentionError> {
    let step = p_now.sub(p_prev);
    if step.norm() <= 1e-9 {
        return Err(IntentionError::ZeroDisplacement(step.norm()));
    }
    let mut heading = step.heading();
    let mut cur = g.nearest_node(p_now);
    let mut seq = vec![cur];
    for _ in 0..horizon {
        let here = g.pos(cur);
        let best = g
            .neighbors(cur)
            .filter(|(v, _)| !seq.contains(v))
            .map(|(v, _)| (v, g.pos(v).sub(here).heading()))
            .min_by(|a, b| {
                heading_change(heading, a.1)
                    .total_cmp(&heading_change(heading, b.1))
                    .then(a.0.cmp(&b.0))
            });
        match best {
            Some((v, h)) => {
                seq.push(v);
                heading = h;
                cur = v;
            }
            None => break,
        }
    }
    if seq.len() == 1 && horizon > 0 {
        return Err(IntentionError::DeadEnd);
    }
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeDoc, LayoutDoc, NodeDoc, NodeKind};

    fn graph(points: &[(f64, f64)], edges: &[(u32, u32)]) -> WarehouseGraph {
        WarehouseGraph::from_doc(&LayoutDoc {
            nodes: points
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| NodeDoc { id: NodeId(i as u32), x, y, kind: NodeKind::Road })
                .collect(),
            edges: edges.iter().map(|&(a, b)| EdgeDoc { a: NodeId(a), b: NodeId(b) }).collect(),
            stations: vec![],
        })
        .unwrap()
    }

    #[test]
    fn corridor_followed() {
        let g = graph(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)], &[(0, 1), (1, 2), (2, 3)]);
        let seq = shir_predict(Point::new(-0.4, 0.0), Point::new(0.0, 0.0), &g, 10).unwrap();
        assert_eq!(seq, vec![NodeId(0), NodeId(1), NodeId(2), NodeId(3)]);
    }

    #[test]
    fn junction_prefers_small_turn() {
        // From node 1 heading east: left branch at +30 degrees, right at -90.
        let a = 30f64.to_radians();
        let g = graph(
            &[(0.0, 0.0), (1.0, 0.0), (1.0 + a.cos(), a.sin()), (1.0, -1.0)],
            &[(0, 1), (1, 2), (1, 3)],
        );
        let seq = shir_predict(Point::new(0.5, 0.0), Point::new(0.9, 0.0), &g, 1).unwrap();
        assert_eq!(seq, vec![NodeId(1), NodeId(2)]);
    }

    #[test]
    fn stationary_is_error() {
        let g = graph(&[(0.0, 0.0), (1.0, 0.0)], &[(0, 1)]);
        let p = Point::new(0.2, 0.0);
        assert!(matches!(shir_predict(p, p, &g, 3), Err(IntentionError::ZeroDisplacement(_))));
    }

    #[test]
    fn dead_end_truncates() {
        let g = graph(&[(0.0, 0.0), (1.0, 0.0)], &[(0, 1)]);
        let seq = shir_predict(Point::new(-0.5, 0.0), Point::new(0.0, 0.0), &g, 5).unwrap();
        assert_eq!(seq, vec![NodeId(0), NodeId(1)]);
    }
}
