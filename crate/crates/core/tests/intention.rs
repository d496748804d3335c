mod common;

use fleet_core::graph::all_pairs_distances;
use fleet_core::intention::{
    alternative_positions, modulated_distances, observation_vector, AssociationConfig, DecodeMode, DeviationConfig,
    GoalHmm, ObservationVector, PathTracker, DEFAULT_ALPHA,
};
use fleet_core::{NodeId, Point};
use proptest::prelude::*;

fn obs(values: Vec<f64>) -> ObservationVector {
    ObservationVector { values, clamped: 0 }
}

// ---- observation ----------------------------------------------------------

#[test]
fn observation_by_hand_on_a_line() {
    // Goals at both ends of a 5-node line; the worker steps from x=1 to x=2.
    // With single-node association the four alternatives land on nodes
    // 2, 1, 0, 1, so toward node 4 the move is the best one and toward
    // node 0 the worst.
    let g = common::line(5, 1.0);
    let f = all_pairs_distances(&g);
    let goals = common::ids(&[0, 4]);
    let alts = alternative_positions(Point::new(1.0, 0.0), Point::new(2.0, 0.0), 4, 1e-9).unwrap();
    let assoc = AssociationConfig { k: 1, epsilon: 0.05 };
    let m = modulated_distances(&g, &f, &goals, Point::new(2.0, 0.0), &alts, &assoc);
    assert_eq!(m.actual, vec![2.0, 2.0]);
    let o = observation_vector(&m);
    assert_eq!(o.values, vec![0.0, 1.0]);
    assert_eq!(o.clamped, 0);
}

#[test]
fn straight_line_walks_never_clamp() {
    let g = common::line(12, 1.0);
    let f = all_pairs_distances(&g);
    let goals = common::ids(&[0, 5, 11]);
    for k in [1, 2, 4] {
        let assoc = AssociationConfig { k, epsilon: 0.05 };
        let mut x = 0.2;
        while x + 0.3 < 11.0 {
            let (a, b) = (Point::new(x, 0.0), Point::new(x + 0.3, 0.0));
            let alts = alternative_positions(a, b, 8, 1e-9).unwrap();
            let m = modulated_distances(&g, &f, &goals, b, &alts, &assoc);
            let o = observation_vector(&m);
            assert_eq!(o.clamped, 0, "k={k} x={x}");
            x += 0.3;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn observations_stay_in_unit_interval(
        x in 0.0..9.0f64, y in 0.0..9.0f64,
        heading in 0.0..std::f64::consts::TAU, step in 0.05..1.5f64,
        goals in proptest::sample::subsequence((0u32..100).collect::<Vec<_>>(), 2..6),
        k in 1usize..6, n_alt in 2usize..12,
    ) {
        let g = common::grid(10, 10, 1.0);
        let f = all_pairs_distances(&g);
        let goals: Vec<NodeId> = goals.into_iter().map(NodeId).collect();
        let a = Point::new(x, y);
        let b = Point::new(x + step * heading.cos(), y + step * heading.sin());
        let alts = alternative_positions(a, b, n_alt, 1e-9).unwrap();
        prop_assert_eq!(alts[0], b);
        let m = modulated_distances(&g, &f, &goals, b, &alts, &AssociationConfig { k, epsilon: 0.05 });
        let o = observation_vector(&m);
        prop_assert_eq!(o.len(), goals.len());
        for v in o.values {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        // The actual move is one of the alternatives, so nothing needs clamping.
        prop_assert_eq!(o.clamped, 0);
    }
}

// ---- goal HMM ---------------------------------------------------------------

#[test]
fn transition_rows() {
    for g in 2..8 {
        let h = GoalHmm::new(g, DEFAULT_ALPHA, DecodeMode::Viterbi).unwrap();
        for (i, row) in h.transition().iter().enumerate() {
            assert_eq!(row[i], 0.823);
            for (j, &t) in row.iter().enumerate() {
                if i != j {
                    assert_eq!(t, (1.0 - 0.823) / (g - 1) as f64);
                }
            }
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

/// Textbook normalized forward filter with the same emission model.
fn forward_oracle(alpha: f64, floor: f64, history: &[Vec<f64>]) -> Vec<f64> {
    let n = history[0].len();
    let t = |i: usize, j: usize| if i == j { alpha } else { (1.0 - alpha) / (n - 1) as f64 };
    let mut b = vec![1.0 / n as f64; n];
    for o in history {
        let s: f64 = o.iter().map(|v| v + floor).sum();
        let mut next: Vec<f64> =
            (0..n).map(|j| (0..n).map(|i| b[i] * t(i, j)).sum::<f64>() * (o[j] + floor) / s).collect();
        let z: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= z);
        b = next;
    }
    b
}

proptest! {
    #[test]
    fn forward_mode_matches_oracle(history in proptest::collection::vec(proptest::collection::vec(0.0..1.0f64, 4), 1..30)) {
        let mut h = GoalHmm::new(4, DEFAULT_ALPHA, DecodeMode::Forward).unwrap();
        for o in &history {
            h.update(obs(o.clone())).unwrap();
        }
        let want = forward_oracle(DEFAULT_ALPHA, 1e-3, &history);
        for (a, b) in h.belief().iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-12, "{:?} vs {:?}", h.belief(), want);
        }
        let again = h.recompute();
        prop_assert_eq!(again.as_slice(), h.belief());
    }

    #[test]
    fn belief_is_a_distribution(
        n in 2usize..7,
        seq in proptest::collection::vec(proptest::collection::vec(0.0..1.0f64, 7), 1..50),
        viterbi in any::<bool>(),
    ) {
        let mode = if viterbi { DecodeMode::Viterbi } else { DecodeMode::Forward };
        let mut h = GoalHmm::new(n, DEFAULT_ALPHA, mode).unwrap();
        for o in seq {
            let b = h.update(obs(o[..n].to_vec())).unwrap();
            prop_assert!((b.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(b.iter().all(|&x| x >= 0.0));
        }
    }
}

#[test]
fn rejects_wrong_dimension() {
    let mut h = GoalHmm::new(3, DEFAULT_ALPHA, DecodeMode::Viterbi).unwrap();
    assert!(h.update(obs(vec![0.5, 0.5])).is_err());
    assert!(GoalHmm::new(1, DEFAULT_ALPHA, DecodeMode::Viterbi).is_err());
}

// ---- deviation detector -----------------------------------------------------

fn segment_tracker() -> (fleet_core::WarehouseGraph, PathTracker) {
    let g = common::graph(&[(0.0, 0.0), (2.0, 0.0), (4.0, 0.0)], &[(0, 1), (1, 2)]);
    (g, PathTracker::new(common::ids(&[0, 1, 2])))
}

#[test]
fn ellipse_boundary_cases() {
    let (g, t) = segment_tracker();
    let cfg = DeviationConfig::default();
    assert_eq!(cfg.r, 0.25);
    assert!(t.inside_allowed_area(Point::new(1.0, 0.7), &g, &cfg));
    assert!(!t.inside_allowed_area(Point::new(1.0, 0.8), &g, &cfg));
    assert!(t.inside_allowed_area(Point::new(0.0, 0.0), &g, &cfg));
    assert!(t.inside_allowed_area(Point::new(2.0, 0.0), &g, &cfg));
    assert!(t.inside_allowed_area(Point::new(-0.25, 0.0), &g, &cfg));
    assert!(!t.inside_allowed_area(Point::new(-0.26, 0.0), &g, &cfg));
}

#[test]
fn debounce_needs_four_consecutive_cycles() {
    let (g, mut t) = segment_tracker();
    let cfg = DeviationConfig::default();
    let out = Point::new(1.0, 0.8);
    let inside = Point::new(1.0, 0.0);
    for _ in 0..3 {
        assert!(!t.update_deviation(out, &g, &cfg));
    }
    assert!(!t.update_deviation(inside, &g, &cfg));
    assert_eq!(t.outside_counter(), 0);
    for i in 1..=4 {
        assert_eq!(t.update_deviation(out, &g, &cfg), i == 4, "cycle {i}");
    }
    assert!(t.update_deviation(out, &g, &cfg));
    assert!(!t.update_deviation(inside, &g, &cfg));
}

proptest! {
    #[test]
    fn ellipse_matches_focal_sum(x in -1.0..3.0f64, y in -1.0..1.0f64) {
        let (g, t) = segment_tracker();
        let cfg = DeviationConfig::default();
        let p = Point::new(x, y);
        let sum = p.dist(Point::new(0.0, 0.0)) + p.dist(Point::new(2.0, 0.0));
        prop_assert_eq!(t.inside_allowed_area(p, &g, &cfg), sum <= 2.5);
    }
}
