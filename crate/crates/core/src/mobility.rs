//! Manhattan-grid mobility shared by vehicles and mobile event centers.
//!
//! A walker moves at constant speed along street centerlines. On reaching an
//! intersection it picks one of the incident streets uniformly at random,
//! never the one it arrived on unless that is the only street available.
//!
//! Positions are tracked against an odometer: the walker remembers the
//! odometer reading at which it entered its current edge, so the pose at a
//! given odometer value does not depend on how the distance was split into
//! steps.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::grid::{Axis, EdgeId, GraphPose, StreetGraph, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WalkerKind {
    Vehicle,
    EventCenter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Walker {
    pub id: u32,
    pub kind: WalkerKind,
    speed: f64,
    pose: GraphPose,
    odometer: f64,
    /// Odometer reading when the walker was at the vertex it departed from.
    entry: f64,
}

impl Walker {
    pub fn new(id: u32, kind: WalkerKind, speed: f64, pose: GraphPose, graph: &StreetGraph) -> Self {
        assert!(speed >= 0.0, "walker speed must be non-negative");
        let len = graph.edge(pose.edge).length;
        let offset = pose.offset.clamp(0.0, len);
        let along = if pose.direction > 0 { offset } else { len - offset };
        Self {
            id,
            kind,
            speed,
            pose: GraphPose { offset, ..pose },
            odometer: 0.0,
            entry: -along,
        }
    }

    /// Walker placed uniformly by arc length, facing either way along its edge.
    pub fn spawn<R: Rng + ?Sized>(
        id: u32,
        kind: WalkerKind,
        speed: f64,
        graph: &StreetGraph,
        rng: &mut R,
    ) -> Self {
        let s = rng.random::<f64>() * graph.total_length();
        let (edge, offset) = graph.locate_arclength(s);
        let direction = if rng.random::<bool>() { 1 } else { -1 };
        Self::new(
            id,
            kind,
            speed,
            GraphPose {
                edge,
                offset,
                direction,
            },
            graph,
        )
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn pose(&self) -> &GraphPose {
        &self.pose
    }

    /// Distance travelled since construction.
    pub fn odometer(&self) -> f64 {
        self.odometer
    }

    pub fn position(&self, graph: &StreetGraph) -> Point {
        graph.position(&self.pose)
    }

    /// Direction of travel in the world frame, radians in `[0, 2pi)`.
    pub fn heading(&self, graph: &StreetGraph) -> f64 {
        match (graph.edge(self.pose.edge).axis, self.pose.direction > 0) {
            (Axis::X, true) => 0.0,
            (Axis::Y, true) => FRAC_PI_2,
            (Axis::X, false) => PI,
            (Axis::Y, false) => 3.0 * FRAC_PI_2,
        }
    }

    /// Move forward by `speed * dt`.
    pub fn step<R: Rng + ?Sized>(&mut self, graph: &StreetGraph, dt: f64, rng: &mut R) {
        debug_assert!(dt > 0.0);
        let target = self.odometer + self.speed * dt;
        self.advance_to(graph, target, rng);
    }

    /// Move forward until the odometer reads `target`. Every intersection
    /// crossed on the way draws one turn decision from `rng`.
    pub fn advance_to<R: Rng + ?Sized>(&mut self, graph: &StreetGraph, target: f64, rng: &mut R) {
        if target <= self.odometer {
            return;
        }
        let mut edge = *graph.edge(self.pose.edge);
        let mut along = target - self.entry;
        while along > edge.length {
            self.entry += edge.length;
            let vertex = if self.pose.direction > 0 { edge.b } else { edge.a };
            let next = choose_exit(graph, vertex, self.pose.edge, rng);
            edge = *graph.edge(next);
            self.pose.edge = next;
            self.pose.direction = if edge.a == vertex { 1 } else { -1 };
            along = target - self.entry;
        }
        let along = along.clamp(0.0, edge.length);
        self.pose.offset = if self.pose.direction > 0 {
            along
        } else {
            edge.length - along
        };
        self.odometer = target;
    }
}

/// Uniform choice among the edges at `vertex` other than `arrived_on`; a dead
/// end sends the walker back the way it came.
fn choose_exit<R: Rng + ?Sized>(
    graph: &StreetGraph,
    vertex: VertexId,
    arrived_on: EdgeId,
    rng: &mut R,
) -> EdgeId {
    let incident = graph.incident(vertex);
    let options = incident.len() - usize::from(incident.contains(&arrived_on));
    if options == 0 {
        return arrived_on;
    }
    let pick = rng.random_range(0..options);
    *incident
        .iter()
        .filter(|&&e| e != arrived_on)
        .nth(pick)
        .expect("pick within option count")
}

/// `count` walkers placed independently and uniformly along the streets.
pub fn spawn_uniform<R: Rng + ?Sized>(
    graph: &StreetGraph,
    count: usize,
    speed: f64,
    kind: WalkerKind,
    rng: &mut R,
) -> Vec<Walker> {
    (0..count)
        .map(|i| Walker::spawn(i as u32, kind, speed, graph, rng))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> StreetGraph {
        StreetGraph::build(11, 11, 100.0, 20.0).unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn spawn_zero() {
        assert!(spawn_uniform(&grid(), 0, 15.0, WalkerKind::Vehicle, &mut rng(1)).is_empty());
    }

    #[test]
    fn spawned_speed_is_exact() {
        let ws = spawn_uniform(&grid(), 500, 15.0, WalkerKind::Vehicle, &mut rng(2));
        assert!(ws.iter().all(|w| w.speed() == 15.0));
    }

    #[test]
    fn spawn_per_edge_counts_within_three_sigma() {
        let g = StreetGraph::build(2, 2, 100.0, 20.0).unwrap();
        let n = 100_000usize;
        let ws = spawn_uniform(&g, n, 15.0, WalkerKind::Vehicle, &mut rng(3));
        let mut counts = [0usize; 4];
        let mut forward = 0usize;
        for w in &ws {
            counts[w.pose().edge as usize] += 1;
            forward += usize::from(w.pose().direction > 0);
        }
        let mean = n as f64 / 4.0;
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 3.0 * sigma, "{counts:?}");
        }
        let half_sigma = (n as f64 * 0.25).sqrt();
        assert!((forward as f64 - n as f64 / 2.0).abs() < 3.0 * half_sigma);
    }

    #[test]
    fn heading_examples() {
        let g = grid();
        // edge 0 runs east, edge 110 is the first northbound edge
        let east = Walker::new(0, WalkerKind::Vehicle, 1.0, GraphPose { edge: 0, offset: 5.0, direction: 1 }, &g);
        let west = Walker::new(0, WalkerKind::Vehicle, 1.0, GraphPose { edge: 0, offset: 5.0, direction: -1 }, &g);
        let north = Walker::new(0, WalkerKind::Vehicle, 1.0, GraphPose { edge: 110, offset: 5.0, direction: 1 }, &g);
        let south = Walker::new(0, WalkerKind::Vehicle, 1.0, GraphPose { edge: 110, offset: 5.0, direction: -1 }, &g);
        assert_eq!(g.edge(110).axis, Axis::Y);
        assert_eq!(east.heading(&g), 0.0);
        assert_eq!(west.heading(&g), PI);
        assert_eq!(north.heading(&g), FRAC_PI_2);
        assert_eq!(south.heading(&g), 3.0 * FRAC_PI_2);
    }

    #[test]
    fn crossing_carries_residual_distance() {
        let g = grid();
        let mut w = Walker::new(
            0,
            WalkerKind::Vehicle,
            15.0,
            GraphPose { edge: 0, offset: 99.5, direction: 1 },
            &g,
        );
        w.step(&g, 0.05, &mut rng(4));
        let vertex = g.edge(0).b;
        let here = w.position(&g);
        assert_ne!(w.pose().edge, 0);
        assert!((here.distance(g.vertex(vertex)) - 0.25).abs() < 1e-9);
    }

    #[test]
    fn turn_probabilities_at_four_way() {
        // Arrive at the centre vertex (5,5) from the south: back-edge never chosen.
        let g = grid();
        let centre: VertexId = 5 * 11 + 5;
        let from_south = g
            .incident(centre)
            .iter()
            .copied()
            .find(|&e| g.edge(e).axis == Axis::Y && g.edge(e).b == centre)
            .unwrap();
        let mut r = rng(5);
        let mut hits = std::collections::BTreeMap::new();
        for _ in 0..30_000 {
            let e = choose_exit(&g, centre, from_south, &mut r);
            *hits.entry(e).or_insert(0u32) += 1;
        }
        assert_eq!(hits.len(), 3);
        assert!(!hits.contains_key(&from_south));
        for &c in hits.values() {
            assert!((f64::from(c) / 30_000.0 - 1.0 / 3.0).abs() < 0.02);
        }
    }

    #[test]
    fn corner_forces_the_other_edge() {
        let g = grid();
        let corner: VertexId = 0;
        let arrived = g.incident(corner)[0];
        let other = g.incident(corner)[1];
        let mut r = rng(6);
        for _ in 0..100 {
            assert_eq!(choose_exit(&g, corner, arrived, &mut r), other);
        }
    }

    #[test]
    fn stationary_walker_never_moves() {
        let g = grid();
        let mut w = Walker::spawn(0, WalkerKind::EventCenter, 0.0, &g, &mut rng(7));
        let start = w.position(&g);
        let mut r = rng(8);
        for _ in 0..100 {
            w.step(&g, 0.05, &mut r);
        }
        assert_eq!(w.position(&g), start);
    }

    #[test]
    fn stepping_and_jumping_agree() {
        let g = grid();
        let mut a = Walker::spawn(0, WalkerKind::Vehicle, 15.0, &g, &mut rng(9));
        let mut b = a.clone();
        let (mut ra, mut rb) = (rng(10), rng(10));
        for k in 1..=4000u32 {
            a.advance_to(&g, 15.0 * (f64::from(k) * 0.05), &mut ra);
        }
        b.advance_to(&g, 15.0 * (4000.0 * 0.05), &mut rb);
        assert_eq!(a.pose().edge, b.pose().edge);
        assert_eq!(a.pose().direction, b.pose().direction);
        assert!((a.pose().offset - b.pose().offset).abs() < 1e-9);
    }

    #[test]
    fn step_moves_exact_path_distance_and_stays_in_corridor() {
        let g = grid();
        let mut r = rng(11);
        let mut w = Walker::spawn(0, WalkerKind::Vehicle, 15.0, &g, &mut r);
        for _ in 0..20_000 {
            let before = w.position(&g);
            w.step(&g, 0.05, &mut r);
            let after = w.position(&g);
            // rectilinear path, no U-turns on this grid
            let l1 = (after.x - before.x).abs() + (after.y - before.y).abs();
            assert!((l1 - 0.75).abs() < 1e-9, "moved {l1}");
            assert!(g.corridor_contains(after));
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let g = grid();
        let run = |seed| {
            let mut r = rng(seed);
            let mut w = Walker::spawn(0, WalkerKind::Vehicle, 15.0, &g, &mut r);
            (0..5000)
                .map(|_| {
                    w.step(&g, 0.05, &mut r);
                    *w.pose()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(12), run(12));
        assert_ne!(run(12), run(13));
    }
}
