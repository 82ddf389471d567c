//! Synthetic Manhattan street grid: topology, street-corridor geometry,
//! occlusion by building blocks and placement of observation points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;

/// Maximum distance between two consecutive samples of the line-of-sight test.
pub const LOS_SAMPLE_STEP: f64 = 0.5;

pub type VertexId = u32;
pub type EdgeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    /// Runs along +x (east).
    X,
    /// Runs along +y (north).
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    /// Western (for [`Axis::X`]) or southern (for [`Axis::Y`]) endpoint.
    pub a: VertexId,
    pub b: VertexId,
    pub length: f64,
    pub axis: Axis,
}

impl Edge {
    pub fn other(&self, v: VertexId) -> VertexId {
        if v == self.a {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// A location on the street graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphPose {
    pub edge: EdgeId,
    /// Meters from the edge's first vertex `a`, within `[0, length]`.
    pub offset: f64,
    /// `+1` travels from `a` to `b`, `-1` from `b` to `a`.
    pub direction: i8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationPoint {
    pub id: u32,
    pub position: Point,
}

/// Rectangular nx × ny street grid with the south-west intersection at the
/// origin. Immutable once built.
#[derive(Debug, Clone)]
pub struct StreetGraph {
    nx: u32,
    ny: u32,
    block_length: f64,
    corridor_width: f64,
    vertices: Vec<Point>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<EdgeId>>,
    /// Prefix sums of edge lengths, `cumulative[i]` is the arc length before edge `i`.
    cumulative: Vec<f64>,
}

impl StreetGraph {
    /// Build a grid of `nx` × `ny` intersections spaced `block_length` apart.
    ///
    /// Edges are numbered row by row: all east-west edges first (south to
    /// north, west to east), then all north-south edges (west to east, south
    /// to north).
    pub fn build(nx: u32, ny: u32, block_length: f64, corridor_width: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2x2 intersections, got {nx}x{ny}"
            )));
        }
        if !(block_length.is_finite() && block_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "block length must be positive, got {block_length}"
            )));
        }
        if !(corridor_width > 0.0 && corridor_width < block_length) {
            return Err(Error::InvalidGrid(format!(
                "corridor width must lie in (0, {block_length}), got {corridor_width}"
            )));
        }

        let vid = |ix: u32, iy: u32| iy * nx + ix;
        let mut vertices = Vec::with_capacity((nx * ny) as usize);
        for iy in 0..ny {
            for ix in 0..nx {
                vertices.push(Point::new(
                    f64::from(ix) * block_length,
                    f64::from(iy) * block_length,
                ));
            }
        }

        let mut edges = Vec::new();
        for iy in 0..ny {
            for ix in 0..nx - 1 {
                edges.push(Edge {
                    a: vid(ix, iy),
                    b: vid(ix + 1, iy),
                    length: block_length,
                    axis: Axis::X,
                });
            }
        }
        for ix in 0..nx {
            for iy in 0..ny - 1 {
                edges.push(Edge {
                    a: vid(ix, iy),
                    b: vid(ix, iy + 1),
                    length: block_length,
                    axis: Axis::Y,
                });
            }
        }

        let mut adjacency = vec![Vec::new(); vertices.len()];
        for (id, e) in edges.iter().enumerate() {
            adjacency[e.a as usize].push(id as EdgeId);
            adjacency[e.b as usize].push(id as EdgeId);
        }

        let mut cumulative = Vec::with_capacity(edges.len() + 1);
        let mut acc = 0.0;
        cumulative.push(acc);
        for e in &edges {
            acc += e.length;
            cumulative.push(acc);
        }

        Ok(Self {
            nx,
            ny,
            block_length,
            corridor_width,
            vertices,
            edges,
            adjacency,
            cumulative,
        })
    }

    pub fn nx(&self) -> u32 {
        self.nx
    }

    pub fn ny(&self) -> u32 {
        self.ny
    }

    pub fn block_length(&self) -> f64 {
        self.block_length
    }

    pub fn corridor_width(&self) -> f64 {
        self.corridor_width
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id as usize]
    }

    pub fn vertex(&self, id: VertexId) -> Point {
        self.vertices[id as usize]
    }

    /// Edges incident to a vertex.
    pub fn incident(&self, v: VertexId) -> &[EdgeId] {
        &self.adjacency[v as usize]
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.adjacency[v as usize].len()
    }

    /// Bounding box of the intersections.
    pub fn bounds(&self) -> Rect {
        Rect {
            min: Point::new(0.0, 0.0),
            max: Point::new(
                f64::from(self.nx - 1) * self.block_length,
                f64::from(self.ny - 1) * self.block_length,
            ),
        }
    }

    pub fn area_km2(&self) -> f64 {
        self.bounds().area() / 1.0e6
    }

    pub fn total_length(&self) -> f64 {
        *self.cumulative.last().expect("grid has edges")
    }

    pub fn position(&self, pose: &GraphPose) -> Point {
        let e = self.edge(pose.edge);
        let a = self.vertex(e.a);
        match e.axis {
            Axis::X => Point::new(a.x + pose.offset, a.y),
            Axis::Y => Point::new(a.x, a.y + pose.offset),
        }
    }

    /// Map an arc length in `[0, total_length)` onto an edge and offset,
    /// walking the edges in id order.
    pub fn locate_arclength(&self, s: f64) -> (EdgeId, f64) {
        let s = s.clamp(0.0, self.total_length());
        // first index with cumulative > s, minus one
        let idx = self.cumulative.partition_point(|&c| c <= s);
        let edge = idx.saturating_sub(1).min(self.edges.len() - 1);
        let offset = (s - self.cumulative[edge]).min(self.edges[edge].length);
        (edge as EdgeId, offset)
    }

    fn in_east_west_street(&self, p: Point) -> Option<u32> {
        let half = 0.5 * self.corridor_width;
        let max_x = f64::from(self.nx - 1) * self.block_length;
        if p.x < 0.0 || p.x > max_x {
            return None;
        }
        let j = (p.y / self.block_length).round().clamp(0.0, f64::from(self.ny - 1));
        ((p.y - j * self.block_length).abs() <= half).then_some(j as u32)
    }

    fn in_north_south_street(&self, p: Point) -> Option<u32> {
        let half = 0.5 * self.corridor_width;
        let max_y = f64::from(self.ny - 1) * self.block_length;
        if p.y < 0.0 || p.y > max_y {
            return None;
        }
        let i = (p.x / self.block_length).round().clamp(0.0, f64::from(self.nx - 1));
        ((p.x - i * self.block_length).abs() <= half).then_some(i as u32)
    }

    /// Whether `p` lies in the union of street rectangles. Boundary counts as inside.
    pub fn corridor_contains(&self, p: Point) -> bool {
        self.in_east_west_street(p).is_some() || self.in_north_south_street(p).is_some()
    }

    /// True iff the segment `a`-`b` stays inside the street corridor, tested
    /// by sampling at most [`LOS_SAMPLE_STEP`] apart.
    pub fn line_of_sight(&self, a: Point, b: Point) -> bool {
        // A whole street is one convex rectangle.
        if let (Some(i), Some(j)) = (self.in_east_west_street(a), self.in_east_west_street(b)) {
            if i == j {
                return true;
            }
        }
        if let (Some(i), Some(j)) = (self.in_north_south_street(a), self.in_north_south_street(b))
        {
            if i == j {
                return true;
            }
        }

        // Sample from the lexicographically smaller endpoint so the answer is symmetric.
        let (from, to) = if (a.x, a.y) <= (b.x, b.y) { (a, b) } else { (b, a) };
        let n = (from.distance(to) / LOS_SAMPLE_STEP).ceil().max(1.0) as u32;
        (0..=n).all(|i| self.corridor_contains(from.lerp(to, f64::from(i) / f64::from(n))))
    }

    /// Points of observation spaced `spacing` apart along every centerline.
    ///
    /// Each edge contributes its endpoints and every interior multiple of
    /// `spacing`; intersections are emitted once, the first time an edge
    /// touches them. Ids follow `(edge_id, offset)` order.
    pub fn place_observation_points(&self, spacing: f64) -> Result<Vec<ObservationPoint>> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::config(
                "observation_spacing",
                format!("must be positive, got {spacing}"),
            ));
        }
        const EPS: f64 = 1e-9;
        let mut seen = vec![false; self.vertices.len()];
        let mut out = Vec::new();
        let push = |out: &mut Vec<ObservationPoint>, p: Point| {
            let id = out.len() as u32;
            out.push(ObservationPoint { id, position: p });
        };
        for (id, e) in self.edges.iter().enumerate() {
            let pose = |offset| GraphPose {
                edge: id as EdgeId,
                offset,
                direction: 1,
            };
            if !std::mem::replace(&mut seen[e.a as usize], true) {
                push(&mut out, self.vertex(e.a));
            }
            let mut k = 1u32;
            loop {
                let offset = f64::from(k) * spacing;
                if offset >= e.length - EPS {
                    break;
                }
                push(&mut out, self.position(&pose(offset)));
                k += 1;
            }
            if !std::mem::replace(&mut seen[e.b as usize], true) {
                push(&mut out, self.vertex(e.b));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> StreetGraph {
        StreetGraph::build(11, 11, 100.0, 20.0).unwrap()
    }

    #[test]
    fn smallest_grid() {
        let g = StreetGraph::build(2, 2, 100.0, 20.0).unwrap();
        assert_eq!(g.vertices().len(), 4);
        assert_eq!(g.edges().len(), 4);
        assert_eq!(g.total_length(), 400.0);
    }

    #[test]
    fn default_grid_counts() {
        let g = grid();
        assert_eq!(g.vertices().len(), 121);
        assert_eq!(g.edges().len(), 220);
        assert_eq!(g.total_length(), 22_000.0);
        let b = g.bounds();
        assert_eq!((b.width(), b.height()), (1000.0, 1000.0));
        assert_eq!(g.area_km2(), 1.0);
    }

    #[test]
    fn three_by_two_degrees() {
        let g = StreetGraph::build(3, 2, 100.0, 20.0).unwrap();
        let mut degrees: Vec<usize> = (0..6).map(|v| g.degree(v)).collect();
        degrees.sort_unstable();
        assert_eq!(degrees, vec![2, 2, 2, 2, 3, 3]);
        assert!(degrees.iter().all(|&d| d != 4));
    }

    #[test]
    fn degree_pattern_on_default_grid() {
        let g = grid();
        for v in 0..g.vertices().len() as u32 {
            let p = g.vertex(v);
            let border_x = p.x == 0.0 || p.x == 1000.0;
            let border_y = p.y == 0.0 || p.y == 1000.0;
            let expected = 4 - usize::from(border_x) - usize::from(border_y);
            assert_eq!(g.degree(v), expected, "vertex {v}");
        }
        assert!(g.edges().iter().all(|e| e.length == 100.0));
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(StreetGraph::build(1, 5, 100.0, 20.0).is_err());
        assert!(StreetGraph::build(3, 3, 0.0, 20.0).is_err());
        assert!(StreetGraph::build(3, 3, -5.0, 20.0).is_err());
        assert!(StreetGraph::build(3, 3, 100.0, 0.0).is_err());
        assert!(StreetGraph::build(3, 3, 100.0, 100.0).is_err());
    }

    #[test]
    fn observation_points_two_by_two() {
        // Offsets by hand: four corners plus the midpoint of each of the four edges.
        let g = StreetGraph::build(2, 2, 100.0, 20.0).unwrap();
        let pts = g.place_observation_points(50.0).unwrap();
        assert_eq!(pts.len(), 8);
        let expected = [
            (0.0, 0.0),
            (50.0, 0.0),
            (100.0, 0.0),
            (0.0, 100.0),
            (50.0, 100.0),
            (100.0, 100.0),
            (0.0, 50.0),
            (100.0, 50.0),
        ];
        for (p, (x, y)) in pts.iter().zip(expected) {
            assert_eq!(p.position, Point::new(x, y));
        }
        assert!(pts.iter().enumerate().all(|(i, p)| p.id == i as u32));
    }

    #[test]
    fn observation_points_endpoints_only() {
        let g = StreetGraph::build(2, 2, 100.0, 20.0).unwrap();
        assert_eq!(g.place_observation_points(100.0).unwrap().len(), 4);
        assert_eq!(g.place_observation_points(250.0).unwrap().len(), 4);
        assert!(g.place_observation_points(0.0).is_err());
    }

    #[test]
    fn line_of_sight_examples() {
        let g = grid();
        // same centerline, 40 m apart
        assert!(g.line_of_sight(Point::new(210.0, 300.0), Point::new(250.0, 300.0)));
        // perpendicular streets, the segment cuts the block at (200..300, 300..400)
        assert!(!g.line_of_sight(Point::new(250.0, 300.0), Point::new(300.0, 350.0)));
        let p = Point::new(420.0, 500.0);
        assert!(g.line_of_sight(p, p));
        // around a corner but inside the intersection square
        assert!(g.line_of_sight(Point::new(290.0, 300.0), Point::new(300.0, 305.0)));
    }

    #[test]
    fn arclength_locates_edges() {
        let g = grid();
        assert_eq!(g.locate_arclength(0.0), (0, 0.0));
        assert_eq!(g.locate_arclength(150.0), (1, 50.0));
        let (e, off) = g.locate_arclength(21_999.9);
        assert_eq!(e, 219);
        assert!((off - 99.9).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn centerline_points_inside_corridor(edge in 0u32..220, offset in 0.0f64..=100.0) {
            let g = grid();
            let p = g.position(&GraphPose { edge, offset, direction: 1 });
            prop_assert!(g.corridor_contains(p));
        }

        #[test]
        fn line_of_sight_symmetric(ax in 0.0f64..1000.0, ay in 0.0f64..1000.0,
                                   dx in -60.0f64..60.0, dy in -60.0f64..60.0) {
            let g = grid();
            let a = Point::new(ax, ay);
            let b = Point::new((ax + dx).clamp(0.0, 1000.0), (ay + dy).clamp(0.0, 1000.0));
            prop_assert_eq!(g.line_of_sight(a, b), g.line_of_sight(b, a));
        }

        #[test]
        fn point_count_monotone_in_spacing(s1 in 1.0f64..300.0, s2 in 1.0f64..300.0) {
            let g = StreetGraph::build(4, 3, 100.0, 20.0).unwrap();
            let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            let n_lo = g.place_observation_points(lo).unwrap().len();
            let n_hi = g.place_observation_points(hi).unwrap().len();
            prop_assert!(n_hi <= n_lo);
        }

        #[test]
        fn total_length_formula(nx in 2u32..30, ny in 2u32..30, block in 1.0f64..500.0) {
            let g = StreetGraph::build(nx, ny, block, block * 0.2).unwrap();
            let expected = block * f64::from(nx * (ny - 1) + ny * (nx - 1));
            prop_assert!((g.total_length() - expected).abs() <= 1e-9 * expected);
            prop_assert_eq!(g.vertices().len() as u32, nx * ny);
        }
    }
}
