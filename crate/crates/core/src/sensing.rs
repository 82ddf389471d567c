//! Camera model: a circular sector of given range and opening angle, with
//! optional occlusion by building blocks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::grid::{Axis, StreetGraph};

/// Slack on the angular boundary test so that targets exactly on the sector
/// edge are not lost to rounding.
const ANGLE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub range: f64,
    pub fov_half_angle_deg: f64,
}

impl CameraSpec {
    /// Spec from the total opening angle in degrees.
    pub fn from_total_angle(range: f64, fov_deg: f64) -> Self {
        Self {
            range,
            fov_half_angle_deg: 0.5 * fov_deg,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.range > 0.0 && self.fov_half_angle_deg > 0.0 && self.fov_half_angle_deg <= 180.0
    }

    pub fn fov_half_angle(&self) -> f64 {
        self.fov_half_angle_deg.to_radians()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mount {
    Vehicle(u32),
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraInstance {
    pub id: u32,
    pub spec: CameraSpec,
    pub mount: Mount,
    position: Point,
    heading: f64,
    boresight: Point,
    cos_half: f64,
}

impl CameraInstance {
    pub fn new(id: u32, spec: CameraSpec, mount: Mount, position: Point, heading: f64) -> Self {
        Self {
            id,
            spec,
            mount,
            position,
            heading,
            boresight: Point::from_angle(heading),
            cos_half: spec.fov_half_angle().cos(),
        }
    }

    pub fn position(&self) -> Point {
        self.position
    }

    pub fn heading(&self) -> f64 {
        self.heading
    }

    /// Move the camera, e.g. to follow the vehicle it is mounted on.
    pub fn set_pose(&mut self, position: Point, heading: f64) {
        self.position = position;
        if heading != self.heading {
            self.heading = heading;
            self.boresight = Point::from_angle(heading);
        }
    }

    /// Range and sector test, without occlusion.
    pub fn in_sector(&self, target: Point) -> bool {
        let d = target - self.position;
        let dist_sq = d.norm_sq();
        if dist_sq > self.spec.range * self.spec.range {
            return false;
        }
        if dist_sq == 0.0 {
            return true;
        }
        let dist = dist_sq.sqrt();
        d.dot(self.boresight) >= dist * (self.cos_half - ANGLE_EPS)
    }

    /// Conservative test: false only if no point of the disc `(center, radius)`
    /// can be inside the sector.
    pub fn may_see_disc(&self, center: Point, radius: f64) -> bool {
        let d = center - self.position;
        let dist = d.norm();
        if dist > self.spec.range + radius {
            return false;
        }
        if dist <= radius || self.spec.fov_half_angle_deg >= 180.0 {
            return true;
        }
        let off_axis = (d.dot(self.boresight) / dist).clamp(-1.0, 1.0).acos();
        off_axis - (radius / dist).asin() <= self.spec.fov_half_angle() + 1e-9
    }
}

/// Whether `camera` sees `target`: within range, within the opening angle
/// (both boundaries inclusive) and, if `occlusion` is on, with a clear line of
/// sight through the street corridor.
pub fn visible(camera: &CameraInstance, target: Point, graph: &StreetGraph, occlusion: bool) -> bool {
    camera.in_sector(target) && (!occlusion || graph.line_of_sight(camera.position, target))
}

/// Stationary cameras at `density` per km², uniform along the streets and
/// facing either way along the street they sit on. Ids start at `first_id`.
pub fn deploy_stationary<R: Rng + ?Sized>(
    graph: &StreetGraph,
    density: f64,
    spec: CameraSpec,
    first_id: u32,
    rng: &mut R,
) -> Vec<CameraInstance> {
    let count = (density * graph.area_km2()).round().max(0.0) as u32;
    (0..count)
        .map(|i| {
            let s = rng.random::<f64>() * graph.total_length();
            let (edge, offset) = graph.locate_arclength(s);
            let forward = rng.random::<bool>();
            let heading = match (graph.edge(edge).axis, forward) {
                (Axis::X, true) => 0.0,
                (Axis::X, false) => std::f64::consts::PI,
                (Axis::Y, true) => std::f64::consts::FRAC_PI_2,
                (Axis::Y, false) => 3.0 * std::f64::consts::FRAC_PI_2,
            };
            let position = graph.position(&crate::grid::GraphPose {
                edge,
                offset,
                direction: 1,
            });
            CameraInstance::new(first_id + i, spec, Mount::Stationary, position, heading)
        })
        .collect()
}

/// Uniform bucket grid over a fixed set of target points.
#[derive(Debug, Clone)]
pub struct TargetIndex {
    origin: Point,
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<u32>>,
}

impl TargetIndex {
    pub fn new(targets: &[Point], cell: f64) -> Self {
        assert!(cell > 0.0);
        if targets.is_empty() {
            return Self {
                origin: Point::default(),
                cell,
                cols: 0,
                rows: 0,
                buckets: Vec::new(),
            };
        }
        let (mut min, mut max) = (targets[0], targets[0]);
        for p in targets {
            min = Point::new(min.x.min(p.x), min.y.min(p.y));
            max = Point::new(max.x.max(p.x), max.y.max(p.y));
        }
        let cols = ((max.x - min.x) / cell).floor() as usize + 1;
        let rows = ((max.y - min.y) / cell).floor() as usize + 1;
        let mut buckets = vec![Vec::new(); cols * rows];
        for (i, p) in targets.iter().enumerate() {
            let c = ((p.x - min.x) / cell).floor() as usize;
            let r = ((p.y - min.y) / cell).floor() as usize;
            buckets[r.min(rows - 1) * cols + c.min(cols - 1)].push(i as u32);
        }
        Self {
            origin: min,
            cell,
            cols,
            rows,
            buckets,
        }
    }

    /// Indices of all targets in buckets overlapping the square of half-side
    /// `radius` around `center`. A superset of the targets within `radius`.
    pub fn candidates(&self, center: Point, radius: f64) -> impl Iterator<Item = u32> + '_ {
        let span = |lo: f64, hi: f64, n: usize| -> (usize, usize) {
            if n == 0 || hi < 0.0 {
                return (1, 0);
            }
            let a = (lo / self.cell).floor().max(0.0) as usize;
            let b = ((hi / self.cell).floor() as usize).min(n - 1);
            (a, b)
        };
        let (c0, c1) = span(
            center.x - radius - self.origin.x,
            center.x + radius - self.origin.x,
            self.cols,
        );
        let (r0, r1) = span(
            center.y - radius - self.origin.y,
            center.y + radius - self.origin.y,
            self.rows,
        );
        (r0..=r1)
            .flat_map(move |r| (c0..=c1).map(move |c| r * self.cols + c))
            .flat_map(move |b| self.buckets[b].iter().copied())
    }
}

/// All `(camera id, target index)` pairs with `visible(..)` true, sorted.
pub fn observed_set(
    cameras: &[CameraInstance],
    targets: &[Point],
    graph: &StreetGraph,
    occlusion: bool,
) -> Vec<(u32, u32)> {
    let Some(max_range) = cameras.iter().map(|c| c.spec.range).reduce(f64::max) else {
        return Vec::new();
    };
    let index = TargetIndex::new(targets, max_range.max(1.0));
    observed_set_indexed(cameras, targets, &index, graph, occlusion)
}

/// [`observed_set`] against a prebuilt index over `targets`.
pub fn observed_set_indexed(
    cameras: &[CameraInstance],
    targets: &[Point],
    index: &TargetIndex,
    graph: &StreetGraph,
    occlusion: bool,
) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for cam in cameras {
        let start = out.len();
        for t in index.candidates(cam.position, cam.spec.range) {
            if visible(cam, targets[t as usize], graph, occlusion) {
                out.push((cam.id, t));
            }
        }
        out[start..].sort_unstable();
    }
    out.sort_unstable();
    out.dedup();
    out
}
