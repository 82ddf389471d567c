//! Turning vehicle-associated recordings into area-associated streams.
//!
//! A vehicle uploads four index-aligned streams: timestamps, locations,
//! compass headings and video frames. The pipeline
//!
//! 1. [`associate`]s every sample with the observation points its camera sees,
//! 2. collapses those associations into [`relevance_intervals`] per point,
//! 3. [`truncate`]s the recording into virtual [`Fragment`]s that reference
//!    frame ranges without copying them, and
//! 4. [`combine`]s all fragments of one point into an [`AreaStream`] with a
//!    single non-overlapping playback track.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::grid::{ObservationPoint, StreetGraph};
use crate::sensing::{observed_set_indexed, CameraInstance, CameraSpec, Mount, TargetIndex};

/// Everything a participating vehicle records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleStreamBundle {
    pub vehicle_id: u32,
    /// Seconds from round start, strictly increasing.
    pub time: Vec<f64>,
    pub location: Vec<Point>,
    /// Heading of the camera, radians in the world frame.
    pub compass: Vec<f64>,
    /// Opaque frame identifiers.
    pub video: Vec<u64>,
}

impl VehicleStreamBundle {
    pub fn new(vehicle_id: u32) -> Self {
        Self {
            vehicle_id,
            ..Self::default()
        }
    }

    pub fn push(&mut self, t: f64, location: Point, heading: f64, frame: u64) {
        self.time.push(t);
        self.location.push(location);
        self.compass.push(heading);
        self.video.push(frame);
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.time.len();
        if self.location.len() != n || self.compass.len() != n || self.video.len() != n {
            return Err(Error::MisalignedBundle {
                vehicle_id: self.vehicle_id,
                reason: format!(
                    "stream lengths differ: time {n}, location {}, compass {}, video {}",
                    self.location.len(),
                    self.compass.len(),
                    self.video.len()
                ),
            });
        }
        if let Some(i) = self.time.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::MisalignedBundle {
                vehicle_id: self.vehicle_id,
                reason: format!("timestamps not increasing at index {}", i + 1),
            });
        }
        Ok(())
    }
}

/// One vehicle's view of one observation point over a closed time interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fragment {
    pub vehicle_id: u32,
    pub point_id: u32,
    #[serde(serialize_with = "millis")]
    pub t_start: f64,
    #[serde(serialize_with = "millis")]
    pub t_end: f64,
    pub frame_first: u64,
    pub frame_last: u64,
}

impl Fragment {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// A piece of the playback track: `fragment` indexes
/// [`AreaStream::fragments`]. Consecutive pieces may share an endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPiece {
    pub fragment: usize,
    pub vehicle_id: u32,
    #[serde(serialize_with = "millis")]
    pub t_start: f64,
    #[serde(serialize_with = "millis")]
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaStream {
    pub point_id: u32,
    pub fragments: Vec<Fragment>,
    pub canonical_track: Vec<TrackPiece>,
}

impl AreaStream {
    /// Total time covered by at least one fragment.
    pub fn coverage(&self) -> f64 {
        self.canonical_track.iter().map(|p| p.t_end - p.t_start).sum()
    }
}

fn millis<S: Serializer>(t: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64((t * 1000.0).round() / 1000.0)
}

/// For each sample, the ids of the observation points inside the camera's
/// view, ascending.
pub fn associate(
    bundle: &VehicleStreamBundle,
    points: &[ObservationPoint],
    spec: CameraSpec,
    graph: &StreetGraph,
    occlusion: bool,
) -> Result<Vec<Vec<u32>>> {
    bundle.validate()?;
    let positions: Vec<Point> = points.iter().map(|p| p.position).collect();
    let index = TargetIndex::new(&positions, spec.range.max(1.0));
    Ok(bundle
        .location
        .iter()
        .zip(&bundle.compass)
        .map(|(&at, &heading)| {
            let cam = CameraInstance::new(
                bundle.vehicle_id,
                spec,
                Mount::Vehicle(bundle.vehicle_id),
                at,
                heading,
            );
            observed_set_indexed(&[cam], &positions, &index, graph, occlusion)
                .into_iter()
                .map(|(_, t)| points[t as usize].id)
                .collect()
        })
        .collect())
}

/// Closed intervals `[time[first], time[last]]` of every maximal run of
/// consecutive samples associated with a point.
pub fn relevance_intervals(
    associations: &[Vec<u32>],
    time: &[f64],
) -> BTreeMap<u32, Vec<(f64, f64)>> {
    debug_assert_eq!(associations.len(), time.len());
    // point -> (run start index, last index seen)
    let mut open: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    let mut out: BTreeMap<u32, Vec<(f64, f64)>> = BTreeMap::new();
    for (i, ids) in associations.iter().enumerate() {
        for &p in ids {
            match open.get_mut(&p) {
                Some(run) if run.1 + 1 == i => run.1 = i,
                Some(run) => {
                    out.entry(p).or_default().push((time[run.0], time[run.1]));
                    *run = (i, i);
                }
                None => {
                    open.insert(p, (i, i));
                }
            }
        }
    }
    for (p, (a, b)) in open {
        out.entry(p).or_default().push((time[a], time[b]));
    }
    for v in out.values_mut() {
        v.sort_by(|x, y| x.0.total_cmp(&y.0));
    }
    out
}

/// Cut the recording into one virtual fragment per interval, spanning every
/// frame whose timestamp falls inside it.
pub fn truncate(
    bundle: &VehicleStreamBundle,
    intervals: &BTreeMap<u32, Vec<(f64, f64)>>,
) -> Result<Vec<Fragment>> {
    bundle.validate()?;
    let mut out = Vec::new();
    for (&point_id, list) in intervals {
        for &(t_start, t_end) in list {
            let first = bundle.time.partition_point(|&t| t < t_start);
            let past = bundle.time.partition_point(|&t| t <= t_end);
            if first >= past {
                return Err(Error::EmptyInterval {
                    point_id,
                    t_start,
                    t_end,
                });
            }
            out.push(Fragment {
                vehicle_id: bundle.vehicle_id,
                point_id,
                t_start,
                t_end,
                frame_first: bundle.video[first],
                frame_last: bundle.video[past - 1],
            });
        }
    }
    Ok(out)
}

fn fragment_order(a: &Fragment, b: &Fragment) -> std::cmp::Ordering {
    a.t_start
        .total_cmp(&b.t_start)
        .then(a.vehicle_id.cmp(&b.vehicle_id))
        .then(a.t_end.total_cmp(&b.t_end))
        .then(a.frame_first.cmp(&b.frame_first))
}

/// Merge fragments of one point. The playback track is built greedily: from
/// the current end of coverage, take the fragment that reaches furthest,
/// preferring the lower vehicle id on ties.
pub fn combine(mut fragments: Vec<Fragment>, point_id: u32) -> Result<AreaStream> {
    if let Some(f) = fragments.iter().find(|f| f.point_id != point_id) {
        return Err(Error::ForeignFragment {
            expected: point_id,
            found: f.point_id,
        });
    }
    fragments.sort_by(fragment_order);

    let mut track = Vec::new();
    let mut frontier: Option<f64> = None;
    let mut i = 0;
    while i < fragments.len() {
        let contiguous = matches!(frontier, Some(f) if fragments[i].t_start <= f);
        let from = match frontier {
            Some(f) if contiguous => f,
            _ => fragments[i].t_start,
        };
        let mut best = i;
        while i < fragments.len() && fragments[i].t_start <= from {
            let (c, b) = (&fragments[i], &fragments[best]);
            if c.t_end > b.t_end || (c.t_end == b.t_end && c.vehicle_id < b.vehicle_id) {
                best = i;
            }
            i += 1;
        }
        let reach = fragments[best].t_end;
        if !contiguous || reach > from {
            track.push(TrackPiece {
                fragment: best,
                vehicle_id: fragments[best].vehicle_id,
                t_start: from,
                t_end: reach,
            });
            frontier = Some(reach);
        }
    }

    Ok(AreaStream {
        point_id,
        fragments,
        canonical_track: track,
    })
}

/// Full pipeline over many vehicles: one area stream per observed point,
/// ordered by point id.
pub fn stitch(
    bundles: &[VehicleStreamBundle],
    points: &[ObservationPoint],
    spec: CameraSpec,
    graph: &StreetGraph,
    occlusion: bool,
) -> Result<Vec<AreaStream>> {
    let mut per_point: BTreeMap<u32, Vec<Fragment>> = BTreeMap::new();
    for bundle in bundles {
        let assoc = associate(bundle, points, spec, graph, occlusion)?;
        let intervals = relevance_intervals(&assoc, &bundle.time);
        for f in truncate(bundle, &intervals)? {
            per_point.entry(f.point_id).or_default().push(f);
        }
    }
    per_point
        .into_iter()
        .map(|(p, frags)| combine(frags, p))
        .collect()
}
