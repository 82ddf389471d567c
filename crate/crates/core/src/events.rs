//! Target events: the four built-in categories, their lifecycle inside a
//! round and their footprint of 1 m² cells.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::grid::StreetGraph;
use crate::mobility::{Walker, WalkerKind};

/// Edge length of one footprint cell, meters.
pub const CELL_SIZE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Explosion,
    Picket,
    Robbery,
    Vehicle,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Explosion,
        Category::Picket,
        Category::Robbery,
        Category::Vehicle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Explosion => "explosion",
            Category::Picket => "picket",
            Category::Robbery => "robbery",
            Category::Vehicle => "vehicle",
        }
    }

    pub fn params(self) -> EventCategory {
        let (duration, area, speed) = match self {
            Category::Explosion => (2.0, 2.0, 0.0),
            Category::Picket => (600.0, 100.0, 1.0),
            Category::Robbery => (10.0, 1.0, 5.0),
            Category::Vehicle => (1800.0, 8.0, 15.0),
        };
        EventCategory {
            category: self,
            duration,
            area,
            speed,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::config(
                    "category",
                    format!("unknown category `{s}`, expected explosion|picket|robbery|vehicle"),
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventCategory {
    pub category: Category,
    /// Seconds.
    pub duration: f64,
    /// Square meters.
    pub area: f64,
    /// Meters per second.
    pub speed: f64,
}

impl EventCategory {
    pub fn cell_count(&self) -> usize {
        (self.area / (CELL_SIZE * CELL_SIZE)).ceil() as usize
    }
}

/// Offsets of the first `n` cells of a square spiral: the origin, then east,
/// then counter-clockwise rings. Odd squares give full k×k blocks, and
/// `n = k²` for even `k` gives a k×k block shifted towards north-east.
pub fn spiral_offsets(n: usize) -> Vec<(i32, i32)> {
    let mut out = Vec::with_capacity(n);
    let (mut x, mut y) = (0i32, 0i32);
    if n > 0 {
        out.push((x, y));
    }
    let mut ring = 0;
    while out.len() < n {
        ring += 1;
        // one step east opens the ring, then up, left, down and right
        let legs: [(i32, i32, i32); 5] = [
            (1, 0, 1),
            (0, 1, 2 * ring - 1),
            (-1, 0, 2 * ring),
            (0, -1, 2 * ring),
            (1, 0, 2 * ring),
        ];
        for (dx, dy, len) in legs {
            for _ in 0..len {
                if out.len() == n {
                    return out;
                }
                x += dx;
                y += dy;
                out.push((x, y));
            }
        }
    }
    out
}

/// One event inside a round.
#[derive(Debug, Clone)]
pub struct Event {
    pub params: EventCategory,
    /// Start of the active interval, seconds from round start, on the step grid.
    pub spawn_time: f64,
    pub first_step: usize,
    pub step_count: usize,
    pub step: f64,
    pub center: Walker,
    offsets: Vec<(i32, i32)>,
}

impl Event {
    /// Event with an explicit centre walker, starting at `first_step`.
    pub fn new(params: EventCategory, center: Walker, first_step: usize, step: f64) -> Self {
        let step_count = (params.duration / step).round() as usize;
        Self {
            params,
            spawn_time: first_step as f64 * step,
            first_step,
            step_count,
            step,
            center,
            offsets: spiral_offsets(params.cell_count()),
        }
    }

    /// Exclusive end of the active steps.
    pub fn end_step(&self) -> usize {
        self.first_step + self.step_count
    }

    pub fn is_active_step(&self, k: usize) -> bool {
        (self.first_step..self.end_step()).contains(&k)
    }

    pub fn is_active_at(&self, t: f64) -> bool {
        let rel = t - self.spawn_time;
        let eps = 1e-9 * self.step;
        rel >= -eps && rel < self.step_count as f64 * self.step - eps
    }

    pub fn offsets(&self) -> &[(i32, i32)] {
        &self.offsets
    }

    /// Distance from the centre to the farthest cell centre.
    pub fn footprint_radius(&self) -> f64 {
        self.offsets
            .iter()
            .map(|&(dx, dy)| f64::from(dx).hypot(f64::from(dy)) * CELL_SIZE)
            .fold(0.0, f64::max)
    }

    /// Move the centre to where it is at absolute step `k`.
    pub fn advance_to_step<R: Rng + ?Sized>(&mut self, graph: &StreetGraph, k: usize, rng: &mut R) {
        let elapsed = k.saturating_sub(self.first_step) as f64 * self.step;
        self.center
            .advance_to(graph, self.center.speed() * elapsed, rng);
    }

    /// Footprint cells for the centre's current position, `(cell index, cell
    /// centre)`, dropping cells outside the street corridor.
    pub fn footprint(&self, graph: &StreetGraph) -> Vec<(u32, Point)> {
        footprint_around(&self.offsets, self.center.position(graph), graph)
    }

    /// Footprint at time `t`; empty outside the active interval. The centre
    /// must already have been advanced to `t`.
    pub fn footprint_cells(&self, graph: &StreetGraph, t: f64) -> Vec<(u32, Point)> {
        if !self.is_active_at(t) {
            return Vec::new();
        }
        self.footprint(graph)
    }
}

pub(crate) fn footprint_around(
    offsets: &[(i32, i32)],
    center: Point,
    graph: &StreetGraph,
) -> Vec<(u32, Point)> {
    offsets
        .iter()
        .enumerate()
        .map(|(i, &(dx, dy))| {
            (
                i as u32,
                center + Point::new(f64::from(dx), f64::from(dy)) * CELL_SIZE,
            )
        })
        .filter(|&(_, p)| graph.corridor_contains(p))
        .collect()
}

/// Event of `params` placed uniformly along the streets, with a start time
/// drawn uniformly so that the whole event fits in the round.
pub fn spawn_event<R: Rng + ?Sized>(
    params: EventCategory,
    graph: &StreetGraph,
    round_length: f64,
    step: f64,
    rng: &mut R,
) -> Result<Event> {
    if params.duration > round_length {
        return Err(Error::EventTooLong {
            duration: params.duration,
            round_length,
        });
    }
    let total_steps = (round_length / step).round() as usize;
    let step_count = (params.duration / step).round() as usize;
    let latest = total_steps.saturating_sub(step_count);
    let spawn_time = rng.random::<f64>() * (round_length - params.duration);
    let first_step = ((spawn_time / step).round() as usize).min(latest);
    let center = Walker::spawn(0, WalkerKind::EventCenter, params.speed, graph, rng);
    Ok(Event::new(params, center, first_step, step))
}
