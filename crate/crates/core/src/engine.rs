//! Round simulation and Monte-Carlo driver.
//!
//! Each round draws its own world from a round seed: the event, the stationary
//! cameras and every vehicle use separate ChaCha8 streams of that seed. Vehicle
//! `k` always uses stream `VEHICLE_STREAM + k`, so the vehicles of a lower
//! penetration are exactly the first vehicles of a higher one, and every sweep
//! cell sees the same event in round `i`.
//!
//! Walkers are evaluated lazily. A camera that is far from the event cannot
//! see it for a while, so it is only revisited once it could have closed the
//! gap at the combined speed of camera and event. Walker poses are a function
//! of the odometer, so skipping steps does not change any trajectory.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, SweepSpec};
use crate::error::Result;
use crate::events::{spawn_event, Event};
use crate::geom::Point;
use crate::grid::{ObservationPoint, StreetGraph};
use crate::metrics::{
    aggregate, CellReport, CoverageLog, CoverageTracker, MetricsReport, RoundResult,
};
use crate::mobility::{Walker, WalkerKind};
use crate::sensing::{
    deploy_stationary, observed_set_indexed, visible, CameraInstance, Mount, TargetIndex,
};
use crate::stitcher::VehicleStreamBundle;

const EVENT_STREAM: u64 = 0;
const STATIONARY_STREAM: u64 = 1;
const VEHICLE_STREAM: u64 = 16;

/// Safety margin on the skip distance, meters.
const SKIP_SLACK: f64 = 1e-6;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of round `round` under master seed `master`:
/// `splitmix64(master ^ splitmix64(round))`.
pub fn round_seed(master: u64, round: u64) -> u64 {
    splitmix64(master ^ splitmix64(round))
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Everything random about one round.
#[derive(Debug, Clone)]
pub struct RoundWorld {
    pub vehicles: Vec<Walker>,
    pub stationary: Vec<CameraInstance>,
    pub event: Event,
    vehicle_rngs: Vec<ChaCha8Rng>,
    event_rng: ChaCha8Rng,
}

impl RoundWorld {
    /// A hand-built world. Vehicle `k` turns with stream `k` of `seed`'s
    /// vehicle streams, the event with the event stream.
    pub fn new(
        vehicles: Vec<Walker>,
        stationary: Vec<CameraInstance>,
        event: Event,
        seed: u64,
    ) -> Self {
        let vehicle_rngs = (0..vehicles.len() as u64)
            .map(|k| stream(seed, VEHICLE_STREAM + k))
            .collect();
        Self {
            vehicles,
            stationary,
            event,
            vehicle_rngs,
            event_rng: stream(seed, EVENT_STREAM),
        }
    }
}

/// What a round should record besides its summary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep every `(camera, cell)` pair of every active step.
    pub record_log: bool,
    /// Record vehicle streams against the observation points for the whole
    /// round. Overrides nothing in the summary.
    pub export_streams: bool,
    /// Step every walker at every step of the round and test every camera
    /// while the event is active, with no skipping. Same results, slower.
    pub eager: bool,
}

/// Raw vehicle recordings of one round.
#[derive(Debug, Clone, Default)]
pub struct StreamExport {
    pub points: Vec<ObservationPoint>,
    pub bundles: Vec<VehicleStreamBundle>,
    /// Per step, the `(vehicle id, point id)` pairs in view.
    pub visibility: Vec<Vec<(u32, u32)>>,
}

#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub result: RoundResult,
    pub log: Option<CoverageLog>,
    pub streams: Option<StreamExport>,
}

/// A validated configuration with its street graph.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: ExperimentConfig,
    graph: StreetGraph,
}

impl Simulator {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let graph = config.grid.build()?;
        Ok(Self { config, graph })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn graph(&self) -> &StreetGraph {
        &self.graph
    }

    /// Participating vehicles at the configured penetration.
    pub fn vehicle_count(&self) -> usize {
        let c = &self.config;
        (c.vehicle_density * self.graph.area_km2() * c.penetration).round() as usize
    }

    pub fn spawn_world(&self, seed: u64) -> Result<RoundWorld> {
        let c = &self.config;
        let mut event_rng = stream(seed, EVENT_STREAM);
        let event = spawn_event(
            c.category.params(),
            &self.graph,
            c.round_length,
            c.step,
            &mut event_rng,
        )?;
        let n = self.vehicle_count();
        let mut vehicle_rngs = Vec::with_capacity(n);
        let mut vehicles = Vec::with_capacity(n);
        for k in 0..n {
            let mut rng = stream(seed, VEHICLE_STREAM + k as u64);
            vehicles.push(Walker::spawn(
                k as u32,
                WalkerKind::Vehicle,
                c.vehicle_speed,
                &self.graph,
                &mut rng,
            ));
            vehicle_rngs.push(rng);
        }
        let stationary = if c.stationary_density > 0.0 {
            deploy_stationary(
                &self.graph,
                c.stationary_density,
                c.stationary_camera,
                n as u32,
                &mut stream(seed, STATIONARY_STREAM),
            )
        } else {
            Vec::new()
        };
        Ok(RoundWorld {
            vehicles,
            stationary,
            event,
            vehicle_rngs,
            event_rng,
        })
    }

    pub fn run_round(&self, seed: u64) -> Result<RoundResult> {
        let world = self.spawn_world(seed)?;
        let options = RunOptions {
            export_streams: self.config.export_streams,
            ..RunOptions::default()
        };
        Ok(self.run_world(world, seed, options)?.result)
    }

    /// Simulate a prepared world.
    pub fn run_world(
        &self,
        mut world: RoundWorld,
        seed: u64,
        options: RunOptions,
    ) -> Result<RoundOutput> {
        let c = &self.config;
        let graph = &self.graph;
        let dt = c.step;
        let total = c.total_steps();
        let nv = world.vehicles.len();

        let event_speed = world.event.center.speed();
        let radius = world.event.footprint_radius();
        let cell_count = world.event.offsets().len();

        let mut cameras: Vec<CameraInstance> = world
            .vehicles
            .iter()
            .map(|w| {
                CameraInstance::new(
                    w.id,
                    c.vehicle_camera,
                    Mount::Vehicle(w.id),
                    w.position(graph),
                    w.heading(graph),
                )
            })
            .collect();
        cameras.extend(world.stationary.iter().copied());
        let speeds: Vec<f64> = world
            .vehicles
            .iter()
            .map(Walker::speed)
            .chain(world.stationary.iter().map(|_| 0.0))
            .collect();

        let mut export = if options.export_streams {
            let points = graph.place_observation_points(c.observation_spacing)?;
            Some(StreamExport {
                bundles: world
                    .vehicles
                    .iter()
                    .map(|w| VehicleStreamBundle::new(w.id))
                    .collect(),
                visibility: Vec::with_capacity(total),
                points,
            })
        } else {
            None
        };
        let point_positions: Vec<Point> = export
            .as_ref()
            .map(|e| e.points.iter().map(|p| p.position).collect())
            .unwrap_or_default();
        let point_index = TargetIndex::new(&point_positions, c.vehicle_camera.range.max(1.0));

        let first = world.event.first_step;
        let end = world.event.end_step();
        let mut tracker = CoverageTracker::new(c.detection_rule, dt, cell_count);
        let mut log = options.record_log.then(|| CoverageLog::new(dt, cell_count as u32));

        let mut due: BinaryHeap<Reverse<(usize, u32)>> = (0..cameras.len() as u32)
            .map(|i| Reverse((first, i)))
            .collect();
        let mut active: Vec<u32> = Vec::new();
        let mut covered = vec![false; cell_count];
        let mut covered_list: Vec<u32> = Vec::new();
        let mut seen_cams: Vec<u32> = Vec::new();
        let mut pairs: Vec<(u32, u32)> = Vec::new();

        let step_all = options.eager || export.is_some();
        let (from, to) = if step_all {
            (0, total.max(end))
        } else {
            (first, end)
        };

        for k in from..to {
            let t = k as f64 * dt;
            if step_all {
                for (i, w) in world.vehicles.iter_mut().enumerate() {
                    w.advance_to(graph, w.speed() * t, &mut world.vehicle_rngs[i]);
                    cameras[i].set_pose(w.position(graph), w.heading(graph));
                }
            }
            if let Some(ex) = export.as_mut() {
                for (i, cam) in cameras[..nv].iter().enumerate() {
                    ex.bundles[i].push(t, cam.position(), cam.heading(), k as u64);
                }
                ex.visibility.push(
                    observed_set_indexed(
                        &cameras[..nv],
                        &point_positions,
                        &point_index,
                        graph,
                        c.occlusion,
                    )
                    .into_iter()
                    .map(|(v, i)| (v, ex.points[i as usize].id))
                    .collect(),
                );
            }
            if !world.event.is_active_step(k) {
                continue;
            }

            world
                .event
                .advance_to_step(graph, k, &mut world.event_rng);
            let center = world.event.center.position(graph);
            let cells = world.event.footprint(graph);

            active.clear();
            if options.eager {
                active.extend(0..cameras.len() as u32);
            }
            while let Some(&Reverse((when, i))) = due.peek().filter(|_| !options.eager) {
                if when > k {
                    break;
                }
                due.pop();
                let iu = i as usize;
                if iu < nv {
                    let w = &mut world.vehicles[iu];
                    w.advance_to(graph, w.speed() * t, &mut world.vehicle_rngs[iu]);
                    cameras[iu].set_pose(w.position(graph), w.heading(graph));
                }
                let reach = cameras[iu].spec.range + radius + SKIP_SLACK;
                let gap = cameras[iu].position().distance(center) - reach;
                let closing = (speeds[iu] + event_speed) * dt;
                if gap <= 0.0 {
                    active.push(i);
                    due.push(Reverse((k + 1, i)));
                } else if closing > 0.0 {
                    let skip = ((gap / closing).floor() as usize).max(1);
                    due.push(Reverse((k + skip, i)));
                }
            }
            active.sort_unstable();

            for &i in &covered_list {
                covered[i as usize] = false;
            }
            covered_list.clear();
            seen_cams.clear();
            pairs.clear();
            let full = log.is_some();
            let need_cells = tracker.needs_cells();
            for &i in &active {
                let cam = &cameras[i as usize];
                if !cam.may_see_disc(center, radius) {
                    continue;
                }
                let mut seen = false;
                for &(idx, p) in &cells {
                    let already = covered[idx as usize];
                    if !full && seen && (already || !need_cells) {
                        continue;
                    }
                    if visible(cam, p, graph, c.occlusion) {
                        seen = true;
                        if full {
                            pairs.push((cam.id, idx));
                        }
                        if !already {
                            covered[idx as usize] = true;
                            covered_list.push(idx);
                        }
                    }
                }
                if seen {
                    seen_cams.push(cam.id);
                }
            }
            tracker.record(&covered_list, &seen_cams);
            if let Some(log) = log.as_mut() {
                pairs.sort_unstable();
                log.steps.push(pairs.clone());
            }
        }

        Ok(RoundOutput {
            result: tracker.finish(seed),
            log,
            streams: export,
        })
    }

    /// Per-round results in round order. Parallel and serial runs agree.
    pub fn round_results(&self, parallel: bool) -> Result<Vec<RoundResult>> {
        let seeds: Vec<u64> = (0..u64::from(self.config.rounds))
            .map(|i| round_seed(self.config.seed, i))
            .collect();
        if parallel {
            seeds.par_iter().map(|&s| self.run_round(s)).collect()
        } else {
            seeds.iter().map(|&s| self.run_round(s)).collect()
        }
    }

    pub fn run_cell(&self, parallel: bool) -> Result<CellReport> {
        let results = self.round_results(parallel)?;
        let c = &self.config;
        aggregate(
            c.system(),
            c.category,
            c.level(),
            &results,
            c.fragment_condition,
        )
    }
}

/// One round of `config` with the given round seed.
pub fn run_round(config: &ExperimentConfig, seed: u64) -> Result<RoundResult> {
    Simulator::new(config.clone())?.run_round(seed)
}

/// All rounds of a single cell.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsReport> {
    let cell = Simulator::new(config.clone())?.run_cell(true)?;
    Ok(MetricsReport { cells: vec![cell] })
}

/// Every cell of a sweep, in [`SweepSpec::cells`] order.
pub fn run_sweep(config: &ExperimentConfig, sweep: &SweepSpec) -> Result<MetricsReport> {
    sweep.validate()?;
    let cells = sweep
        .cells(config)
        .into_iter()
        .map(|cell| Simulator::new(cell)?.run_cell(true))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport { cells })
}
