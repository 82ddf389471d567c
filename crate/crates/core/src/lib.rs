//! Monte-Carlo simulation of crowd-sourced video surveillance over vehicles.
//!
//! Vehicles drive a Manhattan street grid with forward-facing cameras. A
//! single event appears somewhere on the streets during each round, and the
//! engine tracks which cameras see which parts of it. Results are the
//! per-round detection, monitoring and fragmentation metrics and their
//! aggregates across rounds, for vehicle cameras, stationary cameras, or both.
//!
//! The [`stitcher`] module turns raw per-vehicle recordings into streams keyed
//! by street location.

pub mod config;
pub mod engine;
pub mod error;
pub mod events;
pub mod geom;
pub mod grid;
pub mod metrics;
pub mod mobility;
pub mod output;
pub mod sensing;
pub mod stitcher;

pub use config::{parse_config, ConfigFile, ExperimentConfig, SweepSpec};
pub use engine::{run_experiment, run_round, run_sweep, Simulator};
pub use error::{Error, Result};
pub use events::Category;
pub use metrics::{MetricsReport, RoundResult, System};
pub use output::emit_results;
