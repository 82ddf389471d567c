//! Experiment configuration: a flat JSON document with snake_case keys.
//! Every key is optional; omitted keys take the default parameters.
//!
//! Precedence is command-line flags, then the file, then defaults. A preset
//! counts as a flag but is applied before the individual flags.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::Category;
use crate::grid::StreetGraph;
use crate::metrics::{DetectionRule, FragmentCondition, System};
use crate::sensing::CameraSpec;

/// Largest distance a walker may cover in one step, meters.
pub const MAX_STEP_DISPLACEMENT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub nx: u32,
    pub ny: u32,
    pub block_length: f64,
    pub corridor_width: f64,
}

impl GridParams {
    pub fn build(&self) -> Result<StreetGraph> {
        StreetGraph::build(self.nx, self.ny, self.block_length, self.corridor_width)
    }
}

/// Parameters of one sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub grid: GridParams,
    /// Vehicles per km², participating or not.
    pub vehicle_density: f64,
    pub vehicle_speed: f64,
    pub vehicle_camera: CameraSpec,
    pub stationary_camera: CameraSpec,
    /// Stationary cameras per km².
    pub stationary_density: f64,
    /// Share of vehicles carrying a camera.
    pub penetration: f64,
    pub category: Category,
    pub step: f64,
    pub round_length: f64,
    pub rounds: u32,
    pub seed: u64,
    pub occlusion: bool,
    pub detection_rule: DetectionRule,
    pub fragment_condition: FragmentCondition,
    /// Spacing of observation points for stream export, meters.
    pub observation_spacing: f64,
    /// Record per-vehicle streams against the observation-point grid.
    pub export_streams: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grid: GridParams {
                nx: 11,
                ny: 11,
                block_length: 100.0,
                corridor_width: 20.0,
            },
            vehicle_density: 1967.0,
            vehicle_speed: 15.0,
            vehicle_camera: CameraSpec::from_total_angle(30.0, 120.0),
            stationary_camera: CameraSpec::from_total_angle(50.0, 120.0),
            stationary_density: 0.0,
            penetration: 1.0,
            category: Category::Explosion,
            step: 0.05,
            round_length: 3600.0,
            rounds: 1000,
            seed: 1,
            occlusion: true,
            detection_rule: DetectionRule::ContiguousCell,
            fragment_condition: FragmentCondition::Detected,
            observation_spacing: 25.0,
            export_streams: false,
        }
    }
}

impl ExperimentConfig {
    pub fn system(&self) -> System {
        match (self.penetration > 0.0, self.stationary_density > 0.0) {
            (_, false) => System::Vsv,
            (false, true) => System::Stationary,
            (true, true) => System::Combined,
        }
    }

    /// Penetration for vehicle systems, density for stationary ones.
    pub fn level(&self) -> f64 {
        match self.system() {
            System::Stationary => self.stationary_density,
            _ => self.penetration,
        }
    }

    pub fn total_steps(&self) -> usize {
        (self.round_length / self.step).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive, got {v}")))
            }
        };
        let non_negative = |key: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be non-negative, got {v}")))
            }
        };
        if self.grid.nx < 2 {
            return Err(Error::config("grid_nx", "need at least 2 intersections"));
        }
        if self.grid.ny < 2 {
            return Err(Error::config("grid_ny", "need at least 2 intersections"));
        }
        positive("block_length", self.grid.block_length)?;
        positive("corridor_width", self.grid.corridor_width)?;
        if self.grid.corridor_width >= self.grid.block_length {
            return Err(Error::config(
                "corridor_width",
                "must be smaller than block_length",
            ));
        }
        non_negative("vehicle_density", self.vehicle_density)?;
        non_negative("vehicle_speed", self.vehicle_speed)?;
        non_negative("stationary_density", self.stationary_density)?;
        validate_penetration(self.penetration)?;
        camera_ok("vehicle_camera", self.vehicle_camera)?;
        camera_ok("stationary_camera", self.stationary_camera)?;
        positive("step", self.step)?;
        positive("round_length", self.round_length)?;
        positive("observation_spacing", self.observation_spacing)?;
        if self.rounds == 0 {
            return Err(Error::config("rounds", "must be at least 1"));
        }
        let fastest = self.vehicle_speed.max(self.category.params().speed);
        if fastest * self.step > MAX_STEP_DISPLACEMENT + 1e-12 {
            return Err(Error::config(
                "step",
                format!(
                    "walkers would move {:.3} m per step, more than {MAX_STEP_DISPLACEMENT} m",
                    fastest * self.step
                ),
            ));
        }
        let duration = self.category.params().duration;
        if duration > self.round_length {
            return Err(Error::config(
                "round_length",
                format!("shorter than the {duration} s {} event", self.category),
            ));
        }
        Ok(())
    }
}

fn validate_penetration(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::config(
            "penetration",
            format!("must lie in [0, 1], got {p}"),
        ))
    }
}

fn camera_ok(prefix: &str, spec: CameraSpec) -> Result<()> {
    if !(spec.range.is_finite() && spec.range > 0.0) {
        return Err(Error::config(
            &format!("{prefix}_range"),
            format!("must be positive, got {}", spec.range),
        ));
    }
    if !spec.is_valid() {
        return Err(Error::config(
            &format!("{prefix}_angle"),
            format!(
                "must lie in (0, 360] degrees, got {}",
                2.0 * spec.fov_half_angle_deg
            ),
        ));
    }
    Ok(())
}

/// Which cells an experiment sweeps over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub penetrations: Vec<f64>,
    /// Stationary camera densities per km².
    pub densities: Vec<f64>,
    pub categories: Vec<Category>,
    /// Penetration whose fragment histogram goes to `fragmentation.csv`.
    pub fragmentation_penetration: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            penetrations: (1..=10).map(|i| f64::from(i) / 10.0).collect(),
            densities: vec![300.0, 166.0, 123.0],
            categories: Category::ALL.to_vec(),
            fragmentation_penetration: 0.3,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.penetrations.is_empty() && self.densities.is_empty() {
            return Err(Error::config(
                "penetration",
                "sweep needs at least one penetration or density",
            ));
        }
        if self.categories.is_empty() {
            return Err(Error::config("category", "at least one category required"));
        }
        for &p in &self.penetrations {
            validate_penetration(p)?;
        }
        for &d in &self.densities {
            if !(d.is_finite() && d >= 0.0) {
                return Err(Error::config(
                    "density",
                    format!("must be non-negative, got {d}"),
                ));
            }
        }
        validate_penetration(self.fragmentation_penetration)
            .map_err(|_| Error::config("fragmentation_penetration", "must lie in [0, 1]"))
    }

    /// Cell configurations in emission order: per category, vehicle cells by
    /// penetration, then stationary cells by density.
    pub fn cells(&self, base: &ExperimentConfig) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &category in &self.categories {
            for &p in &self.penetrations {
                out.push(ExperimentConfig {
                    category,
                    penetration: p,
                    stationary_density: 0.0,
                    ..base.clone()
                });
            }
            for &d in &self.densities {
                out.push(ExperimentConfig {
                    category,
                    penetration: 0.0,
                    stationary_density: d,
                    ..base.clone()
                });
            }
        }
        out
    }
}

/// A value that may be written as a scalar or a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    pub fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

/// The on-disk document. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_nx: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_ny: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corridor_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vehicle_density: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vehicle_speed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vehicle_camera_range: Option<f64>,
    /// Total opening angle, degrees.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vehicle_camera_angle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationary_camera_range: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationary_camera_angle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub penetration: Option<OneOrMany<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<OneOrMany<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<OneOrMany<Category>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fragmentation_penetration: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub round_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub occlusion: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection_rule: Option<DetectionRule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fragment_condition: Option<FragmentCondition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observation_spacing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub export_streams: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 200 rounds on the 1 km² grid.
    Desk,
    /// 1,000 rounds.
    Full,
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::parse(text, Path::new("<config>"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|source| Error::Json {
                path: path.to_owned(),
                source,
            })?;
        let serde_json::Value::Object(map) = value else {
            return Err(Error::config("<root>", "expected a JSON object"));
        };
        // one key at a time so the error can name it
        for (key, v) in &map {
            let single = serde_json::Map::from_iter([(key.clone(), v.clone())]);
            serde_json::from_value::<ConfigFile>(serde_json::Value::Object(single))
                .map_err(|e| Error::config(key, e.to_string()))?;
        }
        serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| Error::config("<root>", e.to_string()))
    }

    /// Keys set in `other` replace keys set here.
    pub fn overlay(self, other: ConfigFile) -> ConfigFile {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigFile { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            grid_nx, grid_ny, block_length, corridor_width, vehicle_density, vehicle_speed,
            vehicle_camera_range, vehicle_camera_angle, stationary_camera_range,
            stationary_camera_angle, penetration, density, category, fragmentation_penetration,
            step, round_length, rounds, seed, occlusion, detection_rule, fragment_condition,
            observation_spacing, export_streams
        )
    }

    pub fn preset(preset: Preset) -> ConfigFile {
        let rounds = match preset {
            Preset::Desk => 200,
            Preset::Full => 1000,
        };
        ConfigFile {
            rounds: Some(rounds),
            grid_nx: Some(11),
            grid_ny: Some(11),
            block_length: Some(100.0),
            ..ConfigFile::default()
        }
    }

    /// Apply defaults and validate. The returned config describes the first
    /// sweep category; [`SweepSpec::cells`] derives the rest.
    pub fn resolve(&self) -> Result<(ExperimentConfig, SweepSpec)> {
        let d = ExperimentConfig::default();
        let s = SweepSpec::default();
        let vehicle_camera = CameraSpec::from_total_angle(
            self.vehicle_camera_range.unwrap_or(d.vehicle_camera.range),
            self.vehicle_camera_angle
                .unwrap_or(2.0 * d.vehicle_camera.fov_half_angle_deg),
        );
        let stationary_camera = CameraSpec::from_total_angle(
            self.stationary_camera_range
                .unwrap_or(d.stationary_camera.range),
            self.stationary_camera_angle
                .unwrap_or(2.0 * d.stationary_camera.fov_half_angle_deg),
        );
        let sweep = SweepSpec {
            penetrations: self
                .penetration
                .clone()
                .map_or(s.penetrations, OneOrMany::into_vec),
            densities: self
                .density
                .clone()
                .map_or(s.densities, OneOrMany::into_vec),
            categories: self
                .category
                .clone()
                .map_or(s.categories, OneOrMany::into_vec),
            fragmentation_penetration: self
                .fragmentation_penetration
                .unwrap_or(s.fragmentation_penetration),
        };
        sweep.validate()?;
        let config = ExperimentConfig {
            grid: GridParams {
                nx: self.grid_nx.unwrap_or(d.grid.nx),
                ny: self.grid_ny.unwrap_or(d.grid.ny),
                block_length: self.block_length.unwrap_or(d.grid.block_length),
                corridor_width: self.corridor_width.unwrap_or(d.grid.corridor_width),
            },
            vehicle_density: self.vehicle_density.unwrap_or(d.vehicle_density),
            vehicle_speed: self.vehicle_speed.unwrap_or(d.vehicle_speed),
            vehicle_camera,
            stationary_camera,
            stationary_density: 0.0,
            penetration: sweep.penetrations.first().copied().unwrap_or(0.0),
            category: sweep.categories[0],
            step: self.step.unwrap_or(d.step),
            round_length: self.round_length.unwrap_or(d.round_length),
            rounds: self.rounds.unwrap_or(d.rounds),
            seed: self.seed.unwrap_or(d.seed),
            occlusion: self.occlusion.unwrap_or(d.occlusion),
            detection_rule: self.detection_rule.unwrap_or(d.detection_rule),
            fragment_condition: self.fragment_condition.unwrap_or(d.fragment_condition),
            observation_spacing: self.observation_spacing.unwrap_or(d.observation_spacing),
            export_streams: self.export_streams.unwrap_or(d.export_streams),
        };
        for cell in sweep.cells(&config) {
            cell.validate()?;
        }
        Ok((config, sweep))
    }

    /// Fully populated document equivalent to a resolved configuration.
    pub fn from_resolved(config: &ExperimentConfig, sweep: &SweepSpec) -> ConfigFile {
        ConfigFile {
            grid_nx: Some(config.grid.nx),
            grid_ny: Some(config.grid.ny),
            block_length: Some(config.grid.block_length),
            corridor_width: Some(config.grid.corridor_width),
            vehicle_density: Some(config.vehicle_density),
            vehicle_speed: Some(config.vehicle_speed),
            vehicle_camera_range: Some(config.vehicle_camera.range),
            vehicle_camera_angle: Some(2.0 * config.vehicle_camera.fov_half_angle_deg),
            stationary_camera_range: Some(config.stationary_camera.range),
            stationary_camera_angle: Some(2.0 * config.stationary_camera.fov_half_angle_deg),
            penetration: Some(OneOrMany::Many(sweep.penetrations.clone())),
            density: Some(OneOrMany::Many(sweep.densities.clone())),
            category: Some(OneOrMany::Many(sweep.categories.clone())),
            fragmentation_penetration: Some(sweep.fragmentation_penetration),
            step: Some(config.step),
            round_length: Some(config.round_length),
            rounds: Some(config.rounds),
            seed: Some(config.seed),
            occlusion: Some(config.occlusion),
            detection_rule: Some(config.detection_rule),
            fragment_condition: Some(config.fragment_condition),
            observation_spacing: Some(config.observation_spacing),
            export_streams: Some(config.export_streams),
        }
    }
}

/// Read and resolve a config file.
pub fn parse_config(path: &Path) -> Result<(ExperimentConfig, SweepSpec)> {
    ConfigFile::load(path)?.resolve()
}
