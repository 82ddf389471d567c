use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use vsvsim::config::{ConfigFile, OneOrMany, Preset};
use vsvsim::{emit_results, run_sweep, Category, ExperimentConfig, SweepSpec};

/// Sweep detection, monitoring and fragmentation over penetrations and
/// stationary camera densities.
#[derive(Debug, Parser)]
#[command(name = "vsvsim", version)]
struct Cli {
    /// Flat JSON config; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<u32>,
    /// Vehicle penetrations, comma separated.
    #[arg(long, value_delimiter = ',')]
    penetration: Option<Vec<f64>>,
    /// Stationary camera densities per km², comma separated.
    #[arg(long, value_delimiter = ',')]
    density: Option<Vec<f64>>,
    /// Event categories, comma separated.
    #[arg(long, value_delimiter = ',')]
    category: Option<Vec<Category>>,
    #[arg(long)]
    occlusion: Option<bool>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Print the resolved config as JSON and exit.
    #[arg(long)]
    manifest: bool,
}

impl Cli {
    fn flags(&self) -> ConfigFile {
        ConfigFile {
            seed: self.seed,
            rounds: self.rounds,
            penetration: self.penetration.clone().map(OneOrMany::Many),
            density: self.density.clone().map(OneOrMany::Many),
            category: self.category.clone().map(OneOrMany::Many),
            occlusion: self.occlusion,
            ..ConfigFile::default()
        }
    }
}

fn resolve(cli: &Cli) -> vsvsim::Result<(ExperimentConfig, SweepSpec)> {
    let mut merged = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    if let Some(preset) = cli.preset {
        merged = merged.overlay(ConfigFile::preset(preset));
    }
    merged.overlay(cli.flags()).resolve()
}

fn run(cli: &Cli) -> vsvsim::Result<()> {
    let (config, sweep) = resolve(cli)?;

    if cli.manifest {
        let doc = ConfigFile::from_resolved(&config, &sweep);
        println!("{}", serde_json::to_string_pretty(&doc).expect("config serializes"));
        return Ok(());
    }

    let started = Instant::now();
    let report = run_sweep(&config, &sweep)?;
    for path in emit_results(&report, &config, &sweep, &cli.out)? {
        println!("{}", path.display());
    }
    eprintln!(
        "{} cells x {} rounds in {:.1} s",
        report.cells.len(),
        config.rounds,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
