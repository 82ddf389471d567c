//! CSV and manifest output for a finished sweep.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{ConfigFile, ExperimentConfig, SweepSpec};
use crate::error::{Error, Result};
use crate::events::Category;
use crate::metrics::{CellReport, Estimate, MetricsReport, System};

pub const DETECTION_FILE: &str = "detection.csv";
pub const MONITORING_FILE: &str = "monitoring.csv";
pub const FRAGMENTATION_FILE: &str = "fragmentation.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    version: &'static str,
    seed: u64,
    rounds: u32,
    config: ConfigFile,
    /// Vehicle penetration whose histogram was written, per category.
    fragmentation_penetration: BTreeMap<Category, f64>,
    cells: &'a [CellReport],
}

fn fmt_p(p: f64) -> String {
    format!("{p:.6}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_owned(),
        source,
    }
}

fn write_estimates(
    path: &Path,
    report: &MetricsReport,
    pick: impl Fn(&CellReport) -> &Estimate,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "system",
        "category",
        "penetration_or_density",
        "p",
        "ci_lo",
        "ci_hi",
        "rounds",
    ])?;
    for cell in &report.cells {
        let e = pick(cell);
        w.write_record([
            cell.system.to_string(),
            cell.category.to_string(),
            cell.level.to_string(),
            fmt_p(e.p),
            fmt_p(e.ci_lo),
            fmt_p(e.ci_hi),
            cell.rounds.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(path))
}

/// Vehicle cell of `category` whose penetration is closest to `target`.
/// Ties go to the lower penetration.
pub fn fragmentation_cell(
    report: &MetricsReport,
    category: Category,
    target: f64,
) -> Option<&CellReport> {
    report
        .series(System::Vsv, category)
        .into_iter()
        .min_by(|a, b| {
            (a.level - target)
                .abs()
                .total_cmp(&(b.level - target).abs())
                .then(a.level.total_cmp(&b.level))
        })
}

/// Write the three CSV files and `manifest.json` into `out_dir`, creating
/// it if needed. Returns the written paths.
pub fn emit_results(
    report: &MetricsReport,
    config: &ExperimentConfig,
    sweep: &SweepSpec,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let detection = out_dir.join(DETECTION_FILE);
    write_estimates(&detection, report, |c| &c.detect)?;
    let monitoring = out_dir.join(MONITORING_FILE);
    write_estimates(&monitoring, report, |c| &c.monitor)?;

    let fragmentation = out_dir.join(FRAGMENTATION_FILE);
    let mut used = BTreeMap::new();
    let mut w = csv::Writer::from_path(&fragmentation)?;
    w.write_record(["category", "fragments", "pdf", "cdf"])?;
    for &category in &sweep.categories {
        let Some(cell) = fragmentation_cell(report, category, sweep.fragmentation_penetration)
        else {
            continue;
        };
        used.insert(category, cell.level);
        let rows = cell.fragments.rows();
        let last = rows.len().saturating_sub(1);
        for (i, (k, pdf, cdf)) in rows.into_iter().enumerate() {
            // the running sum can land a hair under one
            let cdf = if i == last { 1.0 } else { cdf };
            w.write_record([
                category.to_string(),
                k.to_string(),
                fmt_p(pdf),
                fmt_p(cdf),
            ])?;
        }
    }
    w.flush().map_err(io_err(&fragmentation))?;

    let manifest_path = out_dir.join(MANIFEST_FILE);
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        rounds: config.rounds,
        config: ConfigFile::from_resolved(config, sweep),
        fragmentation_penetration: used,
        cells: &report.cells,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|source| Error::Json {
        path: manifest_path.clone(),
        source,
    })?;
    fs::write(&manifest_path, text + "\n").map_err(io_err(&manifest_path))?;

    Ok(vec![detection, monitoring, fragmentation, manifest_path])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{aggregate, FragmentCondition, RoundResult};

    fn round(detected: bool, fragments: u32) -> RoundResult {
        RoundResult {
            detected,
            monitored: false,
            fragment_count: fragments,
            coverage_seconds: 0.0,
            seed: 0,
        }
    }

    fn report() -> MetricsReport {
        let mut cells = Vec::new();
        for (level, hits) in [(0.2, 3), (0.4, 7)] {
            let results: Vec<_> = (0..10).map(|i| round(i < hits, 1 + i % 3)).collect();
            cells.push(
                aggregate(System::Vsv, Category::Robbery, level, &results, FragmentCondition::Detected)
                    .unwrap(),
            );
        }
        let results: Vec<_> = (0..10).map(|_| round(true, 1)).collect();
        cells.push(
            aggregate(System::Stationary, Category::Robbery, 300.0, &results, FragmentCondition::Detected)
                .unwrap(),
        );
        MetricsReport { cells }
    }

    #[test]
    fn writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let sweep = SweepSpec {
            penetrations: vec![0.2, 0.4],
            densities: vec![300.0],
            categories: vec![Category::Robbery],
            fragmentation_penetration: 0.3,
        };
        let paths = emit_results(&report(), &ExperimentConfig::default(), &sweep, dir.path()).unwrap();
        assert_eq!(paths.len(), 4);

        let det = fs::read_to_string(dir.path().join(DETECTION_FILE)).unwrap();
        let lines: Vec<_> = det.lines().collect();
        assert_eq!(lines[0], "system,category,penetration_or_density,p,ci_lo,ci_hi,rounds");
        assert!(lines[1].starts_with("vsv,robbery,0.2,0.300000,"), "{}", lines[1]);
        assert!(lines[3].starts_with("stationary,robbery,300,1.000000,"), "{}", lines[3]);

        let frag = fs::read_to_string(dir.path().join(FRAGMENTATION_FILE)).unwrap();
        let last = frag.lines().last().unwrap();
        assert!(last.ends_with(",1.000000"), "{last}");

        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
        // equidistant from 0.2 and 0.4: the lower one wins
        assert_eq!(manifest["fragmentation_penetration"]["robbery"], 0.2);
        assert_eq!(manifest["seed"], 1);
        assert_eq!(manifest["cells"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn one_cell_one_row_and_round_trip() {
        let full = report();
        let one = MetricsReport { cells: vec![full.cells[1].clone()] };
        let sweep = SweepSpec {
            penetrations: vec![0.4],
            densities: vec![],
            categories: vec![Category::Robbery],
            fragmentation_penetration: 0.3,
        };
        let dir = tempfile::tempdir().unwrap();
        emit_results(&one, &ExperimentConfig::default(), &sweep, dir.path()).unwrap();
        let mut r = csv::Reader::from_path(dir.path().join(DETECTION_FILE)).unwrap();
        let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
        assert_eq!(rows.len(), 1);
        let cell = &one.cells[0];
        let num = |i: usize| rows[0][i].parse::<f64>().unwrap();
        assert_eq!(&rows[0][0], "vsv");
        assert_eq!(num(2), cell.level);
        for (i, v) in [(3, cell.detect.p), (4, cell.detect.ci_lo), (5, cell.detect.ci_hi)] {
            assert!((num(i) - v).abs() <= 5e-7, "column {i}");
        }
        assert_eq!(num(6), 10.0);

        let mut r = csv::Reader::from_path(dir.path().join(FRAGMENTATION_FILE)).unwrap();
        let frag: Vec<(u32, f64, f64)> = r
            .records()
            .map(|x| {
                let x = x.unwrap();
                (x[1].parse().unwrap(), x[2].parse().unwrap(), x[3].parse().unwrap())
            })
            .collect();
        let expected = cell.fragments.rows();
        assert_eq!(frag.len(), expected.len());
        for (a, b) in frag.iter().zip(&expected) {
            assert_eq!(a.0, b.0);
            assert!((a.1 - b.1).abs() <= 5e-7 && (a.2 - b.2).abs() <= 5e-7);
        }
        assert_eq!(frag.last().unwrap().2, 1.0);
    }

    #[test]
    fn unwritable_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = emit_results(&report(), &ExperimentConfig::default(), &SweepSpec::default(), &blocker.join("out"));
        assert!(err.is_err());
    }
}
