//! Detection, monitoring and fragmentation metrics for one event, and their
//! aggregation over independent rounds.
//!
//! Two routes compute the per-round metrics. [`detect`], [`monitor`] and
//! [`fragment_count`] work on a fully materialised [`CoverageLog`];
//! [`CoverageTracker`] consumes the same information one step at a time and
//! is what the engine uses. Tests hold the two against each other.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::Category;

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Minimum continuous observation needed for a detection, seconds.
pub const DETECTION_WINDOW: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionRule {
    /// The same cell observed over one contiguous window of at least a second.
    #[default]
    ContiguousCell,
    /// The same cell observed for at least a second in total.
    CumulativeCell,
    /// Some cell observed at every step of a window of at least a second.
    ContiguousAnyCell,
}

/// Which rounds feed the fragment-count histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FragmentCondition {
    #[default]
    Detected,
    Monitored,
    All,
}

/// Number of consecutive steps that make up the detection window.
pub fn detection_steps(step: f64) -> usize {
    ((DETECTION_WINDOW / step) - 1e-9).ceil().max(1.0) as usize
}

/// Observations of one event: for each of its active steps, the
/// `(camera id, cell index)` pairs that were visible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoverageLog {
    pub step: f64,
    pub cell_count: u32,
    pub steps: Vec<Vec<(u32, u32)>>,
}

impl CoverageLog {
    pub fn new(step: f64, cell_count: u32) -> Self {
        Self {
            step,
            cell_count,
            steps: Vec::new(),
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.steps
            .iter()
            .all(|s| s.iter().all(|&(_, cell)| cell < self.cell_count))
    }
}

pub fn detect(log: &CoverageLog, rule: DetectionRule) -> bool {
    let need = detection_steps(log.step);
    match rule {
        DetectionRule::ContiguousCell => {
            let mut run: BTreeMap<u32, usize> = BTreeMap::new();
            for pairs in &log.steps {
                let cells: BTreeSet<u32> = pairs.iter().map(|p| p.1).collect();
                run.retain(|c, _| cells.contains(c));
                for c in cells {
                    let r = run.entry(c).or_insert(0);
                    *r += 1;
                    if *r >= need {
                        return true;
                    }
                }
            }
            false
        }
        DetectionRule::CumulativeCell => {
            let mut total: BTreeMap<u32, usize> = BTreeMap::new();
            for pairs in &log.steps {
                let cells: BTreeSet<u32> = pairs.iter().map(|p| p.1).collect();
                for c in cells {
                    *total.entry(c).or_insert(0) += 1;
                }
            }
            total.values().any(|&n| n >= need)
        }
        DetectionRule::ContiguousAnyCell => {
            let mut run = 0;
            for pairs in &log.steps {
                run = if pairs.is_empty() { 0 } else { run + 1 };
                if run >= need {
                    return true;
                }
            }
            false
        }
    }
}

/// Every active step has at least one observation; the observing camera may
/// change from step to step.
pub fn monitor(log: &CoverageLog) -> bool {
    !log.steps.is_empty() && log.steps.iter().all(|s| !s.is_empty())
}

/// Maximal runs of consecutive steps in which one camera sees at least one
/// cell, summed over cameras.
pub fn fragment_count(log: &CoverageLog) -> u32 {
    let mut previous: BTreeSet<u32> = BTreeSet::new();
    let mut count = 0;
    for pairs in &log.steps {
        let current: BTreeSet<u32> = pairs.iter().map(|p| p.0).collect();
        count += current.difference(&previous).count() as u32;
        previous = current;
    }
    count
}

/// Per-round summary produced by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub detected: bool,
    pub monitored: bool,
    pub fragment_count: u32,
    pub coverage_seconds: f64,
    pub seed: u64,
}

/// Streaming counterpart of the batch metrics.
#[derive(Debug, Clone)]
pub struct CoverageTracker {
    rule: DetectionRule,
    need: usize,
    step: f64,
    steps_seen: usize,
    covered_steps: usize,
    any_run: usize,
    cell_run: Vec<usize>,
    cell_last: Vec<usize>,
    cell_total: Vec<usize>,
    camera_last: Vec<usize>,
    fragments: u32,
    detected: bool,
    monitored: bool,
}

const NEVER: usize = usize::MAX;

impl CoverageTracker {
    pub fn new(rule: DetectionRule, step: f64, cell_count: usize) -> Self {
        Self {
            rule,
            need: detection_steps(step),
            step,
            steps_seen: 0,
            covered_steps: 0,
            any_run: 0,
            cell_run: vec![0; cell_count],
            cell_last: vec![NEVER; cell_count],
            cell_total: vec![0; cell_count],
            camera_last: Vec::new(),
            fragments: 0,
            detected: false,
            monitored: true,
        }
    }

    /// Whether the next call to [`record`](Self::record) needs the observed
    /// cells. Once detection is settled only the camera list matters.
    pub fn needs_cells(&self) -> bool {
        !self.detected && self.rule != DetectionRule::ContiguousAnyCell
    }

    pub fn detected(&self) -> bool {
        self.detected
    }

    pub fn monitored(&self) -> bool {
        self.monitored
    }

    /// Record one step. `cells` are the distinct cells seen by any camera,
    /// `cameras` the distinct cameras seeing any cell.
    pub fn record(&mut self, cells: &[u32], cameras: &[u32]) {
        let k = self.steps_seen;
        self.steps_seen += 1;
        let any = !cameras.is_empty();
        if any {
            self.covered_steps += 1;
            self.any_run += 1;
        } else {
            self.any_run = 0;
            self.monitored = false;
        }

        if !self.detected {
            match self.rule {
                DetectionRule::ContiguousAnyCell => {
                    self.detected = self.any_run >= self.need;
                }
                DetectionRule::ContiguousCell => {
                    for &c in cells {
                        let c = c as usize;
                        let continues = k > 0 && self.cell_last[c] == k - 1;
                        self.cell_run[c] = if continues { self.cell_run[c] + 1 } else { 1 };
                        self.cell_last[c] = k;
                        self.detected |= self.cell_run[c] >= self.need;
                    }
                }
                DetectionRule::CumulativeCell => {
                    for &c in cells {
                        let c = c as usize;
                        if self.cell_last[c] != k {
                            self.cell_last[c] = k;
                            self.cell_total[c] += 1;
                            self.detected |= self.cell_total[c] >= self.need;
                        }
                    }
                }
            }
        }

        for &cam in cameras {
            let cam = cam as usize;
            if cam >= self.camera_last.len() {
                self.camera_last.resize(cam + 1, NEVER);
            }
            let last = self.camera_last[cam];
            if last == k {
                continue;
            }
            if k == 0 || last != k - 1 {
                self.fragments += 1;
            }
            self.camera_last[cam] = k;
        }
    }

    /// Close the round. An event watched at every step of a lifetime of at
    /// least the detection window counts as detected under any rule.
    pub fn finish(&self, seed: u64) -> RoundResult {
        let monitored = self.monitored && self.steps_seen > 0;
        RoundResult {
            detected: self.detected || (monitored && self.steps_seen >= self.need),
            monitored,
            fragment_count: self.fragments,
            coverage_seconds: self.covered_steps as f64 * self.step,
            seed,
        }
    }
}

/// Score a complete log through the streaming tracker.
pub fn track_log(log: &CoverageLog, rule: DetectionRule, seed: u64) -> RoundResult {
    let mut tracker = CoverageTracker::new(rule, log.step, log.cell_count as usize);
    for pairs in &log.steps {
        let cells: Vec<u32> = pairs.iter().map(|p| p.1).collect::<BTreeSet<_>>().into_iter().collect();
        let cams: Vec<u32> = pairs.iter().map(|p| p.0).collect::<BTreeSet<_>>().into_iter().collect();
        tracker.record(&cells, &cams);
    }
    tracker.finish(seed)
}

/// A Bernoulli proportion with its 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub successes: u64,
    pub trials: u64,
    pub p: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Estimate {
    pub fn wilson(successes: u64, trials: u64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::NoRounds);
        }
        let n = trials as f64;
        let p = successes as f64 / n;
        let z2 = Z_95 * Z_95;
        let denom = 1.0 + z2 / n;
        let centre = (p + z2 / (2.0 * n)) / denom;
        let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        let (mut lo, mut hi) = ((centre - half).max(0.0), (centre + half).min(1.0));
        if successes == 0 {
            lo = 0.0;
        }
        if successes == trials {
            hi = 1.0;
        }
        Ok(Self {
            successes,
            trials,
            p,
            ci_lo: lo,
            ci_hi: hi,
        })
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_hi - self.ci_lo)
    }
}

/// Counts of rounds by number of fragments.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentHistogram {
    pub counts: BTreeMap<u32, u64>,
}

impl FragmentHistogram {
    pub fn add(&mut self, fragments: u32) {
        *self.counts.entry(fragments).or_insert(0) += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// `(fragments, pdf, cdf)` rows in increasing fragment order. The last
    /// cdf value is exactly 1.
    pub fn rows(&self) -> Vec<(u32, f64, f64)> {
        let total = self.total();
        let mut acc = 0;
        self.counts
            .iter()
            .map(|(&k, &n)| {
                acc += n;
                (k, n as f64 / total as f64, acc as f64 / total as f64)
            })
            .collect()
    }

    /// `P(fragments <= k)`; zero for an empty histogram.
    pub fn cdf(&self, k: u32) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.counts.range(..=k).map(|(_, &n)| n).sum::<u64>() as f64 / total as f64
    }

    /// `P(fragments > k)`.
    pub fn tail(&self, k: u32) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            1.0 - self.cdf(k)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    /// Vehicle-mounted cameras only; level is the penetration.
    Vsv,
    /// Stationary cameras only; level is the density per km².
    Stationary,
    /// Both; level is the penetration.
    Combined,
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            System::Vsv => "vsv",
            System::Stationary => "stationary",
            System::Combined => "combined",
        })
    }
}

/// One sweep cell: a system at a given penetration or density, for one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub system: System,
    pub category: Category,
    pub level: f64,
    pub rounds: u64,
    pub detect: Estimate,
    pub monitor: Estimate,
    pub fragments: FragmentHistogram,
    pub mean_coverage_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cells: Vec<CellReport>,
}

impl MetricsReport {
    pub fn find(&self, system: System, category: Category, level: f64) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.system == system && c.category == category && (c.level - level).abs() < 1e-9)
    }

    /// Cells of one system and category, ordered by level.
    pub fn series(&self, system: System, category: Category) -> Vec<&CellReport> {
        let mut v: Vec<_> = self
            .cells
            .iter()
            .filter(|c| c.system == system && c.category == category)
            .collect();
        v.sort_by(|a, b| a.level.total_cmp(&b.level));
        v
    }
}

/// Reduce per-round results into one cell. The result does not depend on
/// the order of `results`.
pub fn aggregate(
    system: System,
    category: Category,
    level: f64,
    results: &[RoundResult],
    condition: FragmentCondition,
) -> Result<CellReport> {
    if results.is_empty() {
        return Err(Error::NoRounds);
    }
    let n = results.len() as u64;
    let detected = results.iter().filter(|r| r.detected).count() as u64;
    let monitored = results.iter().filter(|r| r.monitored).count() as u64;
    let mut fragments = FragmentHistogram::default();
    for r in results {
        let include = match condition {
            FragmentCondition::Detected => r.detected,
            FragmentCondition::Monitored => r.monitored,
            FragmentCondition::All => true,
        };
        if include {
            fragments.add(r.fragment_count);
        }
    }
    // sum in a fixed order so the mean is order independent
    let mut coverage: Vec<f64> = results.iter().map(|r| r.coverage_seconds).collect();
    coverage.sort_by(f64::total_cmp);
    let mean_coverage_seconds = coverage.iter().sum::<f64>() / n as f64;
    Ok(CellReport {
        system,
        category,
        level,
        rounds: n,
        detect: Estimate::wilson(detected, n)?,
        monitor: Estimate::wilson(monitored, n)?,
        fragments,
        mean_coverage_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn log_from(steps: Vec<Vec<(u32, u32)>>) -> CoverageLog {
        CoverageLog {
            step: 0.05,
            cell_count: 8,
            steps,
        }
    }

    fn cell_run(n: usize) -> Vec<Vec<(u32, u32)>> {
        vec![vec![(0, 0)]; n]
    }

    #[test]
    fn detection_threshold_is_inclusive() {
        assert_eq!(detection_steps(0.05), 20);
        assert!(detect(&log_from(cell_run(20)), DetectionRule::ContiguousCell));
        assert!(!detect(&log_from(cell_run(10)), DetectionRule::ContiguousCell));
    }

    #[test]
    fn split_runs_do_not_detect_under_contiguous_rule() {
        let mut steps = cell_run(10);
        steps.push(vec![]);
        steps.extend(cell_run(10));
        let log = log_from(steps);
        assert!(!detect(&log, DetectionRule::ContiguousCell));
        assert!(detect(&log, DetectionRule::CumulativeCell));
        assert!(!detect(&log, DetectionRule::ContiguousAnyCell));
    }

    #[test]
    fn any_cell_rule_accepts_alternating_cells() {
        let steps: Vec<_> = (0..20).map(|k| vec![(0, k % 2)]).collect();
        let log = log_from(steps);
        assert!(!detect(&log, DetectionRule::ContiguousCell));
        assert!(detect(&log, DetectionRule::ContiguousAnyCell));
    }

    #[test]
    fn monitor_allows_handoffs() {
        let steps: Vec<_> = (0..40).map(|k| vec![(k % 2, 0)]).collect();
        assert!(monitor(&log_from(steps)));
        let mut gap = cell_run(40);
        gap[17].clear();
        assert!(!monitor(&log_from(gap)));
    }

    #[test]
    fn fragment_examples() {
        assert_eq!(fragment_count(&log_from(cell_run(40))), 1);
        let steps: Vec<_> = (0..=30)
            .map(|k| if k <= 10 || k >= 20 { vec![(7, 0)] } else { vec![] })
            .collect();
        assert_eq!(fragment_count(&log_from(steps)), 2);
        assert_eq!(fragment_count(&log_from(vec![])), 0);
    }

    #[test]
    fn wilson_examples() {
        // closed form evaluated independently: 0.5693094295, 0.6299252188
        let e = Estimate::wilson(600, 1000).unwrap();
        assert!((e.p - 0.6).abs() < 1e-12);
        assert!((e.ci_lo - 0.569_309_429_514_266_2).abs() < 1e-9);
        assert!((e.ci_hi - 0.629_925_218_788_622_6).abs() < 1e-9);
        let zero = Estimate::wilson(0, 200).unwrap();
        assert_eq!((zero.p, zero.ci_lo), (0.0, 0.0));
        assert!((zero.ci_hi - 0.018_845_326_377_267_26).abs() < 1e-9);
        let one = Estimate::wilson(1, 1).unwrap();
        assert_eq!(one.ci_hi, 1.0);
        assert!((one.ci_lo - 0.206_549_314_377_237_4).abs() < 1e-9);
        assert!(Estimate::wilson(0, 0).is_err());
    }

    #[test]
    fn histogram_cdf() {
        let mut h = FragmentHistogram::default();
        for k in [1, 1, 1, 2] {
            h.add(k);
        }
        let rows = h.rows();
        assert_eq!(rows, vec![(1, 0.75, 0.75), (2, 0.25, 1.0)]);
        assert_eq!(h.cdf(1), 0.75);
        assert_eq!(h.tail(1), 0.25);
    }

    #[test]
    fn aggregate_counts_and_conditions() {
        let r = |d, m, f| RoundResult {
            detected: d,
            monitored: m,
            fragment_count: f,
            coverage_seconds: 1.0,
            seed: 0,
        };
        let rs = [r(true, true, 1), r(true, false, 3), r(false, false, 0)];
        let cell = aggregate(System::Vsv, Category::Explosion, 0.3, &rs, FragmentCondition::Detected).unwrap();
        assert_eq!(cell.detect.successes, 2);
        assert_eq!(cell.monitor.successes, 1);
        assert_eq!(cell.fragments.total(), 2);
        let all = aggregate(System::Vsv, Category::Explosion, 0.3, &rs, FragmentCondition::All).unwrap();
        assert_eq!(all.fragments.counts.get(&0), Some(&1));
        assert!(aggregate(System::Vsv, Category::Explosion, 0.3, &[], FragmentCondition::All).is_err());
    }

    #[test]
    fn single_round_report() {
        let rs = [RoundResult {
            detected: true,
            monitored: false,
            fragment_count: 4,
            coverage_seconds: 1.5,
            seed: 9,
        }];
        let cell = aggregate(System::Vsv, Category::Robbery, 1.0, &rs, FragmentCondition::Detected).unwrap();
        assert_eq!(cell.detect.p, 1.0);
        assert_eq!(cell.monitor.p, 0.0);
        assert_eq!(cell.fragments.rows(), vec![(4, 1.0, 1.0)]);
    }

    fn arb_log() -> impl Strategy<Value = CoverageLog> {
        // sparse random observations from 4 cameras over 3 cells
        prop::collection::vec(
            prop::collection::vec((0u32..4, 0u32..3), 0..4),
            1..120,
        )
        .prop_map(|mut steps| {
            for s in &mut steps {
                s.sort_unstable();
                s.dedup();
            }
            CoverageLog { step: 0.05, cell_count: 3, steps }
        })
    }

    fn brute_fragments(log: &CoverageLog) -> u32 {
        let mut total = 0;
        for cam in 0..4 {
            let series: Vec<bool> = log.steps.iter().map(|s| s.iter().any(|p| p.0 == cam)).collect();
            total += series
                .iter()
                .enumerate()
                .filter(|&(i, &on)| on && (i == 0 || !series[i - 1]))
                .count() as u32;
        }
        total
    }

    proptest! {
        #[test]
        fn tracker_matches_batch(log in arb_log()) {
            for rule in [DetectionRule::ContiguousCell, DetectionRule::CumulativeCell, DetectionRule::ContiguousAnyCell] {
                let streamed = track_log(&log, rule, 0);
                let full_watch = monitor(&log) && log.steps.len() >= detection_steps(log.step);
                prop_assert_eq!(streamed.detected, detect(&log, rule) || full_watch);
                prop_assert_eq!(streamed.monitored, monitor(&log));
                prop_assert_eq!(streamed.fragment_count, fragment_count(&log));
            }
        }

        #[test]
        fn fragment_count_matches_run_length(log in arb_log()) {
            prop_assert_eq!(fragment_count(&log), brute_fragments(&log));
        }

        #[test]
        fn monitor_implies_detect_and_a_fragment(log in arb_log()) {
            // events of at least a second have 20 or more steps
            if log.steps.len() >= 20 && monitor(&log) {
                prop_assert!(detect(&log, DetectionRule::ContiguousAnyCell));
                prop_assert!(fragment_count(&log) >= 1);
                for rule in [DetectionRule::ContiguousCell, DetectionRule::CumulativeCell] {
                    prop_assert!(track_log(&log, rule, 0).detected);
                }
            }
        }

        #[test]
        fn aggregate_is_order_independent(flags in prop::collection::vec((any::<bool>(), any::<bool>(), 0u32..20, 0.0f64..10.0), 1..50),
                                           rot in 0usize..50) {
            let rs: Vec<RoundResult> = flags.iter().map(|&(d, m, f, c)| RoundResult {
                detected: d || m, monitored: m, fragment_count: f, coverage_seconds: c, seed: 0,
            }).collect();
            let mut shuffled = rs.clone();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            let a = aggregate(System::Vsv, Category::Picket, 0.5, &rs, FragmentCondition::Detected).unwrap();
            let b = aggregate(System::Vsv, Category::Picket, 0.5, &shuffled, FragmentCondition::Detected).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
