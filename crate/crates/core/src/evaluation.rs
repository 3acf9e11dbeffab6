//! Monte Carlo harness over a grid of significance levels, the relative
//! magnitude diagnostic, and an empirical regret audit for recorded runs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{batched_permutation_run, PermutationConfig};
use crate::betting::{log_loss, DecisionInterval};
use crate::detector::{run_detector_untraced, BetRecord, DPolicy, DetectorConfig, Side, TestOutcome};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::stream::{generate, ScoreObservation, StreamSpec};

pub const TAG_H0: u64 = 0;
pub const TAG_H1: u64 = 1;

/// Strictly increasing significance levels in `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AlphaGrid(Vec<f64>);

impl AlphaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(a) = values.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::Config(format!("alpha grid values must lie in (0, 1), got {a}")));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("alpha grid must be strictly increasing".into()));
        }
        Ok(Self(values))
    }

    /// `n` evenly spaced points from `lo` to `hi` inclusive.
    pub fn linspace(lo: f64, hi: f64, n: usize) -> Result<Self> {
        let values = match n {
            0 => vec![],
            1 => vec![lo],
            _ => (0..n)
                .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
                .collect(),
        };
        Self::new(values)
    }

    pub fn single(alpha: f64) -> Result<Self> {
        Self::new(vec![alpha])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl Default for AlphaGrid {
    fn default() -> Self {
        Self::linspace(0.005, 0.1, 20).expect("default grid is valid")
    }
}

impl TryFrom<Vec<f64>> for AlphaGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<AlphaGrid> for Vec<f64> {
    fn from(g: AlphaGrid) -> Self {
        g.0
    }
}

/// What the harness needs from one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub declared: bool,
    pub rejection_time: usize,
    pub violations: usize,
}

impl From<&TestOutcome> for RunSummary {
    fn from(o: &TestOutcome) -> Self {
        Self {
            declared: o.declared(),
            rejection_time: o.rejection_time,
            violations: o.violations.len(),
        }
    }
}

/// A sequential test the harness can replay at any level and seed.
pub trait SequentialTest: Sync {
    fn horizon(&self) -> Result<usize>;
    fn run_once(&self, alpha: f64, seed: u64, stream: &[ScoreObservation]) -> Result<RunSummary>;
    fn snapshot(&self) -> serde_json::Value;
    /// `(epsilon, d)` when both are fixed in advance.
    fn bounds(&self) -> Option<(f64, f64)> {
        None
    }
}

impl SequentialTest for DetectorConfig {
    fn horizon(&self) -> Result<usize> {
        self.time_budget
            .ok_or_else(|| Error::Config("Monte Carlo evaluation needs a finite time_budget".into()))
    }

    fn run_once(&self, alpha: f64, seed: u64, stream: &[ScoreObservation]) -> Result<RunSummary> {
        let cfg = DetectorConfig { alpha, seed, ..self.clone() };
        run_detector_untraced(&cfg, stream).map(|o| RunSummary::from(&o))
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }

    fn bounds(&self) -> Option<(f64, f64)> {
        match self.d_policy {
            DPolicy::Constant { d } => Some((self.epsilon, d)),
            _ => None,
        }
    }
}

/// The permutation baseline run up to a fixed horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineTest {
    pub config: PermutationConfig,
    pub time_budget: usize,
}

impl SequentialTest for BaselineTest {
    fn horizon(&self) -> Result<usize> {
        Ok(self.time_budget)
    }

    fn run_once(&self, alpha: f64, seed: u64, stream: &[ScoreObservation]) -> Result<RunSummary> {
        let cfg = PermutationConfig { alpha, seed, ..self.config.clone() };
        let out = batched_permutation_run(&cfg, stream, self.time_budget)?;
        Ok(RunSummary {
            declared: out.declared(),
            rejection_time: out.rejection_time,
            violations: 0,
        })
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub fpr: f64,
    pub mean_tau: f64,
    pub declared_fraction_h1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub per_alpha: Vec<AlphaRow>,
    pub runs: usize,
    pub time_budget: usize,
    /// `(delta - epsilon)/(d - epsilon)` for the alternative streams, when defined.
    pub ratio: Option<f64>,
    pub master_seed: u64,
    pub violation_count: usize,
    pub config: serde_json::Value,
}

/// Run seed of replicate `run` at grid point `alpha_index` under hypothesis `tag`.
pub fn run_seed(master_seed: u64, alpha_index: usize, run: usize, tag: u64) -> u64 {
    derive_seed(master_seed, &[alpha_index as u64, run as u64, tag])
}

fn draw(pair: (&StreamSpec, &StreamSpec), seed: u64, length: usize) -> Result<Vec<ScoreObservation>> {
    let reseed = |s: &StreamSpec| StreamSpec::new(s.kind.clone(), derive_seed(seed, &[s.seed]));
    generate(&reseed(pair.0), &reseed(pair.1), length)
}

/// Estimate FPR under `h0` and rejection time / power under `h1` at every
/// grid level. Each (level, run, hypothesis) cell gets its own derived seed,
/// and results are reduced in index order, so output does not depend on
/// thread scheduling.
pub fn monte_carlo<T: SequentialTest>(
    test: &T,
    h0: (&StreamSpec, &StreamSpec),
    h1: (&StreamSpec, &StreamSpec),
    runs: usize,
    grid: &AlphaGrid,
    master_seed: u64,
) -> Result<MonteCarloReport> {
    if runs == 0 {
        return Err(Error::Config("runs must be >= 1".into()));
    }
    let horizon = test.horizon()?;
    let alphas = grid.values();

    let cells: Vec<(RunSummary, RunSummary)> = (0..alphas.len() * runs)
        .into_par_iter()
        .map(|cell| {
            let (ai, run) = (cell / runs, cell % runs);
            let alpha = alphas[ai];
            let s0 = run_seed(master_seed, ai, run, TAG_H0);
            let s1 = run_seed(master_seed, ai, run, TAG_H1);
            let r0 = test.run_once(alpha, s0, &draw(h0, s0, horizon)?)?;
            let r1 = test.run_once(alpha, s1, &draw(h1, s1, horizon)?)?;
            Ok((r0, r1))
        })
        .collect::<Result<_>>()?;

    let mut violation_count = 0;
    let per_alpha = alphas
        .iter()
        .zip(cells.chunks(runs))
        .map(|(&alpha, chunk)| {
            let mut false_pos = 0usize;
            let mut declared = 0usize;
            let mut tau = 0usize;
            for (r0, r1) in chunk {
                false_pos += r0.declared as usize;
                declared += r1.declared as usize;
                tau += r1.rejection_time;
                violation_count += r0.violations + r1.violations;
            }
            let n = runs as f64;
            AlphaRow {
                alpha,
                fpr: false_pos as f64 / n,
                mean_tau: tau as f64 / n,
                declared_fraction_h1: declared as f64 / n,
            }
        })
        .collect();

    let ratio = match (test.bounds(), h1.0.kind.nominal_mean(), h1.1.kind.nominal_mean()) {
        (Some((eps, d)), Some(mx), Some(my)) => ratio_diagnostic((mx - my).abs(), eps, d).ok(),
        _ => None,
    };

    Ok(MonteCarloReport {
        per_alpha,
        runs,
        time_budget: horizon,
        ratio,
        master_seed,
        violation_count,
        config: serde_json::json!({
            "test": test.snapshot(),
            "h0": [h0.0, h0.1],
            "h1": [h1.0, h1.1],
            "alphas": alphas,
        }),
    })
}

/// Relative magnitude `(delta - epsilon)/(d - epsilon)` of the mean gap.
pub fn ratio_diagnostic(delta: f64, epsilon: f64, d: f64) -> Result<f64> {
    if !(delta.is_finite() && epsilon.is_finite() && d.is_finite()) {
        return Err(Error::InvalidInput("ratio inputs must be finite".into()));
    }
    if d <= epsilon {
        return Err(Error::InvalidInput(format!("ratio needs d > epsilon, got d {d}, epsilon {epsilon}")));
    }
    Ok((delta - epsilon) / (d - epsilon))
}

// ---------------------------------------------------------------------------
// Regret audit
// ---------------------------------------------------------------------------

pub const AUDIT_RESOLUTION: f64 = 1e-4;
pub const AUDIT_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub regret: f64,
    pub bound: f64,
    pub satisfied: bool,
    pub theta_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RegretAudit {
    Audited(RegretReport),
    Skipped { reason: String },
}

fn total_loss(records: &[BetRecord], theta: f64) -> f64 {
    records
        .iter()
        .map(|r| log_loss(r.outcome, theta).unwrap_or(f64::INFINITY))
        .sum()
}

/// Regret bound `ln(1 + 4 d*^2 T)/(2 gamma) + gamma D1^2 / 2`.
pub fn regret_bound(d_star: f64, gamma: f64, rounds: usize, first_diameter: f64) -> f64 {
    (1.0 + 4.0 * d_star * d_star * rounds as f64).ln() / (2.0 * gamma) + gamma / 2.0 * first_diameter * first_diameter
}

/// Audit one bettor's recorded rounds against the regret bound. The
/// comparator is the best fixed fraction on a `1e-4` grid over the
/// intersection of the decision intervals.
pub fn regret_audit_records(records: &[BetRecord], d_star: f64, gamma: f64) -> Result<RegretReport> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidInput("regret audit needs at least one round".into()))?;
    if !(d_star.is_finite() && d_star > 0.0) {
        return Err(Error::InvalidBound(d_star));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Config(format!("gamma must be > 0, got {gamma}")));
    }
    let common = records
        .iter()
        .try_fold(first.interval, |acc: DecisionInterval, r| acc.intersect(&r.interval))
        .ok_or_else(|| Error::InvalidInput("decision intervals have empty intersection".into()))?;

    let steps = ((common.hi - common.lo) / AUDIT_RESOLUTION).floor() as usize;
    let mut best = (f64::INFINITY, common.lo);
    for theta in (0..=steps)
        .map(|i| common.lo + i as f64 * AUDIT_RESOLUTION)
        .chain(std::iter::once(common.hi))
    {
        let loss = total_loss(records, theta);
        if loss < best.0 {
            best = (loss, theta);
        }
    }

    let learner: f64 = records
        .iter()
        .map(|r| log_loss(r.outcome, r.theta))
        .sum::<Result<f64>>()?;
    let regret = learner - best.0;
    let bound = regret_bound(d_star, gamma, records.len(), first.interval.diameter());
    Ok(RegretReport {
        regret,
        bound,
        satisfied: regret <= bound + AUDIT_SLACK,
        theta_star: best.1,
    })
}

/// [`regret_audit_records`] on one side of a recorded run; runs with flagged
/// violations are skipped.
pub fn regret_audit(outcome: &TestOutcome, side: Side, d_star: f64, gamma: f64) -> Result<RegretAudit> {
    if !outcome.violations.is_empty() {
        return Ok(RegretAudit::Skipped {
            reason: format!("trajectory has violations at steps {:?}", outcome.violations),
        });
    }
    let records = outcome.bet_records(side);
    if records.is_empty() {
        return Ok(RegretAudit::Skipped {
            reason: "no recorded rounds for this side".into(),
        });
    }
    regret_audit_records(&records, d_star, gamma).map(RegretAudit::Audited)
}

/// Both sides of `ln W_T = sum ln(1 - g_t u) - Regret_T(u)` for a fixed comparator `u`.
pub fn log_wealth_identity(records: &[BetRecord], u: f64) -> Result<(f64, f64)> {
    let mut log_wealth = 0.0;
    let mut comparator = 0.0;
    let mut regret = 0.0;
    for r in records {
        let learner = log_loss(r.outcome, r.theta)?;
        let fixed = log_loss(r.outcome, u)?;
        log_wealth -= learner;
        comparator -= fixed;
        regret += learner - fixed;
    }
    Ok((log_wealth, comparator - regret))
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

pub const REPORT_COLUMNS: [&str; 4] = ["alpha", "fpr", "mean_tau", "declared_fraction_h1"];

pub fn write_report_csv(report: &MonteCarloReport, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let ser = |e: csv::Error| Error::Serialize(e.to_string());
    w.write_record(REPORT_COLUMNS).map_err(ser)?;
    for row in &report.per_alpha {
        w.write_record([
            row.alpha.to_string(),
            row.fpr.to_string(),
            row.mean_tau.to_string(),
            row.declared_fraction_h1.to_string(),
        ])
        .map_err(ser)?;
    }
    w.flush().map_err(|e| Error::Serialize(e.to_string()))
}

pub fn write_report_json(report: &MonteCarloReport, mut writer: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, report).map_err(|e| Error::Serialize(e.to_string()))?;
    writeln!(writer).map_err(|e| Error::Serialize(e.to_string()))
}

/// Write `report.csv` or `report.json` into `dir` and return its path.
pub fn emit_report(report: &MonteCarloReport, dir: &Path, format: ReportFormat) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(match format {
        ReportFormat::Json => "report.json",
        ReportFormat::Csv => "report.csv",
    });
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        ReportFormat::Json => write_report_json(report, &mut out)?,
        ReportFormat::Csv => write_report_csv(report, &mut out)?,
    }
    out.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn load_report_json(path: &Path) -> Result<MonteCarloReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}
