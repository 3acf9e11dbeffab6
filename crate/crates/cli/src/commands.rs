use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use betdetect::baseline::{batched_permutation_run, Correction, PermutationConfig};
use betdetect::betting::{Mode, DEFAULT_GAMMA};
use betdetect::calibration::{
    calibrate_estimated, calibrate_oracle, CalibrationResult, DEFAULT_PREFIX, DEFAULT_SHUFFLES, EPSILON_POOL_SIZE,
};
use betdetect::detector::{run_detector, DPolicy, DetectorConfig, ViolationPolicy};
use betdetect::evaluation::{emit_report, monte_carlo, AlphaGrid, BaselineTest, MonteCarloReport, ReportFormat};
use betdetect::rng::{substream, STREAM_CALIBRATION};
use betdetect::stream::{generate, load_scores, preset, Preset, ScoreObservation, StreamKind, StreamSpec, PRESET_NAMES};
use betdetect::{Error, Result};
use serde::Serialize;

use crate::config::Settings;

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_BUDGET: usize = 500;
pub const DEFAULT_RUNS: usize = 1000;
pub const DEFAULT_BATCH: usize = 25;
pub const DEFAULT_PERMUTATIONS: usize = 2000;

pub struct Context {
    pub settings: Settings,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub format: Option<ReportFormat>,
}

impl Context {
    fn preset(&self) -> Result<Option<Preset>> {
        self.settings.str("preset")?.map(preset).transpose()
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.output_dir).map_err(|e| Error::io(&self.output_dir, e))?;
        let path = self.output_dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Serialize(e.to_string()))?;
        writeln!(out).and_then(|_| out.flush()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

fn required<T>(value: Option<T>, key: &str, why: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("key `{key}` is required {why}")))
}

fn detector_config(ctx: &Context, preset: Option<&Preset>, default_budget: Option<usize>) -> Result<DetectorConfig> {
    let s = &ctx.settings;
    let mode = match s.choice("mode", &["simple", "composite"])? {
        Some("simple") => Mode::Simple,
        _ => Mode::Composite,
    };
    let cal = preset.map(|p| p.calibration);
    let epsilon = match mode {
        Mode::Simple => s.f64("epsilon")?.unwrap_or(0.0),
        Mode::Composite => required(
            s.f64("epsilon")?.or(cal.map(|c| c.epsilon)),
            "epsilon",
            "in composite mode (or choose a preset)",
        )?,
    };
    let d = s.f64("d")?.or(cal.map(|c| c.d));
    let policy = s.choice("d_policy", &["constant", "per_step", "prefix"])?;
    let d_policy = match (policy, d) {
        (Some("constant"), _) | (None, Some(_)) => DPolicy::Constant {
            d: required(d, "d", "for the constant d policy")?,
        },
        (Some("per_step"), _) => DPolicy::PerStep {
            values: required(s.f64_list("d_sequence")?, "d_sequence", "for the per_step d policy")?,
        },
        _ => DPolicy::EstimateFromPrefix {
            n: s.usize("prefix_len")?.unwrap_or(DEFAULT_PREFIX),
        },
    };
    let violation_policy = match s.choice("violation_policy", &["flag_and_continue", "abort"])? {
        Some("abort") => ViolationPolicy::Abort,
        _ => ViolationPolicy::FlagAndContinue,
    };
    let cfg = DetectorConfig {
        alpha: s.f64("alpha")?.unwrap_or(DEFAULT_ALPHA),
        epsilon,
        gamma: s.f64("gamma")?.unwrap_or(DEFAULT_GAMMA),
        time_budget: s.budget("time_budget")?.unwrap_or(default_budget),
        d_policy,
        mode,
        seed: ctx.seed,
        violation_policy,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Stream pair `(x, y)` of a preset under the hypothesis named by the config.
fn preset_streams(ctx: &Context, p: &Preset) -> Result<(StreamKind, StreamKind)> {
    Ok(match ctx.settings.choice("hypothesis", &["h1", "h0"])? {
        Some("h0") => p.h0.clone(),
        _ => p.h1.clone(),
    })
}

/// Observations for single-run commands and the default horizon they imply.
fn load_stream(ctx: &Context, preset: Option<&Preset>) -> Result<(Vec<ScoreObservation>, Option<usize>)> {
    if let Some(path) = ctx.settings.path("file")? {
        let obs = load_scores(&path)?.paired()?;
        return Ok((obs, None));
    }
    let p = preset.ok_or_else(|| Error::Config("config needs a score `file` or a `preset`".into()))?;
    let len = match ctx.settings.budget("time_budget")? {
        Some(Some(t)) => t,
        Some(None) => {
            return Err(Error::Config(
                "key `time_budget`: a preset stream needs a finite time_budget".into(),
            ))
        }
        None => DEFAULT_BUDGET,
    };
    let (x, y) = preset_streams(ctx, p)?;
    let obs = generate(&StreamSpec::new(x, ctx.seed), &StreamSpec::new(y, ctx.seed), len)?;
    Ok((obs, Some(len)))
}

pub fn detect(ctx: &Context) -> Result<()> {
    let preset = ctx.preset()?;
    let (stream, budget) = load_stream(ctx, preset.as_ref())?;
    let cfg = detector_config(ctx, preset.as_ref(), budget)?;
    let out = run_detector(&cfg, &stream)?;
    let path = ctx.write_json("outcome.json", &out)?;
    let decision = serde_json::to_value(out.decision).unwrap_or_default();
    println!("decision        {}", decision.as_str().unwrap_or("?"));
    println!("rejection_time  {}", out.rejection_time);
    if let Some(w) = out.trajectory.last() {
        match w.b {
            Some(b) => println!("final wealth    A {:.6}  B {:.6}", w.a.wealth, b.wealth),
            None => println!("final wealth    {:.6}", w.a.wealth),
        }
    }
    if !out.violations.is_empty() {
        println!("violations      {} (first at t = {})", out.violations.len(), out.violations[0]);
    }
    println!("wrote           {}", path.display());
    Ok(())
}

fn pool(ctx: &Context, key: &str) -> Result<Vec<f64>> {
    let path = required(ctx.settings.path(key)?, key, "for calibration")?;
    Ok(load_scores(&path)?.pool()?.to_vec())
}

pub fn calibrate(ctx: &Context) -> Result<()> {
    let s = &ctx.settings;
    let mode = s.choice("calibration_mode", &["oracle", "estimated"])?;
    let result: CalibrationResult = match mode {
        Some("oracle") => calibrate_oracle(&pool(ctx, "pool")?, &pool(ctx, "pool_b")?)?,
        _ => {
            let scores = pool(ctx, "pool")?;
            let n = s.usize("prefix_len")?.unwrap_or(DEFAULT_PREFIX);
            let (px, py): (Vec<f64>, Vec<f64>) = match s.path("file")? {
                Some(path) => {
                    let obs = load_scores(&path)?.paired()?;
                    if obs.len() < n {
                        return Err(Error::InvalidInput(format!(
                            "{}: d estimation needs {n} paired scores, found {}",
                            path.display(),
                            obs.len()
                        )));
                    }
                    obs[..n].iter().map(|o| (o.score_x, o.score_y)).unzip()
                }
                None => {
                    if scores.len() < EPSILON_POOL_SIZE.max(2 * n) {
                        return Err(Error::InvalidInput(format!(
                            "calibration needs at least {} pool scores, found {}",
                            EPSILON_POOL_SIZE.max(2 * n),
                            scores.len()
                        )));
                    }
                    (scores[..n].to_vec(), scores[n..2 * n].to_vec())
                }
            };
            let shuffles = s.usize("shuffles")?.unwrap_or(DEFAULT_SHUFFLES);
            let mut rng = substream(ctx.seed, STREAM_CALIBRATION);
            calibrate_estimated(&scores, &px, &py, shuffles, &mut rng)?
        }
    };
    let path = ctx.write_json("calibration.json", &result)?;
    println!("epsilon     {}", result.epsilon);
    println!("d           {}", result.d);
    println!("provenance  {:?}", result.provenance);
    println!("wrote       {}", path.display());
    Ok(())
}

fn permutation_config(ctx: &Context, preset: Option<&Preset>) -> Result<PermutationConfig> {
    let s = &ctx.settings;
    let cfg = PermutationConfig {
        batch_size: s.usize("batch_size")?.unwrap_or(DEFAULT_BATCH),
        n_permutations: s.usize("n_permutations")?.unwrap_or(DEFAULT_PERMUTATIONS),
        correction: match s.choice("correction", &["none", "geometric"])? {
            Some("geometric") => Correction::Geometric,
            _ => Correction::None,
        },
        epsilon: s
            .f64("epsilon")?
            .or(preset.map(|p| p.calibration.epsilon))
            .unwrap_or(0.0),
        alpha: s.f64("alpha")?.unwrap_or(DEFAULT_ALPHA),
        seed: ctx.seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn baseline(ctx: &Context) -> Result<()> {
    let preset = ctx.preset()?;
    let (stream, budget) = load_stream(ctx, preset.as_ref())?;
    let cfg = permutation_config(ctx, preset.as_ref())?;
    let horizon = match ctx.settings.budget("time_budget")? {
        Some(Some(t)) => t,
        _ => budget.unwrap_or(stream.len()),
    };
    let out = batched_permutation_run(&cfg, &stream, horizon)?;
    let path = ctx.write_json("baseline.json", &out)?;
    println!("{:>6} {:>10} {:>10} {:>12}", "batch", "delta_obs", "p_value", "threshold");
    for b in &out.batches {
        let p = b.p_value.map_or_else(|| "gated".to_string(), |p| format!("{p:.4}"));
        println!("{:>6} {:>10.4} {:>10} {:>12}", b.batch, b.delta_obs, p, b.threshold);
    }
    let decision = serde_json::to_value(out.decision).unwrap_or_default();
    println!("decision        {}", decision.as_str().unwrap_or("?"));
    println!("rejection_time  {}", out.rejection_time);
    println!("wrote           {}", path.display());
    Ok(())
}

fn empirical_pair(path: &Path) -> Result<(StreamKind, StreamKind)> {
    let table = load_scores(path)?;
    let col = |name: &str| -> Result<StreamKind> {
        Ok(StreamKind::Empirical {
            values: table.column(name)?.to_vec(),
            resample: Default::default(),
        })
    };
    Ok((col("score_x")?, col("score_y")?))
}

fn grid(s: &Settings) -> Result<AlphaGrid> {
    if let Some(a) = s.f64("alpha")? {
        return AlphaGrid::single(a);
    }
    match s.f64_list("alphas")? {
        Some(values) => AlphaGrid::new(values),
        None => Ok(AlphaGrid::default()),
    }
}

pub fn evaluate(ctx: &Context) -> Result<()> {
    let s = &ctx.settings;
    let preset = ctx.preset()?;
    let (h0, h1) = match (&preset, s.path("h0_file")?, s.path("h1_file")?) {
        (_, Some(f0), Some(f1)) => (empirical_pair(&f0)?, empirical_pair(&f1)?),
        (Some(p), None, None) => (p.h0.clone(), p.h1.clone()),
        _ => {
            return Err(Error::Config(
                "evaluation needs a `preset` or both `h0_file` and `h1_file`".into(),
            ))
        }
    };
    let h0 = (StreamSpec::new(h0.0, 0), StreamSpec::new(h0.1, 0));
    let h1 = (StreamSpec::new(h1.0, 0), StreamSpec::new(h1.1, 0));
    let runs = s.usize("runs")?.unwrap_or(DEFAULT_RUNS);
    let grid = grid(s)?;
    let budget = match s.budget("time_budget")? {
        Some(Some(t)) => t,
        Some(None) => return Err(Error::Config("key `time_budget`: evaluation needs a finite budget".into())),
        None => DEFAULT_BUDGET,
    };
    let pairs = ((&h0.0, &h0.1), (&h1.0, &h1.1));
    let report: MonteCarloReport = match s.choice("test", &["detector", "baseline"])? {
        Some("baseline") => {
            let test = BaselineTest {
                config: permutation_config(ctx, preset.as_ref())?,
                time_budget: budget,
            };
            monte_carlo(&test, pairs.0, pairs.1, runs, &grid, ctx.seed)?
        }
        _ => {
            let cfg = detector_config(ctx, preset.as_ref(), Some(budget))?;
            monte_carlo(&cfg, pairs.0, pairs.1, runs, &grid, ctx.seed)?
        }
    };

    let formats: &[ReportFormat] = match ctx.format {
        Some(ReportFormat::Csv) => &[ReportFormat::Csv],
        Some(ReportFormat::Json) => &[ReportFormat::Json],
        None => &[ReportFormat::Csv, ReportFormat::Json],
    };
    let paths = formats
        .iter()
        .map(|f| emit_report(&report, &ctx.output_dir, *f))
        .collect::<Result<Vec<_>>>()?;

    println!("{:>8} {:>8} {:>10} {:>10}", "alpha", "fpr", "mean_tau", "power");
    for r in &report.per_alpha {
        println!(
            "{:>8.4} {:>8.4} {:>10.2} {:>10.4}",
            r.alpha, r.fpr, r.mean_tau, r.declared_fraction_h1
        );
    }
    if let Some(r) = report.ratio {
        println!("ratio (delta - eps)/(d - eps) = {r:.4}");
    }
    if report.violation_count > 0 {
        println!("bound violations: {}", report.violation_count);
    }
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

pub fn presets() -> Result<()> {
    println!("{:<24} {:>8} {:>8} {:>8}  description", "name", "delta", "epsilon", "d");
    for name in PRESET_NAMES {
        let p = preset(name)?;
        println!(
            "{:<24} {:>8.4} {:>8.4} {:>8.4}  {}",
            p.name, p.delta_h1, p.calibration.epsilon, p.calibration.d, p.description
        );
    }
    Ok(())
}
