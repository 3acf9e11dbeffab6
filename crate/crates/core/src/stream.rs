//! Score streams: synthetic generators, resampling from score files, mixtures
//! of sources, and the CSV score-file format.
//!
//! Score files are UTF-8 CSV with a header row. Paired files carry the columns
//! `score_x` (reference/human score) and `score_y` (unknown-source score);
//! pool files carry a single column, conventionally named `score`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationResult;
use crate::error::{Error, Result};
use crate::rng::{substream, STREAM_X, STREAM_Y};

/// One round: the reference score `phi(x_t)` and the unknown-source score `phi(y_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreObservation {
    pub t: usize,
    pub score_x: f64,
    pub score_y: f64,
}

impl ScoreObservation {
    /// Coin outcome `g_t = phi(x_t) - phi(y_t)`.
    pub fn outcome(&self) -> f64 {
        self.score_x - self.score_y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clip {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    #[default]
    WithReplacement,
    WithoutReplacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub length: usize,
    pub source: StreamKind,
}

/// Distribution of one side of a score stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StreamKind {
    /// i.i.d. normal scores, optionally clamped into `[clip.lo, clip.hi]`.
    Gaussian {
        mean: f64,
        sd: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        clip: Option<Clip>,
    },
    /// i.i.d. draws from a score column.
    Empirical {
        values: Vec<f64>,
        #[serde(default)]
        resample: Resample,
    },
    /// Consecutive segments, each drawn from its own source.
    Mixture { segments: Vec<Segment> },
    /// A fixed sequence replayed in order (one column of a paired score file).
    Replay { values: Vec<f64> },
}

impl StreamKind {
    pub fn gaussian(mean: f64, sd: f64) -> Self {
        StreamKind::Gaussian { mean, sd, clip: None }
    }

    pub fn clipped_gaussian(mean: f64, sd: f64, lo: f64, hi: f64) -> Self {
        StreamKind::Gaussian {
            mean,
            sd,
            clip: Some(Clip { lo, hi }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StreamKind::Gaussian { mean, sd, clip } => {
                if !mean.is_finite() || !sd.is_finite() || *sd < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "gaussian stream needs finite mean and sd >= 0, got mean {mean}, sd {sd}"
                    )));
                }
                if let Some(c) = clip {
                    if c.lo >= c.hi || c.lo.is_nan() || c.hi.is_nan() {
                        return Err(Error::InvalidInput(format!(
                            "clip bounds need lo < hi, got [{}, {}]",
                            c.lo, c.hi
                        )));
                    }
                }
            }
            StreamKind::Empirical { values, .. } => {
                if values.is_empty() {
                    return Err(Error::InvalidInput("empirical stream has no values".into()));
                }
            }
            StreamKind::Mixture { segments } => {
                if segments.is_empty() {
                    return Err(Error::InvalidInput("mixture has no segments".into()));
                }
                for s in segments {
                    if s.length == 0 {
                        return Err(Error::InvalidInput("mixture segment length must be >= 1".into()));
                    }
                    s.source.validate()?;
                }
            }
            StreamKind::Replay { .. } => {}
        }
        Ok(())
    }

    /// Population mean when it is known exactly (symmetric or absent clipping).
    pub fn nominal_mean(&self) -> Option<f64> {
        match self {
            StreamKind::Gaussian { mean, clip, .. } => match clip {
                None => Some(*mean),
                Some(c) if ((c.lo + c.hi) / 2.0 - mean).abs() <= 1e-12 * (1.0 + mean.abs()) => {
                    Some(*mean)
                }
                Some(_) => None,
            },
            StreamKind::Empirical { values, .. } | StreamKind::Replay { values } => {
                (!values.is_empty()).then(|| mean(values))
            }
            StreamKind::Mixture { segments } => {
                let mut total = 0.0;
                let mut len = 0usize;
                for s in segments {
                    total += s.source.nominal_mean()? * s.length as f64;
                    len += s.length;
                }
                (len > 0).then(|| total / len as f64)
            }
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, length: usize) -> Result<Vec<f64>> {
        match self {
            StreamKind::Gaussian { mean, sd, clip } => {
                let normal = Normal::new(*mean, *sd)
                    .map_err(|e| Error::InvalidInput(format!("gaussian stream: {e}")))?;
                Ok((0..length)
                    .map(|_| {
                        let v = normal.sample(rng);
                        match clip {
                            Some(c) => v.clamp(c.lo, c.hi),
                            None => v,
                        }
                    })
                    .collect())
            }
            StreamKind::Empirical { values, resample } => match resample {
                Resample::WithReplacement => Ok((0..length)
                    .map(|_| values[rng.random_range(0..values.len())])
                    .collect()),
                Resample::WithoutReplacement => {
                    if length > values.len() {
                        return Err(Error::InvalidInput(format!(
                            "without-replacement pool of {} values exhausted (requested {length})",
                            values.len()
                        )));
                    }
                    let mut pool = values.clone();
                    let (chosen, _) = pool.partial_shuffle(rng, length);
                    Ok(chosen.to_vec())
                }
            },
            StreamKind::Mixture { segments } => {
                let mut out = Vec::with_capacity(length);
                for s in segments {
                    if out.len() == length {
                        break;
                    }
                    let take = s.length.min(length - out.len());
                    out.extend(s.source.sample(rng, take)?);
                }
                if out.len() < length {
                    return Err(Error::InvalidInput(format!(
                        "mixture covers {} steps, requested {length}",
                        out.len()
                    )));
                }
                Ok(out)
            }
            StreamKind::Replay { values } => {
                if values.len() < length {
                    return Err(Error::InvalidInput(format!(
                        "replayed stream has {} values, requested {length}",
                        values.len()
                    )));
                }
                Ok(values[..length].to_vec())
            }
        }
    }
}

/// A stream source together with the seed that drives it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub kind: StreamKind,
    #[serde(default)]
    pub seed: u64,
}

impl StreamSpec {
    pub fn new(kind: StreamKind, seed: u64) -> Self {
        Self { kind, seed }
    }
}

/// Paired stream of `length` observations. The reference side draws from
/// stream [`STREAM_X`] of `spec_x.seed`, the unknown side from [`STREAM_Y`]
/// of `spec_y.seed`.
pub fn generate(spec_x: &StreamSpec, spec_y: &StreamSpec, length: usize) -> Result<Vec<ScoreObservation>> {
    if length == 0 {
        return Err(Error::InvalidInput("stream length must be >= 1".into()));
    }
    spec_x.kind.validate()?;
    spec_y.kind.validate()?;
    let xs = spec_x.kind.sample(&mut substream(spec_x.seed, STREAM_X), length)?;
    let ys = spec_y.kind.sample(&mut substream(spec_y.seed, STREAM_Y), length)?;
    Ok(pair(&xs, &ys))
}

/// [`generate`] with both sides driven by one seed.
pub fn generate_pair(x: &StreamKind, y: &StreamKind, length: usize, seed: u64) -> Result<Vec<ScoreObservation>> {
    generate(
        &StreamSpec::new(x.clone(), seed),
        &StreamSpec::new(y.clone(), seed),
        length,
    )
}

fn pair(xs: &[f64], ys: &[f64]) -> Vec<ScoreObservation> {
    xs.iter()
        .zip(ys)
        .enumerate()
        .map(|(i, (&score_x, &score_y))| ScoreObservation {
            t: i + 1,
            score_x,
            score_y,
        })
        .collect()
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// A synthetic reproduction of one published test configuration.
///
/// Scores are Gaussian with `sd = d/6`. Each side is clamped symmetrically
/// about its own mean with half-width `(d - delta)/2`, so the mean gap stays
/// exactly `delta` and `|x - y| <= d` holds for every pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub description: String,
    /// Mean gap under the alternative (human vs. machine).
    pub delta_h1: f64,
    /// Mean gap between the two human sources.
    pub delta_h0: f64,
    pub calibration: CalibrationResult,
    pub h1: (StreamKind, StreamKind),
    pub h0: (StreamKind, StreamKind),
}

struct Published {
    delta_h1: f64,
    epsilon: f64,
    d_h1: f64,
    d_h0: f64,
}

// Fast-DetectGPT scores with the Neo-2.7 scoring model, human reference XSum.
const FLASH: Published = Published { delta_h1: 2.4786, epsilon: 0.3634, d_h1: 7.6444, d_h0: 5.9956 };
const PRO: Published = Published { delta_h1: 1.2992, epsilon: 0.3660, d_h1: 6.5104, d_h0: 6.1546 };
const PALM2: Published = Published { delta_h1: 3.6338, epsilon: 0.4232, d_h1: 9.1603, d_h0: 5.8870 };

pub const PRESET_NAMES: [&str; 7] = [
    "fastdetect-neo27-flash",
    "fastdetect-neo27-pro",
    "fastdetect-neo27-palm2",
    "fastdetect-neo27-avg",
    "mixed-llms",
    "mixed-source",
    "h0-identical",
];

/// Reference side `N(0, d/6)` and unknown side `N(delta, d/6)`, each clipped
/// to its mean +/- `(d - delta)/2`. Requires `0 <= delta < d`.
pub fn clipped_pair(delta: f64, d: f64) -> Result<(StreamKind, StreamKind)> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::InvalidBound(d));
    }
    if delta.is_nan() || delta.abs() >= d {
        return Err(Error::InvalidInput(format!(
            "mean gap {delta} must be smaller than the bound {d}"
        )));
    }
    let sd = d / 6.0;
    // Shrunk by a relative 1e-12 so that `|x - y| <= d` survives rounding at the clip edges.
    let half = (d - delta.abs()) / 2.0 * (1.0 - 1e-12);
    Ok((
        StreamKind::clipped_gaussian(0.0, sd, -half, half),
        StreamKind::clipped_gaussian(delta, sd, delta - half, delta + half),
    ))
}

fn single(name: &str, description: &str, p: &Published) -> Preset {
    let h1 = clipped_pair(p.delta_h1, p.d_h1).expect("published gap is below its bound");
    let h0 = clipped_pair(p.epsilon, p.d_h0).expect("published gap is below its bound");
    Preset {
        name: name.into(),
        description: description.into(),
        delta_h1: p.delta_h1,
        delta_h0: p.epsilon,
        calibration: CalibrationResult::oracle(p.epsilon, p.d_h1),
        h1,
        h0,
    }
}

fn segments(parts: &[(usize, &StreamKind)]) -> StreamKind {
    StreamKind::Mixture {
        segments: parts
            .iter()
            .map(|(length, k)| Segment {
                length: *length,
                source: (*k).clone(),
            })
            .collect(),
    }
}

pub fn preset(name: &str) -> Result<Preset> {
    Ok(match name {
        "fastdetect-neo27-flash" => single(name, "Fast-DetectGPT/Neo-2.7, human vs Gemini-1.5-Flash", &FLASH),
        "fastdetect-neo27-pro" => single(name, "Fast-DetectGPT/Neo-2.7, human vs Gemini-1.5-Pro", &PRO),
        "fastdetect-neo27-palm2" => single(name, "Fast-DetectGPT/Neo-2.7, human vs PaLM 2", &PALM2),
        "fastdetect-neo27-avg" => {
            let avg = |f: fn(&Published) -> f64| (f(&FLASH) + f(&PRO) + f(&PALM2)) / 3.0;
            let p = Published {
                delta_h1: avg(|p| p.delta_h1),
                epsilon: avg(|p| p.epsilon),
                d_h1: avg(|p| p.d_h1),
                d_h0: avg(|p| p.d_h0),
            };
            single(name, "Fast-DetectGPT/Neo-2.7, parameters averaged over the three sources", &p)
        }
        "mixed-llms" => {
            let (px, py) = clipped_pair(PRO.delta_h1, PRO.d_h1)?;
            let (fx, fy) = clipped_pair(FLASH.delta_h1, FLASH.d_h1)?;
            let (mx, my) = clipped_pair(PALM2.delta_h1, PALM2.d_h1)?;
            Preset {
                name: name.into(),
                description: "unknown source posts 100 Pro, then 200 Flash, then 200 PaLM 2 texts".into(),
                delta_h1: (100.0 * PRO.delta_h1 + 200.0 * FLASH.delta_h1 + 200.0 * PALM2.delta_h1) / 500.0,
                delta_h0: PALM2.epsilon,
                calibration: CalibrationResult::oracle(PALM2.epsilon, PALM2.d_h1),
                h1: (
                    segments(&[(100, &px), (200, &fx), (200, &mx)]),
                    segments(&[(100, &py), (200, &fy), (200, &my)]),
                ),
                h0: clipped_pair(PALM2.epsilon, PALM2.d_h0)?,
            }
        }
        "mixed-source" => {
            let (hx, hy) = clipped_pair(PALM2.epsilon, PALM2.d_h0)?;
            let (mx, my) = clipped_pair(PALM2.delta_h1, PALM2.d_h1)?;
            Preset {
                name: name.into(),
                description: "unknown source posts 200 human texts, then 300 PaLM 2 texts".into(),
                delta_h1: (200.0 * PALM2.epsilon + 300.0 * PALM2.delta_h1) / 500.0,
                delta_h0: PALM2.epsilon,
                calibration: CalibrationResult::oracle(PALM2.epsilon, PALM2.d_h1),
                h1: (segments(&[(200, &hx), (300, &mx)]), segments(&[(200, &hy), (300, &my)])),
                h0: (hx, hy),
            }
        }
        "h0-identical" => {
            let k = StreamKind::clipped_gaussian(0.0, 1.0, -3.0, 3.0);
            Preset {
                name: name.into(),
                description: "both sides N(0,1) clipped to [-3, 3]".into(),
                delta_h1: 0.0,
                delta_h0: 0.0,
                calibration: CalibrationResult::oracle(0.0, 6.0),
                h1: (k.clone(), k.clone()),
                h0: (k.clone(), k),
            }
        }
        other => return Err(Error::UnknownPreset(other.to_string())),
    })
}

/// Alternative-hypothesis streams of a preset with its oracle calibration.
pub fn preset_specs(name: &str) -> Result<(StreamSpec, StreamSpec, CalibrationResult)> {
    let p = preset(name)?;
    Ok((
        StreamSpec::new(p.h1.0, 0),
        StreamSpec::new(p.h1.1, 0),
        p.calibration,
    ))
}

// ---------------------------------------------------------------------------
// Score files
// ---------------------------------------------------------------------------

/// Column-oriented table of scores loaded from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub path: PathBuf,
    pub headers: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl ScoreTable {
    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::MissingColumn {
                path: self.path.clone(),
                column: name.to_string(),
            })
    }

    /// Paired observations from the `score_x` and `score_y` columns.
    pub fn paired(&self) -> Result<Vec<ScoreObservation>> {
        Ok(pair(self.column("score_x")?, self.column("score_y")?))
    }

    /// The `score` column, or the only column of a single-column file.
    pub fn pool(&self) -> Result<&[f64]> {
        if self.headers.len() == 1 {
            return Ok(&self.columns[0]);
        }
        self.column("score")
    }
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<ScoreTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_scores(file, path)
}

pub fn read_scores(reader: impl Read, path: &Path) -> Result<ScoreTable> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(parse_err(1, "missing header row".into()));
    }
    let mut columns = vec![Vec::new(); headers.len()];
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        for (col, field) in columns.iter_mut().zip(record.iter()) {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("`{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("`{field}` is not finite")));
            }
            col.push(v);
        }
    }
    Ok(ScoreTable {
        path: path.to_path_buf(),
        headers,
        columns,
    })
}

/// Write a paired score file. Values use the shortest representation that
/// parses back to the same `f64`.
pub fn write_paired(writer: impl Write, obs: &[ScoreObservation]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let ser = |e: csv::Error| Error::Serialize(e.to_string());
    w.write_record(["score_x", "score_y"]).map_err(ser)?;
    for o in obs {
        w.write_record([o.score_x.to_string(), o.score_y.to_string()])
            .map_err(ser)?;
    }
    w.flush().map_err(|e| Error::Serialize(e.to_string()))
}

pub fn write_pool(writer: impl Write, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let ser = |e: csv::Error| Error::Serialize(e.to_string());
    w.write_record(["score"]).map_err(ser)?;
    for v in values {
        w.write_record([v.to_string()]).map_err(ser)?;
    }
    w.flush().map_err(|e| Error::Serialize(e.to_string()))
}
