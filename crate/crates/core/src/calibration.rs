//! Choosing the composite slack `epsilon` and the outcome bound `d`.
//!
//! Two recipes are supported. The oracle recipe reads both quantities off
//! complete score samples. The estimated recipe uses only what a live
//! deployment has: a small pool of reference scores for `epsilon`, and the
//! first few paired observations for `d`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::mean;

/// Pool size the estimated recipe is specified for.
pub const EPSILON_POOL_SIZE: usize = 20;
pub const DEFAULT_SHUFFLES: usize = 1000;
pub const DEFAULT_PREFIX: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Oracle,
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub epsilon: f64,
    pub d: f64,
    pub provenance: Provenance,
    pub samples_consumed: usize,
}

impl CalibrationResult {
    pub fn oracle(epsilon: f64, d: f64) -> Self {
        Self {
            epsilon,
            d,
            provenance: Provenance::Oracle,
            samples_consumed: 0,
        }
    }
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{name} contains non-finite value {v}")));
    }
    Ok(())
}

/// Twice the average absolute gap between the half-means of random
/// half/half splits of `scores`.
///
/// The input is sorted before shuffling, so the result depends only on the
/// multiset of scores and the generator state.
pub fn estimate_epsilon<R: Rng + ?Sized>(scores: &[f64], shuffles: usize, rng: &mut R) -> Result<f64> {
    if scores.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "epsilon estimation needs at least 2 scores, got {}",
            scores.len()
        )));
    }
    if !scores.len().is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "epsilon estimation splits the pool in halves; got an odd count {}",
            scores.len()
        )));
    }
    if shuffles == 0 {
        return Err(Error::InvalidInput("shuffles must be >= 1".into()));
    }
    check_finite("scores", scores)?;
    let half = scores.len() / 2;
    let mut work = scores.to_vec();
    work.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for _ in 0..shuffles {
        work.shuffle(rng);
        let (a, b) = work.split_at(half);
        total += (mean(a) - mean(b)).abs();
    }
    Ok(2.0 * total / shuffles as f64)
}

/// `2 * max_s |x_s - y_s|` over index-paired prefixes.
pub fn estimate_d(prefix_x: &[f64], prefix_y: &[f64]) -> Result<f64> {
    if prefix_x.is_empty() || prefix_x.len() != prefix_y.len() {
        return Err(Error::InvalidInput(format!(
            "d estimation needs two nonempty prefixes of equal length, got {} and {}",
            prefix_x.len(),
            prefix_y.len()
        )));
    }
    check_finite("prefix_x", prefix_x)?;
    check_finite("prefix_y", prefix_y)?;
    let max_gap = prefix_x
        .iter()
        .zip(prefix_y)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    if max_gap == 0.0 {
        return Err(Error::DegenerateBound(format!(
            "all {} prefix pairs are equal; d would be 0",
            prefix_x.len()
        )));
    }
    Ok(2.0 * max_gap)
}

/// `|mean(a) - mean(b)|`.
pub fn oracle_epsilon(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("oracle epsilon needs two nonempty pools".into()));
    }
    check_finite("pool a", a)?;
    check_finite("pool b", b)?;
    Ok((mean(a) - mean(b)).abs())
}

/// `max_{i,j} |x_i - y_j|`, computed from the extremes of each sample.
pub fn oracle_d(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidInput("oracle d needs two nonempty samples".into()));
    }
    check_finite("x", x)?;
    check_finite("y", y)?;
    let (xmin, xmax) = extremes(x);
    let (ymin, ymax) = extremes(y);
    Ok((xmax - ymin).max(ymax - xmin).max(0.0))
}

fn extremes(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Oracle recipe on two complete samples.
pub fn calibrate_oracle(a: &[f64], b: &[f64]) -> Result<CalibrationResult> {
    let epsilon = oracle_epsilon(a, b)?;
    let d = oracle_d(a, b)?;
    if d == 0.0 {
        return Err(Error::DegenerateBound("every cross pair is equal; d would be 0".into()));
    }
    Ok(CalibrationResult {
        epsilon,
        d,
        provenance: Provenance::Oracle,
        samples_consumed: a.len() + b.len(),
    })
}

/// Estimated recipe: `epsilon` from the first [`EPSILON_POOL_SIZE`] pool
/// scores, `d` from `prefix` paired observations.
pub fn calibrate_estimated<R: Rng + ?Sized>(
    pool: &[f64],
    prefix_x: &[f64],
    prefix_y: &[f64],
    shuffles: usize,
    rng: &mut R,
) -> Result<CalibrationResult> {
    if pool.len() < EPSILON_POOL_SIZE {
        return Err(Error::InvalidInput(format!(
            "estimated calibration needs at least {EPSILON_POOL_SIZE} pool scores, got {}",
            pool.len()
        )));
    }
    let epsilon = estimate_epsilon(&pool[..EPSILON_POOL_SIZE], shuffles, rng)?;
    let d = estimate_d(prefix_x, prefix_y)?;
    Ok(CalibrationResult {
        epsilon,
        d,
        provenance: Provenance::Estimated,
        samples_consumed: EPSILON_POOL_SIZE + prefix_x.len(),
    })
}
