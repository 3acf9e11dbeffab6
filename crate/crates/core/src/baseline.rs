//! Batched permutation tests: after every `k` pairs, a two-sample permutation
//! test on the latest batch. Only batches whose observed mean gap exceeds
//! `epsilon` are tested.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detector::Decision;
use crate::error::{Error, Result};
use crate::rng::{substream, STREAM_PERMUTATION};
use crate::stream::{mean, ScoreObservation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    /// Every batch is tested at `alpha`.
    #[default]
    None,
    /// Batch `i` is tested at `alpha / 2^i`.
    Geometric,
}

impl Correction {
    /// Significance threshold of 1-based batch `i`.
    pub fn threshold(&self, alpha: f64, batch: usize) -> f64 {
        match self {
            Correction::None => alpha,
            Correction::Geometric => alpha * 0.5f64.powi(batch.min(i32::MAX as usize) as i32),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationConfig {
    pub batch_size: usize,
    pub n_permutations: usize,
    #[serde(default)]
    pub correction: Correction,
    #[serde(default)]
    pub epsilon: f64,
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
}

impl PermutationConfig {
    pub fn new(batch_size: usize, alpha: f64) -> Self {
        Self {
            batch_size,
            n_permutations: 2000,
            correction: Correction::None,
            epsilon: 0.0,
            alpha,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch_size must be >= 2, got {}", self.batch_size)));
        }
        if self.n_permutations == 0 {
            return Err(Error::Config("n_permutations must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon must be finite and >= 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

fn observed_gap(batch_x: &[f64], batch_y: &[f64]) -> Result<f64> {
    if batch_x.len() != batch_y.len() {
        return Err(Error::InvalidInput(format!(
            "batch lengths differ: {} vs {}",
            batch_x.len(),
            batch_y.len()
        )));
    }
    if batch_x.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    Ok((mean(batch_x) - mean(batch_y)).abs())
}

/// Gaps `|mean(first k) - mean(last k)|` of `n_perm` random relabelings of the pooled batch.
pub fn permutation_null<R: Rng + ?Sized>(
    batch_x: &[f64],
    batch_y: &[f64],
    n_perm: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    observed_gap(batch_x, batch_y)?;
    let k = batch_x.len();
    let mut pool: Vec<f64> = batch_x.iter().chain(batch_y).copied().collect();
    Ok((0..n_perm)
        .map(|_| {
            let (first, rest) = pool.partial_shuffle(rng, k);
            (mean(first) - mean(rest)).abs()
        })
        .collect())
}

/// `#{null > observed} / len`.
pub fn pvalue_from_null(observed: f64, null: &[f64]) -> f64 {
    null.iter().filter(|&&v| v > observed).count() as f64 / null.len() as f64
}

pub fn permutation_pvalue<R: Rng + ?Sized>(
    batch_x: &[f64],
    batch_y: &[f64],
    n_perm: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_perm == 0 {
        return Err(Error::InvalidInput("n_perm must be >= 1".into()));
    }
    let observed = observed_gap(batch_x, batch_y)?;
    let null = permutation_null(batch_x, batch_y, n_perm, rng)?;
    Ok(pvalue_from_null(observed, &null))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub batch: usize,
    pub delta_obs: f64,
    /// `None` when the gate `delta_obs <= epsilon` skipped the test.
    pub p_value: Option<f64>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub decision: Decision,
    /// `i * k` when batch `i` rejects, `T` otherwise.
    pub rejection_time: usize,
    pub batches: Vec<BatchRecord>,
}

impl BaselineOutcome {
    pub fn declared(&self) -> bool {
        self.decision.is_declared()
    }
}

pub fn batched_permutation_run(
    cfg: &PermutationConfig,
    stream: &[ScoreObservation],
    time_budget: usize,
) -> Result<BaselineOutcome> {
    cfg.validate()?;
    if stream.len() < time_budget {
        return Err(Error::InvalidInput(format!(
            "stream has {} observations, time budget needs {time_budget}",
            stream.len()
        )));
    }
    let k = cfg.batch_size;
    let mut rng = substream(cfg.seed, STREAM_PERMUTATION);
    let mut batches = Vec::new();
    for (i, chunk) in stream[..time_budget].chunks_exact(k).enumerate() {
        let batch = i + 1;
        let xs: Vec<f64> = chunk.iter().map(|o| o.score_x).collect();
        let ys: Vec<f64> = chunk.iter().map(|o| o.score_y).collect();
        let delta_obs = observed_gap(&xs, &ys)?;
        let threshold = cfg.correction.threshold(cfg.alpha, batch);
        let p_value = if delta_obs > cfg.epsilon {
            let null = permutation_null(&xs, &ys, cfg.n_permutations, &mut rng)?;
            Some(pvalue_from_null(delta_obs, &null))
        } else {
            None
        };
        batches.push(BatchRecord { batch, delta_obs, p_value, threshold });
        if p_value.is_some_and(|p| p < threshold) {
            return Ok(BaselineOutcome {
                decision: Decision::LlmDeclaredAnytime,
                rejection_time: batch * k,
                batches,
            });
        }
    }
    Ok(BaselineOutcome {
        decision: Decision::Retained,
        rejection_time: time_budget,
        batches,
    })
}
