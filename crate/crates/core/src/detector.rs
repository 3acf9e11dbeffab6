//! Sequential detectors built on the betting game.
//!
//! The simple detector tests `H0: mu_x = mu_y` with one bettor and rejects
//! once its wealth reaches `1/alpha`. The composite detector tests
//! `H0: |mu_x - mu_y| <= eps` with two one-sided bettors (side A bets on
//! `g - eps`, side B on `-g - eps`) and rejects once either wealth reaches
//! `2/alpha`. With a finite time budget, a run that never crossed is given a
//! last randomized check against `Z/alpha` (`2Z/alpha` for composite) with
//! `Z ~ Unif(0, 1)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::betting::{decision_interval, wealth_step, DecisionInterval, Mode, OnsBettor, WealthState, DEFAULT_GAMMA};
use crate::calibration::{estimate_d, DEFAULT_PREFIX};
use crate::error::{Error, Result};
use crate::rng::{substream, STREAM_FINALIZE};
use crate::stream::ScoreObservation;

/// How the per-round bound `d_t >= |g_t|` is supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum DPolicy {
    Constant { d: f64 },
    /// `values[t-1]` is `d_t`.
    PerStep { values: Vec<f64> },
    /// Spend the first `n` rounds estimating a constant `d`; betting starts at `n + 1`.
    EstimateFromPrefix { n: usize },
}

impl Default for DPolicy {
    fn default() -> Self {
        DPolicy::EstimateFromPrefix { n: DEFAULT_PREFIX }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationPolicy {
    /// Record the step, floor the wealth at zero, keep going.
    #[default]
    FlagAndContinue,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub alpha: f64,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// `None` runs until declaration or the end of the stream.
    pub time_budget: Option<usize>,
    pub d_policy: DPolicy,
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub violation_policy: ViolationPolicy,
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

impl DetectorConfig {
    pub fn simple(alpha: f64, d: f64, time_budget: Option<usize>) -> Self {
        Self {
            alpha,
            epsilon: 0.0,
            gamma: DEFAULT_GAMMA,
            time_budget,
            d_policy: DPolicy::Constant { d },
            mode: Mode::Simple,
            seed: 0,
            violation_policy: ViolationPolicy::default(),
        }
    }

    pub fn composite(alpha: f64, epsilon: f64, d: f64, time_budget: Option<usize>) -> Self {
        Self {
            epsilon,
            mode: Mode::Composite,
            ..Self::simple(alpha, d, time_budget)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Wealth level that triggers an anytime declaration.
    pub fn threshold(&self) -> f64 {
        match self.mode {
            Mode::Simple => 1.0 / self.alpha,
            Mode::Composite => 2.0 / self.alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return cfg(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return cfg(format!("epsilon must be finite and >= 0, got {}", self.epsilon));
        }
        if self.mode == Mode::Simple && self.epsilon != 0.0 {
            return cfg(format!("epsilon applies to composite mode only, got {} in simple mode", self.epsilon));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return cfg(format!("gamma must be > 0, got {}", self.gamma));
        }
        if self.time_budget == Some(0) {
            return cfg("time_budget must be >= 1".into());
        }
        let check_d = |d: f64| -> Result<()> {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::Config(format!("d must be finite and > 0, got {d}")));
            }
            if self.mode == Mode::Composite && self.epsilon >= d {
                return Err(Error::Config(format!(
                    "composite mode requires epsilon < d, got epsilon {} and d {d}",
                    self.epsilon
                )));
            }
            Ok(())
        };
        match &self.d_policy {
            DPolicy::Constant { d } => check_d(*d)?,
            DPolicy::PerStep { values } => {
                if values.is_empty() {
                    return cfg("per-step d sequence is empty".into());
                }
                values.iter().try_for_each(|&d| check_d(d))?;
            }
            DPolicy::EstimateFromPrefix { n } => {
                if *n == 0 {
                    return cfg("prefix length must be >= 1".into());
                }
                if let Some(t) = self.time_budget {
                    if *n >= t {
                        return cfg(format!("prefix length {n} leaves no betting rounds within time_budget {t}"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A bettor and the wealth it has accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BettingSide {
    pub bettor: OnsBettor,
    pub wealth: WealthState,
}

impl BettingSide {
    fn new(gamma: f64, interval: DecisionInterval) -> Result<Self> {
        Ok(Self {
            bettor: OnsBettor::new(gamma, interval)?,
            wealth: WealthState::default(),
        })
    }

    /// Settle one round on `outcome`, then move the bettor into `next`.
    /// Returns the new side and whether the wealth factor was nonpositive.
    fn advance(&self, outcome: f64, next: DecisionInterval, policy: ViolationPolicy) -> Result<(Self, bool)> {
        let step = self.wealth.step + 1;
        let theta = self.bettor.theta;
        let factor = 1.0 - outcome * theta;
        if factor > 0.0 {
            let wealth = wealth_step(self.wealth.wealth, outcome, theta)?;
            Ok((
                Self {
                    bettor: self.bettor.update(outcome, next)?,
                    wealth: WealthState { wealth, step },
                },
                false,
            ))
        } else {
            if policy == ViolationPolicy::Abort {
                return Err(Error::WealthViolation { step, factor });
            }
            // A zero wealth stays zero, so the side is out of the game.
            Ok((
                Self {
                    bettor: self.bettor.reclamp(next),
                    wealth: WealthState { wealth: 0.0, step },
                },
                true,
            ))
        }
    }
}

/// Outcome flags of one detector round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepReport {
    pub declared: bool,
    /// `|g_t| > d_t` or a wealth factor was nonpositive.
    pub violation: bool,
}

fn check_scores(x: f64, y: f64, d_next: f64) -> Result<()> {
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::InvalidInput(format!("scores must be finite, got ({x}, {y})")));
    }
    if !(d_next.is_finite() && d_next > 0.0) {
        return Err(Error::InvalidBound(d_next));
    }
    Ok(())
}

fn check_z(z: f64) -> Result<()> {
    if (0.0..=1.0).contains(&z) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("randomization draw z must lie in [0, 1], got {z}")))
    }
}

/// State of the simple test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimpleDetector {
    pub side: BettingSide,
    /// Bound `d_t` in force for the next observation.
    pub d: f64,
    pub declared: bool,
}

impl SimpleDetector {
    pub fn new(cfg: &DetectorConfig, d_first: f64) -> Result<Self> {
        Ok(Self {
            side: BettingSide::new(cfg.gamma, decision_interval(d_first, Mode::Simple)?)?,
            d: d_first,
            declared: false,
        })
    }

    pub fn wealth(&self) -> f64 {
        self.side.wealth.wealth
    }

    pub fn step(&self, score_x: f64, score_y: f64, d_next: f64, cfg: &DetectorConfig) -> Result<(Self, StepReport)> {
        if self.declared {
            return Err(Error::InvalidInput("detector already declared".into()));
        }
        check_scores(score_x, score_y, d_next)?;
        let g = score_x - score_y;
        let next = decision_interval(d_next, Mode::Simple)?;
        let (side, bad_factor) = self.side.advance(g, next, cfg.violation_policy)?;
        let declared = side.wealth.wealth >= 1.0 / cfg.alpha;
        Ok((
            Self { side, d: d_next, declared },
            StepReport {
                declared,
                violation: bad_factor || g.abs() > self.d,
            },
        ))
    }

    /// Randomized terminal check `W_T >= z / alpha`.
    pub fn finalize(&self, z: f64, alpha: f64) -> Result<bool> {
        check_z(z)?;
        Ok(self.wealth() >= z / alpha)
    }
}

/// State of the composite two-sided test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeDetector {
    /// Bets on `g - eps` (evidence that `mu_x - mu_y > eps`).
    pub side_a: BettingSide,
    /// Bets on `-g - eps` (evidence that `mu_y - mu_x > eps`).
    pub side_b: BettingSide,
    pub epsilon: f64,
    pub d: f64,
    pub declared: bool,
}

impl CompositeDetector {
    pub fn new(cfg: &DetectorConfig, d_first: f64) -> Result<Self> {
        if cfg.epsilon >= d_first {
            return Err(Error::Config(format!(
                "composite mode requires epsilon < d, got epsilon {} and d {d_first}",
                cfg.epsilon
            )));
        }
        let k = decision_interval(d_first, Mode::Composite)?;
        Ok(Self {
            side_a: BettingSide::new(cfg.gamma, k)?,
            side_b: BettingSide::new(cfg.gamma, k)?,
            epsilon: cfg.epsilon,
            d: d_first,
            declared: false,
        })
    }

    pub fn wealths(&self) -> (f64, f64) {
        (self.side_a.wealth.wealth, self.side_b.wealth.wealth)
    }

    pub fn step(&self, score_x: f64, score_y: f64, d_next: f64, cfg: &DetectorConfig) -> Result<(Self, StepReport)> {
        if self.declared {
            return Err(Error::InvalidInput("detector already declared".into()));
        }
        check_scores(score_x, score_y, d_next)?;
        if self.epsilon >= d_next {
            return Err(Error::Config(format!(
                "composite mode requires epsilon < d, got epsilon {} and d {d_next}",
                self.epsilon
            )));
        }
        let g = score_x - score_y;
        let next = decision_interval(d_next, Mode::Composite)?;
        let (side_a, bad_a) = self.side_a.advance(g - self.epsilon, next, cfg.violation_policy)?;
        let (side_b, bad_b) = self.side_b.advance(-g - self.epsilon, next, cfg.violation_policy)?;
        let threshold = 2.0 / cfg.alpha;
        let declared = side_a.wealth.wealth >= threshold || side_b.wealth.wealth >= threshold;
        Ok((
            Self {
                side_a,
                side_b,
                epsilon: self.epsilon,
                d: d_next,
                declared,
            },
            StepReport {
                declared,
                violation: bad_a || bad_b || g.abs() > self.d,
            },
        ))
    }

    /// Randomized terminal check with one shared draw: `W_A >= 2z/alpha or W_B >= 2z/alpha`.
    pub fn finalize(&self, z: f64, alpha: f64) -> Result<bool> {
        check_z(z)?;
        let level = 2.0 * z / alpha;
        let (a, b) = self.wealths();
        Ok(a >= level || b >= level)
    }
}

/// Free-function forms mirroring the state-machine methods.
pub fn simple_step(
    state: &SimpleDetector,
    score_x: f64,
    score_y: f64,
    d_next: f64,
    cfg: &DetectorConfig,
) -> Result<(SimpleDetector, bool)> {
    state.step(score_x, score_y, d_next, cfg).map(|(s, r)| (s, r.declared))
}

pub fn composite_step(
    state: &CompositeDetector,
    score_x: f64,
    score_y: f64,
    d_next: f64,
    cfg: &DetectorConfig,
) -> Result<(CompositeDetector, bool)> {
    state.step(score_x, score_y, d_next, cfg).map(|(s, r)| (s, r.declared))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    LlmDeclaredAnytime,
    LlmDeclaredAtBudget,
    Retained,
}

impl Decision {
    pub fn is_declared(&self) -> bool {
        !matches!(self, Decision::Retained)
    }
}

/// One bettor's view of a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideTrace {
    /// Effective outcome the bettor faced (`g`, `g - eps`, or `-g - eps`).
    pub outcome: f64,
    /// Fraction committed before the outcome was revealed.
    pub theta: f64,
    /// Wealth after the round.
    pub wealth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: usize,
    /// Raw score difference `phi(x_t) - phi(y_t)`.
    pub g: f64,
    /// Bound `d_t` in force at this round.
    pub d: f64,
    /// Decision space the fractions were drawn from.
    pub interval: DecisionInterval,
    /// The simple bettor, or side A in composite mode.
    pub a: SideTrace,
    /// Side B in composite mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<SideTrace>,
}

/// One round as seen by a single bettor; input of the regret audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetRecord {
    pub outcome: f64,
    pub theta: f64,
    pub interval: DecisionInterval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub mode: Mode,
    pub decision: Decision,
    /// First crossing time, or the number of rounds consumed when retained.
    pub rejection_time: usize,
    /// Estimated or supplied bound used by the first betting round.
    pub d_initial: f64,
    /// The uniform draw used by the terminal check, when one happened.
    pub final_draw: Option<f64>,
    /// Steps flagged by `|g_t| > d_t` or a nonpositive wealth factor.
    pub violations: Vec<usize>,
    pub trajectory: Vec<TracePoint>,
}

impl TestOutcome {
    pub fn declared(&self) -> bool {
        self.decision.is_declared()
    }

    pub fn bet_records(&self, side: Side) -> Vec<BetRecord> {
        self.trajectory
            .iter()
            .filter_map(|p| {
                let s = match side {
                    Side::A => Some(p.a),
                    Side::B => p.b,
                }?;
                Some(BetRecord {
                    outcome: s.outcome,
                    theta: s.theta,
                    interval: p.interval,
                })
            })
            .collect()
    }

    pub fn final_wealth(&self, side: Side) -> Option<f64> {
        let p = self.trajectory.last()?;
        match side {
            Side::A => Some(p.a.wealth),
            Side::B => p.b.map(|s| s.wealth),
        }
    }
}

enum State {
    Simple(SimpleDetector),
    Composite(CompositeDetector),
}

impl State {
    fn step(&self, obs: &ScoreObservation, d_next: f64, cfg: &DetectorConfig) -> Result<(State, StepReport)> {
        Ok(match self {
            State::Simple(s) => {
                let (s, r) = s.step(obs.score_x, obs.score_y, d_next, cfg)?;
                (State::Simple(s), r)
            }
            State::Composite(s) => {
                let (s, r) = s.step(obs.score_x, obs.score_y, d_next, cfg)?;
                (State::Composite(s), r)
            }
        })
    }

    fn sides(&self) -> (&BettingSide, Option<&BettingSide>) {
        match self {
            State::Simple(s) => (&s.side, None),
            State::Composite(s) => (&s.side_a, Some(&s.side_b)),
        }
    }

    fn finalize(&self, z: f64, alpha: f64) -> Result<bool> {
        match self {
            State::Simple(s) => s.finalize(z, alpha),
            State::Composite(s) => s.finalize(z, alpha),
        }
    }
}

/// Run a detector over `stream` and return the full outcome with trajectory.
pub fn run_detector(cfg: &DetectorConfig, stream: &[ScoreObservation]) -> Result<TestOutcome> {
    run(cfg, stream, true)
}

/// Like [`run_detector`] but without recording the trajectory.
pub fn run_detector_untraced(cfg: &DetectorConfig, stream: &[ScoreObservation]) -> Result<TestOutcome> {
    run(cfg, stream, false)
}

fn run(cfg: &DetectorConfig, stream: &[ScoreObservation], record: bool) -> Result<TestOutcome> {
    cfg.validate()?;
    let horizon = match cfg.time_budget {
        Some(t) if stream.len() < t => {
            return Err(Error::InvalidInput(format!(
                "stream has {} observations, time budget needs {t}",
                stream.len()
            )))
        }
        Some(t) => t,
        None => stream.len(),
    };

    let (start, estimated) = match cfg.d_policy {
        DPolicy::EstimateFromPrefix { n } => {
            if stream.len() < n {
                return Err(Error::InvalidInput(format!(
                    "stream has {} observations, the d-estimation prefix needs {n}",
                    stream.len()
                )));
            }
            let xs: Vec<f64> = stream[..n].iter().map(|o| o.score_x).collect();
            let ys: Vec<f64> = stream[..n].iter().map(|o| o.score_y).collect();
            let d = estimate_d(&xs, &ys)?;
            if cfg.mode == Mode::Composite && cfg.epsilon >= d {
                return Err(Error::Config(format!(
                    "estimated d = {d} does not exceed epsilon = {}",
                    cfg.epsilon
                )));
            }
            (n + 1, Some(d))
        }
        _ => (1, None),
    };
    // d_t for round t (1-based); the last supplied value carries past the end of a per-step sequence
    // only for the look-ahead after the final round.
    let d_at = |t: usize| -> Result<f64> {
        match (&cfg.d_policy, estimated) {
            (_, Some(d)) => Ok(d),
            (DPolicy::Constant { d }, _) => Ok(*d),
            (DPolicy::PerStep { values }, _) => values
                .get(t - 1)
                .or_else(|| (t > horizon).then(|| values.last()).flatten())
                .copied()
                .ok_or_else(|| {
                    Error::InvalidInput(format!("per-step d sequence has {} values, round {t} needs one", values.len()))
                }),
            (DPolicy::EstimateFromPrefix { .. }, None) => unreachable!("prefix estimate computed above"),
        }
    };

    let d_initial = d_at(start)?;
    let mut state = match cfg.mode {
        Mode::Simple => State::Simple(SimpleDetector::new(cfg, d_initial)?),
        Mode::Composite => State::Composite(CompositeDetector::new(cfg, d_initial)?),
    };

    let mut trajectory = Vec::new();
    let mut violations = Vec::new();
    if record {
        trajectory.reserve(horizon.saturating_sub(start - 1));
    }

    for t in start..=horizon {
        let obs = &stream[t - 1];
        let d_t = d_at(t)?;
        let (before_a, before_b) = {
            let (a, b) = state.sides();
            (*a, b.copied())
        };
        let interval = before_a.bettor.interval;
        let (next, report) = state.step(obs, d_at(t + 1)?, cfg)?;
        state = next;
        if report.violation {
            violations.push(t);
        }
        if record {
            let (a, b) = state.sides();
            let g = obs.outcome();
            let (out_a, out_b) = match cfg.mode {
                Mode::Simple => (g, None),
                Mode::Composite => (g - cfg.epsilon, Some(-g - cfg.epsilon)),
            };
            trajectory.push(TracePoint {
                t,
                g,
                d: d_t,
                interval,
                a: SideTrace {
                    outcome: out_a,
                    theta: before_a.bettor.theta,
                    wealth: a.wealth.wealth,
                },
                b: match (before_b, b, out_b) {
                    (Some(pb), Some(b), Some(o)) => Some(SideTrace {
                        outcome: o,
                        theta: pb.bettor.theta,
                        wealth: b.wealth.wealth,
                    }),
                    _ => None,
                },
            });
        }
        if report.declared {
            return Ok(TestOutcome {
                mode: cfg.mode,
                decision: Decision::LlmDeclaredAnytime,
                rejection_time: t,
                d_initial,
                final_draw: None,
                violations,
                trajectory,
            });
        }
    }

    let (decision, final_draw) = match cfg.time_budget {
        Some(_) => {
            let z: f64 = substream(cfg.seed, STREAM_FINALIZE).random();
            let declared = state.finalize(z, cfg.alpha)?;
            (
                if declared {
                    Decision::LlmDeclaredAtBudget
                } else {
                    Decision::Retained
                },
                Some(z),
            )
        }
        None => (Decision::Retained, None),
    };
    Ok(TestOutcome {
        mode: cfg.mode,
        decision,
        rejection_time: horizon,
        d_initial,
        final_draw,
        violations,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{generate_pair, StreamKind};

    fn obs_from_outcomes(gs: &[f64]) -> Vec<ScoreObservation> {
        gs.iter()
            .enumerate()
            .map(|(i, &g)| ScoreObservation { t: i + 1, score_x: g, score_y: 0.0 })
            .collect()
    }

    /// Straight-line recursion with no shared code: wealth, gradient,
    /// curvature and the clamp written out inline.
    fn oracle_simple(gs: &[f64], d: f64, gamma: f64) -> Vec<f64> {
        let (mut theta, mut a, mut w) = (0.0f64, 1.0f64, 1.0f64);
        let mut out = Vec::new();
        for &g in gs {
            w *= 1.0 - g * theta;
            out.push(w);
            let z = g / (1.0 - g * theta);
            a += z * z;
            theta = (theta - z / (gamma * a)).min(1.0 / (2.0 * d)).max(-1.0 / (2.0 * d));
        }
        out
    }

    #[test]
    fn zero_fraction_stream_never_declares() {
        let cfg = DetectorConfig::simple(0.05, 1.0, None);
        let stream = obs_from_outcomes(&[0.0; 50]);
        let out = run_detector(&cfg, &stream).unwrap();
        assert_eq!(out.decision, Decision::Retained);
        assert_eq!(out.rejection_time, 50);
        assert!(out.trajectory.iter().all(|p| p.a.wealth == 1.0 && p.a.theta == 0.0));
    }

    #[test]
    fn declares_at_first_crossing_of_one_over_alpha() {
        // g = -1 with d = 1: theta jumps to 0.5 after round 1, wealth grows 1.5x per round.
        let cfg = DetectorConfig::simple(0.05, 1.0, Some(100));
        let stream = obs_from_outcomes(&[-1.0; 100]);
        let out = run_detector(&cfg, &stream).unwrap();
        let expected = oracle_simple(&[-1.0; 100], 1.0, DEFAULT_GAMMA);
        let first = expected.iter().position(|&w| w >= 20.0).unwrap() + 1;
        assert_eq!(out.decision, Decision::LlmDeclaredAnytime);
        assert_eq!(out.rejection_time, first);
        assert_eq!(out.trajectory.len(), first);
        assert!(out.trajectory[..first - 1].iter().all(|p| p.a.wealth < 20.0));
    }

    #[test]
    fn three_step_hand_trace() {
        let gs = [-0.5, -0.5, -0.5];
        let cfg = DetectorConfig::simple(0.05, 1.0, None);
        let out = run_detector(&cfg, &obs_from_outcomes(&gs)).unwrap();
        let expected = oracle_simple(&gs, 1.0, DEFAULT_GAMMA);
        for (p, w) in out.trajectory.iter().zip(&expected) {
            assert!((p.a.wealth - w).abs() < 1e-12);
        }
        // W_1 = 1 (theta_1 = 0); theta_2 = min(0.25/(gamma*1.25), 0.5) = 0.4437...
        assert_eq!(expected[0], 1.0);
        let theta2 = (0.5 / (DEFAULT_GAMMA * 1.25)).min(0.5);
        assert!((expected[1] - (1.0 + 0.5 * theta2)).abs() < 1e-15);
    }

    #[test]
    fn composite_side_a_frozen_when_gap_equals_epsilon() {
        let eps = 0.25;
        let stream: Vec<_> = (1..=40)
            .map(|t| ScoreObservation { t, score_x: 1.25, score_y: 1.0 })
            .collect();
        let cfg = DetectorConfig::composite(0.05, eps, 2.0, Some(40));
        let out = run_detector(&cfg, &stream).unwrap();
        assert!(out.trajectory.iter().all(|p| p.a.outcome == 0.0 && p.a.wealth == 1.0));
        assert_eq!(out.trajectory[0].b.unwrap().wealth, 1.0);
    }

    #[test]
    fn composite_five_step_trace_matches_oracle() {
        let (eps, d, gamma) = (0.1, 1.0, DEFAULT_GAMMA);
        let gs = [0.5, -0.5, 0.5, -0.5, 0.5];
        let cfg = DetectorConfig::composite(0.05, eps, d, None);
        let out = run_detector(&cfg, &obs_from_outcomes(&gs)).unwrap();
        let mut st = [(0.0f64, 1.0f64, 1.0f64); 2];
        for (p, &g) in out.trajectory.iter().zip(&gs) {
            for (i, h) in [g - eps, -g - eps].into_iter().enumerate() {
                let (theta, a, w) = &mut st[i];
                *w *= 1.0 - h * *theta;
                let z = h / (1.0 - h * *theta);
                *a += z * z;
                *theta = (*theta - z / (gamma * *a)).min(0.0).max(-1.0 / (2.0 * d));
            }
            assert!((p.a.wealth - st[0].2).abs() < 1e-12);
            assert!((p.b.unwrap().wealth - st[1].2).abs() < 1e-12);
        }
    }

    #[test]
    fn finalize_examples() {
        let cfg = DetectorConfig::simple(0.05, 1.0, Some(10));
        let s = SimpleDetector::new(&cfg, 1.0).unwrap();
        assert!(!s.finalize(0.2, 0.05).unwrap());
        assert!(s.finalize(0.01, 0.05).unwrap());
        assert!(s.finalize(1.5, 0.05).is_err());
        assert!(s.finalize(-0.1, 0.05).is_err());

        let ccfg = DetectorConfig::composite(0.05, 0.1, 1.0, Some(10));
        let mut c = CompositeDetector::new(&ccfg, 1.0).unwrap();
        c.side_a.wealth.wealth = 5.0;
        c.side_b.wealth.wealth = 50.0;
        assert!(c.finalize(1.0, 0.05).unwrap());
        c.side_b.wealth.wealth = 39.0;
        assert!(!c.finalize(1.0, 0.05).unwrap());
    }

    #[test]
    fn h0_identical_stream_is_retained_at_budget() {
        let k = StreamKind::gaussian(0.3, 1.0);
        let stream: Vec<_> = generate_pair(&k, &StreamKind::gaussian(0.0, 0.0), 100, 1)
            .unwrap()
            .into_iter()
            .map(|o| ScoreObservation { score_y: o.score_x, ..o })
            .collect();
        // z ~ U(0,1) and W_T = 1: retained unless z <= alpha; pick a seed whose draw exceeds alpha.
        let seed = (0..)
            .find(|&s| substream(s, STREAM_FINALIZE).random::<f64>() > 0.05)
            .unwrap();
        let cfg = DetectorConfig::simple(0.05, 10.0, Some(100)).with_seed(seed);
        let out = run_detector(&cfg, &stream).unwrap();
        assert_eq!(out.decision, Decision::Retained);
        assert_eq!(out.rejection_time, 100);
        assert!(out.final_draw.unwrap() > 0.05);
    }

    #[test]
    fn runs_are_deterministic() {
        let (x, y) = (StreamKind::gaussian(0.0, 1.0), StreamKind::gaussian(0.5, 1.0));
        let stream = generate_pair(&x, &y, 200, 77).unwrap();
        let cfg = DetectorConfig::composite(0.05, 0.1, 12.0, Some(200)).with_seed(3);
        assert_eq!(run_detector(&cfg, &stream).unwrap(), run_detector(&cfg, &stream).unwrap());
    }

    #[test]
    fn violations_flag_or_abort() {
        // d = 1 but g = -4 once theta is positive: factor 1 - (-4)(-theta)... use g = 4 with theta > 0.
        let mut gs = vec![-1.0, -1.0];
        gs.push(4.0);
        gs.extend([-1.0; 5]);
        let cfg = DetectorConfig::simple(0.01, 1.0, None);
        let out = run_detector(&cfg, &obs_from_outcomes(&gs)).unwrap();
        assert_eq!(out.violations, vec![3]);
        assert_eq!(out.trajectory[2].a.wealth, 0.0);
        assert!(out.trajectory[3..].iter().all(|p| p.a.wealth == 0.0));
        assert_eq!(out.decision, Decision::Retained);

        let abort = DetectorConfig { violation_policy: ViolationPolicy::Abort, ..cfg };
        assert!(matches!(
            run_detector(&abort, &obs_from_outcomes(&gs)),
            Err(Error::WealthViolation { step: 3, .. })
        ));

        // |g| > d with a still-positive factor is flagged but not fatal.
        let out = run_detector(&abort, &obs_from_outcomes(&[3.0, 0.0])).unwrap();
        assert_eq!(out.violations, vec![1]);
    }

    #[test]
    fn config_errors() {
        assert!(DetectorConfig::simple(0.0, 1.0, None).validate().is_err());
        assert!(DetectorConfig::simple(1.0, 1.0, None).validate().is_err());
        assert!(DetectorConfig::composite(0.05, 1.0, 1.0, None).validate().is_err());
        assert!(DetectorConfig::composite(0.05, -0.1, 1.0, None).validate().is_err());
        assert!(DetectorConfig::simple(0.05, 0.0, None).validate().is_err());
        let mut c = DetectorConfig::simple(0.05, 1.0, Some(10));
        c.d_policy = DPolicy::EstimateFromPrefix { n: 10 };
        assert!(c.validate().is_err());
        c.d_policy = DPolicy::PerStep { values: vec![1.0, 0.5, -1.0] };
        assert!(c.validate().is_err());
        let mut c = DetectorConfig::simple(0.05, 1.0, None);
        c.epsilon = 0.1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn short_streams_rejected() {
        let cfg = DetectorConfig::simple(0.05, 1.0, Some(10));
        assert!(matches!(
            run_detector(&cfg, &obs_from_outcomes(&[0.0; 9])),
            Err(Error::InvalidInput(_))
        ));
        let mut cfg = DetectorConfig::simple(0.05, 1.0, None);
        cfg.d_policy = DPolicy::EstimateFromPrefix { n: 10 };
        assert!(run_detector(&cfg, &obs_from_outcomes(&[1.0; 5])).is_err());
    }

    #[test]
    fn prefix_policy_starts_betting_after_prefix() {
        let gs: Vec<f64> = (0..60).map(|i| if i % 3 == 0 { -1.0 } else { -0.5 }).collect();
        let mut cfg = DetectorConfig::simple(0.05, 1.0, Some(60));
        cfg.d_policy = DPolicy::EstimateFromPrefix { n: 10 };
        let out = run_detector(&cfg, &obs_from_outcomes(&gs)).unwrap();
        assert_eq!(out.d_initial, 2.0);
        assert_eq!(out.trajectory[0].t, 11);
        assert_eq!(out.trajectory[0].a.wealth, 1.0);
        let expected = oracle_simple(&gs[10..], 2.0, DEFAULT_GAMMA);
        for (p, w) in out.trajectory.iter().zip(&expected) {
            assert!((p.a.wealth - w).abs() < 1e-12);
        }
        assert!(out.rejection_time > 10);

        // Degenerate prefix.
        let flat = obs_from_outcomes(&[0.0; 60]);
        assert!(matches!(run_detector(&cfg, &flat), Err(Error::DegenerateBound(_))));
    }

    #[test]
    fn per_step_bounds_follow_the_sequence() {
        let gs = [-0.5, -0.5, -2.0, -2.0, -1.0];
        let ds = vec![1.0, 1.0, 2.0, 2.0, 1.0];
        let mut cfg = DetectorConfig::simple(0.001, 1.0, None);
        cfg.d_policy = DPolicy::PerStep { values: ds.clone() };
        let out = run_detector(&cfg, &obs_from_outcomes(&gs)).unwrap();
        for (p, d) in out.trajectory.iter().zip(&ds) {
            assert_eq!(p.d, *d);
            assert_eq!(p.interval, decision_interval(*d, Mode::Simple).unwrap());
            assert!(p.interval.contains(p.a.theta));
        }
        assert!(out.violations.is_empty());
        cfg.d_policy = DPolicy::PerStep { values: vec![1.0, 1.0] };
        assert!(run_detector(&cfg, &obs_from_outcomes(&gs)).is_err());
    }

    #[test]
    fn composite_swap_symmetry() {
        let (x, y) = (StreamKind::gaussian(0.0, 1.0), StreamKind::gaussian(0.7, 1.0));
        let stream = generate_pair(&x, &y, 300, 5).unwrap();
        let swapped: Vec<_> = stream
            .iter()
            .map(|o| ScoreObservation { t: o.t, score_x: o.score_y, score_y: o.score_x })
            .collect();
        let cfg = DetectorConfig::composite(0.05, 0.2, 20.0, None);
        let a = run_detector(&cfg, &stream).unwrap();
        let b = run_detector(&cfg, &swapped).unwrap();
        assert_eq!(a.rejection_time, b.rejection_time);
        for (p, q) in a.trajectory.iter().zip(&b.trajectory) {
            assert_eq!(p.a, q.b.unwrap());
            assert_eq!(p.b.unwrap(), q.a);
        }
    }

    #[test]
    fn stepping_after_declaration_is_an_error() {
        let cfg = DetectorConfig::simple(0.5, 1.0, None);
        let mut s = SimpleDetector::new(&cfg, 1.0).unwrap();
        s.declared = true;
        assert!(simple_step(&s, 1.0, 0.0, 1.0, &cfg).is_err());
    }
}
