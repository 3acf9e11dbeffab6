//! Wealth dynamics of the betting game and the one-dimensional Online Newton
//! Step bettor that picks the betting fraction.
//!
//! Each round the bettor commits to a fraction `theta_t` before seeing the
//! outcome `g_t`; wealth then evolves as `W_t = W_{t-1} * (1 - g_t * theta_t)`.
//! Picking `theta_t` is an online convex optimization problem on the
//! exp-concave loss `l_t(theta) = -ln(1 - g_t * theta)`, so the log-wealth of
//! the bettor equals the log-wealth of any fixed benchmark fraction minus the
//! bettor's regret against it.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// ONS parameter used by the experiments: `1/gamma = 2 / (2 - ln 3)`.
pub const DEFAULT_GAMMA: f64 = 0.450_693_855_665_945_1;

/// Initial curvature accumulator `a_0`.
pub const INITIAL_CURVATURE: f64 = 1.0;

/// Which hypothesis layout the decision space serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `H0: mu_x = mu_y`, fractions in `[-1/(2d), 1/(2d)]`.
    Simple,
    /// `H0: |mu_x - mu_y| <= eps`, two one-sided bettors with fractions in `[-1/(2d), 0]`.
    Composite,
}

/// Closed interval of admissible betting fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionInterval {
    pub lo: f64,
    pub hi: f64,
}

impl DecisionInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        ensure_finite("interval lo", lo)?;
        ensure_finite("interval hi", hi)?;
        if lo > hi {
            return Err(Error::InvalidInput(format!(
                "decision interval requires lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn clamp(&self, theta: f64) -> f64 {
        theta.min(self.hi).max(self.lo)
    }

    pub fn contains(&self, theta: f64) -> bool {
        self.lo <= theta && theta <= self.hi
    }

    pub fn diameter(&self) -> f64 {
        self.hi - self.lo
    }

    /// Intersection of two intervals, `None` when they are disjoint.
    pub fn intersect(&self, other: &DecisionInterval) -> Option<DecisionInterval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(DecisionInterval { lo, hi })
    }
}

/// One round of the wealth recursion, `w_prev * (1 - g * theta)`.
pub fn wealth_step(w_prev: f64, g: f64, theta: f64) -> Result<f64> {
    ensure_finite("wealth", w_prev)?;
    ensure_finite("outcome g", g)?;
    ensure_finite("theta", theta)?;
    Ok(w_prev * (1.0 - g * theta))
}

fn betting_factor(g: f64, theta: f64) -> Result<f64> {
    ensure_finite("outcome g", g)?;
    ensure_finite("theta", theta)?;
    let factor = 1.0 - g * theta;
    if factor > 0.0 {
        Ok(factor)
    } else {
        Err(Error::Domain {
            outcome: g,
            theta,
            factor,
        })
    }
}

/// `-ln(1 - g * theta)`.
pub fn log_loss(g: f64, theta: f64) -> Result<f64> {
    Ok(-betting_factor(g, theta)?.ln())
}

/// Derivative of [`log_loss`] in `theta`: `g / (1 - g * theta)`.
pub fn log_loss_gradient(g: f64, theta: f64) -> Result<f64> {
    Ok(g / betting_factor(g, theta)?)
}

/// Decision space guaranteeing a nonnegative wealth factor whenever `|g| <= d`.
pub fn decision_interval(d: f64, mode: Mode) -> Result<DecisionInterval> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::InvalidBound(d));
    }
    let half = 1.0 / (2.0 * d);
    Ok(match mode {
        Mode::Simple => DecisionInterval { lo: -half, hi: half },
        Mode::Composite => DecisionInterval { lo: -half, hi: 0.0 },
    })
}

/// State of a one-dimensional Online Newton Step bettor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnsBettor {
    pub theta: f64,
    pub a: f64,
    pub gamma: f64,
    pub interval: DecisionInterval,
}

impl OnsBettor {
    /// Fresh bettor with `theta_1 = 0` (clamped into `interval`) and `a_0 = 1`.
    pub fn new(gamma: f64, interval: DecisionInterval) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be > 0, got {gamma}")));
        }
        Ok(Self {
            theta: interval.clamp(0.0),
            a: INITIAL_CURVATURE,
            gamma,
            interval,
        })
    }

    /// One ONS round on the loss `-ln(1 - g * theta)`:
    /// `z = g / (1 - g theta)`, `a' = a + z^2`, `theta' = clamp(theta - z / (gamma a'))`
    /// where the clamp targets `next`.
    pub fn update(&self, g: f64, next: DecisionInterval) -> Result<OnsBettor> {
        let z = log_loss_gradient(g, self.theta)?;
        let a = self.a + z * z;
        let theta = next.clamp(self.theta - z / (self.gamma * a));
        Ok(OnsBettor {
            theta,
            a,
            gamma: self.gamma,
            interval: next,
        })
    }

    /// Carry the fraction into a new interval without learning from the round.
    pub(crate) fn reclamp(&self, next: DecisionInterval) -> OnsBettor {
        OnsBettor {
            theta: next.clamp(self.theta),
            interval: next,
            ..*self
        }
    }
}

/// Free-function form of [`OnsBettor::update`].
pub fn ons_update(state: &OnsBettor, g_effective: f64, next: DecisionInterval) -> Result<OnsBettor> {
    state.update(g_effective, next)
}

/// Wealth after a round, paired with the step index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WealthState {
    pub wealth: f64,
    pub step: usize,
}

impl Default for WealthState {
    fn default() -> Self {
        Self {
            wealth: 1.0,
            step: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_gamma_matches_closed_form() {
        assert!(DEFAULT_GAMMA == (2.0 - 3f64.ln()) / 2.0);
    }

    #[test]
    fn wealth_step_examples() {
        assert_eq!(wealth_step(1.0, 0.5, 0.0).unwrap(), 1.0);
        assert_eq!(wealth_step(1.0, 0.0, 0.25).unwrap(), 1.0);
        assert!((wealth_step(2.0, 0.5, -0.4).unwrap() - 2.4).abs() < 1e-15);
        assert!(wealth_step(f64::NAN, 0.5, 0.1).is_err());
        assert!(wealth_step(1.0, f64::INFINITY, 0.1).is_err());
    }

    #[test]
    fn log_loss_examples() {
        assert_eq!(log_loss(0.0, 0.3).unwrap(), 0.0);
        assert!((log_loss(1.0, -1.0).unwrap() + 2f64.ln()).abs() < 1e-15);
        // -ln(0.6) = 0.510825623765990683...
        assert!((log_loss(0.8, 0.5).unwrap() - 0.510_825_623_765_990_7).abs() < 1e-15);
        assert!(matches!(log_loss(2.0, 0.5), Err(Error::Domain { .. })));
        assert!(matches!(log_loss(4.0, 0.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(log_loss_gradient(0.0, 0.3).unwrap(), 0.0);
        assert_eq!(log_loss_gradient(0.5, 0.0).unwrap(), 0.5);
        assert!(log_loss_gradient(1.0, 1.0).is_err());
    }

    #[test]
    fn decision_interval_examples() {
        assert_eq!(
            decision_interval(1.0, Mode::Simple).unwrap(),
            DecisionInterval { lo: -0.5, hi: 0.5 }
        );
        assert_eq!(
            decision_interval(1.0, Mode::Composite).unwrap(),
            DecisionInterval { lo: -0.5, hi: 0.0 }
        );
        let k = decision_interval(7.6444, Mode::Simple).unwrap();
        assert!((k.hi - 0.06541).abs() < 1e-5);
        assert!((k.lo + 0.06541).abs() < 1e-5);
        assert!(matches!(
            decision_interval(0.0, Mode::Simple),
            Err(Error::InvalidBound(_))
        ));
        assert!(decision_interval(-1.0, Mode::Composite).is_err());
        assert!(decision_interval(f64::NAN, Mode::Composite).is_err());
    }

    #[test]
    fn ons_zero_outcome_keeps_theta_and_curvature() {
        let k = decision_interval(1.0, Mode::Simple).unwrap();
        let state = OnsBettor {
            theta: 0.3,
            a: 2.5,
            gamma: DEFAULT_GAMMA,
            interval: k,
        };
        let next = state.update(0.0, k).unwrap();
        assert_eq!(next.theta, 0.3);
        assert_eq!(next.a, 2.5);
        // re-clamp into a narrower interval
        let narrow = decision_interval(4.0, Mode::Simple).unwrap();
        let next = state.update(0.0, narrow).unwrap();
        assert_eq!(next.theta, 0.125);
        assert_eq!(next.a, 2.5);
    }

    #[test]
    fn ons_hand_computed_step() {
        let k = decision_interval(1.0, Mode::Simple).unwrap();
        let state = OnsBettor::new(DEFAULT_GAMMA, k).unwrap();
        assert_eq!(state.theta, 0.0);
        assert_eq!(state.a, 1.0);
        let next = ons_update(&state, -1.0, k).unwrap();
        // z = -1, a' = 2, unclamped step 1/(2 gamma) ~ 1.1094 > 0.5
        const { assert!(1.0 / (2.0 * DEFAULT_GAMMA) > 1.1) };
        assert_eq!(next.a, 2.0);
        assert_eq!(next.theta, 0.5);
    }

    #[test]
    fn ons_alternating_outcomes_stay_in_interval() {
        let d = 3.0;
        let k = decision_interval(d, Mode::Simple).unwrap();
        let mut state = OnsBettor::new(DEFAULT_GAMMA, k).unwrap();
        for t in 0..1000 {
            let g = if t % 2 == 0 { d } else { -d };
            state = state.update(g, k).unwrap();
            assert!(k.contains(state.theta));
        }
    }

    #[test]
    fn ons_rejects_domain_breach() {
        let k = DecisionInterval { lo: -1.0, hi: 1.0 };
        let state = OnsBettor {
            theta: 1.0,
            a: 1.0,
            gamma: DEFAULT_GAMMA,
            interval: k,
        };
        assert!(matches!(state.update(1.0, k), Err(Error::Domain { .. })));
    }

    #[test]
    fn bettor_rejects_bad_gamma() {
        let k = decision_interval(1.0, Mode::Simple).unwrap();
        assert!(OnsBettor::new(0.0, k).is_err());
        assert!(OnsBettor::new(f64::NAN, k).is_err());
    }

    proptest! {
        #[test]
        fn ons_output_lies_in_next_interval(
            theta_frac in -1.0f64..=1.0,
            g_frac in -1.0f64..=1.0,
            d in 0.01f64..100.0,
            d_next in 0.01f64..100.0,
            a in 1.0f64..1e6,
            composite in any::<bool>(),
        ) {
            let mode = if composite { Mode::Composite } else { Mode::Simple };
            let k = decision_interval(d, mode).unwrap();
            let next = decision_interval(d_next, mode).unwrap();
            let theta = k.clamp(theta_frac / (2.0 * d));
            let state = OnsBettor { theta, a, gamma: DEFAULT_GAMMA, interval: k };
            let g = g_frac * d;
            let out = state.update(g, next).unwrap();
            prop_assert!(next.contains(out.theta));
            let z = g / (1.0 - g * theta);
            prop_assert_eq!(out.a, a + z * z);
            prop_assert!(out.a >= a);
        }

        #[test]
        fn simple_factor_bounds(g_frac in -1.0f64..=1.0, t_frac in -1.0f64..=1.0, d in 1e-3f64..1e3) {
            let k = decision_interval(d, Mode::Simple).unwrap();
            let theta = k.clamp(t_frac / (2.0 * d));
            let factor = 1.0 - g_frac * d * theta;
            prop_assert!((0.5 - 1e-12..=1.5 + 1e-12).contains(&factor));
        }

        #[test]
        fn composite_factor_bounds(
            g_frac in -1.0f64..=1.0,
            t_frac in 0.0f64..=1.0,
            eps_frac in 0.0f64..1.0,
            d in 1e-3f64..1e3,
        ) {
            let k = decision_interval(d, Mode::Composite).unwrap();
            let theta = k.clamp(-t_frac / (2.0 * d));
            let eps = eps_frac * d;
            let g = g_frac * d;
            let lo = (d - eps) / (2.0 * d);
            let hi = (3.0 * d + eps) / (2.0 * d);
            for outcome in [g - eps, -g - eps] {
                let factor = 1.0 - outcome * theta;
                prop_assert!(factor >= lo - 1e-12 && factor <= hi + 1e-12);
                prop_assert!(factor >= 0.0);
            }
        }
    }
}
