//! Sequential detection of machine-generated text by testing by betting.
//!
//! Two score streams are compared online: `x` from human-written text and `y`
//! from the source under test. A bettor stakes a fraction of its wealth on
//! each score difference; wealth that grows past `1/alpha` is evidence that
//! the streams differ, with type-I error controlled at `alpha` at any stopping
//! time.

pub mod baseline;
pub mod betting;
pub mod calibration;
pub mod detector;
pub mod error;
pub mod evaluation;
pub mod rng;
pub mod stream;

pub use baseline::{batched_permutation_run, permutation_pvalue, BaselineOutcome, Correction, PermutationConfig};
pub use betting::{decision_interval, ons_update, DecisionInterval, Mode, OnsBettor, WealthState, DEFAULT_GAMMA};
pub use calibration::{calibrate_estimated, calibrate_oracle, CalibrationResult, Provenance};
pub use detector::{run_detector, DPolicy, Decision, DetectorConfig, TestOutcome, ViolationPolicy};
pub use error::{Error, ErrorClass, Result};
pub use evaluation::{monte_carlo, ratio_diagnostic, regret_audit, AlphaGrid, MonteCarloReport};
pub use stream::{generate, load_scores, preset, ScoreObservation, StreamKind, StreamSpec};
