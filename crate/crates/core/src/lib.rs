//! Finite-sample conformal prediction intervals for potential outcomes of
//! continuous treatments.
//!
//! Intervening on a continuous dose shifts the treatment policy, so plain
//! split conformal prediction loses its coverage guarantee. This crate
//! calibrates conditionally on that shift and provides two interval
//! constructions:
//!
//! - [`shift_known`]: the baseline policy is known and the intervention is
//!   an additive dose shift; calibration scores are reweighted by exact
//!   density ratios and the optimal imputed score is found from the dual
//!   multipliers of a weighted quantile regression.
//! - [`shift_unknown`]: the policy is estimated and the intervention
//!   assigns a fixed dose; the point-mass shift is approximated by a
//!   Gaussian tilt of the estimated propensity with a bounded error ratio,
//!   and membership is decided by the slack variables of the tilt program.
//!
//! [`models`] supplies the outcome regressor (with its Monte Carlo dropout
//! baseline) and a kernel conditional density estimator; [`synthdata`]
//! generates the two synthetic benchmarks with analytic ground truth;
//! [`harness`] orchestrates the coverage experiments behind the `dosecp`
//! command-line tool.
//!
//! ```
//! use dosecp_core::types::{build_interval, empirical_coverage};
//!
//! let interval = build_interval(5.0, 2.0, 0.1).unwrap();
//! assert_eq!((interval.lower, interval.upper), (3.0, 7.0));
//! let coverage = empirical_coverage(&[interval], &[6.5]).unwrap();
//! assert_eq!(coverage, 1.0);
//! ```

pub mod error;
pub mod harness;
pub mod models;
pub mod quantile;
pub mod shift_known;
pub mod shift_unknown;
pub mod synthdata;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    build_interval, empirical_coverage, residual_score, CalibratedScores, Dataset, Intervention,
    LabeledSample, NonconformityScore, OutcomePredictor, PredictionInterval, PropensityModel,
    Sample, Split,
};
