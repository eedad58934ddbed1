//! The pluggable prediction and density-estimation layer: the dropout
//! regressor, its Monte Carlo uncertainty baseline, and the conditional
//! kernel density estimator for the generalized propensity score.

pub mod density;
pub mod mc_dropout;
pub mod mlp;

pub use density::{
    empirical_quantile, fit_conditional_density, BandwidthRule, ConditionalDensityConfig,
    CovariateGrouping, KernelConditionalDensity,
};
pub use mc_dropout::mc_dropout_interval;
pub use mlp::{train_mlp, Mlp, MlpConfig};
