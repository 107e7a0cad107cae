//! Fitting log-quadratic twists to log targets, with ESS-calibrated tempering.

mod regression;
mod tempering;

pub use regression::{
    default_target_ess, feature_count, fit_log_quadratic, weighted_objective, Projection, RegressionFit,
    RegressionProblem, DEFAULT_RIDGE,
};
pub use tempering::{temper_exponent, TemperingResult};
