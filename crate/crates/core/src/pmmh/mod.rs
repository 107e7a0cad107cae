//! Particle marginal Metropolis-Hastings with a Gaussian random walk on
//! transformed parameters.

mod chain;
mod estimator;
mod output;
mod prior;
mod transform;

use thiserror::Error;

pub use chain::{
    pilot_scale, pmmh_run, variance_window, ChainStep, LogLikelihood, PmmhChain, PmmhConfig, Sampler, VarianceWindow,
};
pub use estimator::{
    estimate_log_z, msv_initial_theta, msv_params_from_vector, msv_params_to_vector, Estimator, EstimatorSpec,
    LgssmLikelihood, MInit, MsvLikelihood,
};
pub use output::{ecdf_csv, windows_csv};
pub use prior::{inverse_gamma_from_moments, Prior, PriorSpec};
pub use transform::{Constraint, ParamTransform};

#[derive(Debug, Error)]
pub enum PmmhError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("initial parameter {0:?} is outside the prior support")]
    OutsideSupport(Vec<f64>),
    #[error("likelihood estimate at the initial parameter failed: {0}")]
    InitialEstimate(String),
    #[error("checkpoint does not match this run: {0}")]
    CheckpointMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
