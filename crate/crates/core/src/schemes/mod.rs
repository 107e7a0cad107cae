//! Iterative training of twist policies.
//!
//! * [`forward_train`]: each iteration learns `phi^(L+1)` from particles weighted
//!   by the fixed-lag auxiliary weights of `phi^(L)`, sweeping forward in time.
//! * [`controlled_smc_train`]: backward sweep over the particles of the previous pass.
//! * [`online_forward`] and [`fast_online_forward`]: streaming variants with a
//!   fixed depth.

mod controlled;
mod exact;
mod forward;
mod run;

use serde::{Deserialize, Serialize};

use crate::fk::Resampling;
use crate::learning::default_target_ess;
use crate::rng::RngStreams;
use crate::twist::{GaussianReference, TwistMode};

pub use controlled::controlled_smc_train;
pub use exact::{exact_lgssm_policy, exact_policy};
pub use forward::{fast_online_forward, forward_train, online_forward};
pub use run::{FailureEvent, FailureKind, IterationSummary, Recovery, TrainingRun};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Bootstrap,
    Forward,
    Backward,
    Online,
    FastOnline,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Bootstrap => "bootstrap",
            Scheme::Forward => "forward",
            Scheme::Backward => "backward",
            Scheme::Online => "online",
            Scheme::FastOnline => "fast-online",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    /// Particles per training cloud (forward schemes).
    pub n_train: usize,
    /// Particles per sampling pass.
    pub n_sample: usize,
    /// Number of training iterations (the depth for the online schemes).
    pub iterations: usize,
    pub mode: TwistMode,
    pub tempering: bool,
    /// ESS floor for tempering; defaults to twice the feature count.
    pub target_ess: Option<f64>,
    pub resampling: Resampling,
    pub ridge: f64,
    /// Floor on the twisted precision; defaults to `1e-6 / lambda_max(cov)` per step.
    pub psd_epsilon: Option<f64>,
    pub refit_after_projection: bool,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            n_train: 256,
            n_sample: 256,
            iterations: 4,
            mode: TwistMode::Diagonal,
            tempering: true,
            target_ess: None,
            resampling: Resampling::Multinomial,
            ridge: crate::learning::DEFAULT_RIDGE,
            psd_epsilon: None,
            refit_after_projection: true,
        }
    }
}

impl SchemeConfig {
    pub fn target_ess_for(&self, dim: usize) -> f64 {
        self.target_ess.unwrap_or_else(|| default_target_ess(dim, self.mode))
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.n_train == 0 || self.n_sample == 0 {
            return Err(crate::SmcError::InvalidModel("particle counts must be positive".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(crate::SmcError::InvalidModel("ridge must be nonnegative".into()));
        }
        Ok(())
    }
}

const ITERATION_TAG: u64 = 1 << 32;

/// Streams of the sampling pass of iteration `iteration`.
pub fn iteration_streams(streams: &RngStreams, iteration: usize) -> RngStreams {
    streams.derive(ITERATION_TAG | iteration as u64)
}

/// Run `scheme` on `reference`. The bootstrap filter is iteration 0 of the
/// forward scheme with no training iterations.
pub fn train<R: GaussianReference + ?Sized>(
    scheme: Scheme,
    reference: &R,
    config: &SchemeConfig,
    streams: &RngStreams,
) -> crate::Result<TrainingRun> {
    match scheme {
        Scheme::Bootstrap => {
            let config = SchemeConfig { iterations: 0, ..config.clone() };
            let mut run = forward_train(reference, &config, streams)?;
            run.scheme = Scheme::Bootstrap;
            Ok(run)
        }
        Scheme::Forward => forward_train(reference, config, streams),
        Scheme::Backward => controlled_smc_train(reference, config, streams),
        Scheme::Online => online_forward(reference, config, streams),
        Scheme::FastOnline => fast_online_forward(reference, config, streams),
    }
}
