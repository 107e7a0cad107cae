use serde::{Deserialize, Serialize};

use super::LogLikelihood;
use crate::error::{Result, SmcError};
use crate::fk::run_smc;
use crate::models::{kalman, LgssmModel, LgssmParams, MsvModel, MsvParams};
use crate::rng::RngStreams;
use crate::schemes::{train, Scheme, SchemeConfig};
use crate::twist::{GaussianReference, TwistedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Bootstrap,
    Forward,
    Online,
    FastOnline,
    Backward,
    /// Exact likelihood; linear-Gaussian models only.
    Kalman,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Kalman => "kalman",
            other => other.scheme().expect("smc estimator").name(),
        }
    }

    pub fn scheme(&self) -> Option<Scheme> {
        match self {
            Estimator::Bootstrap => Some(Scheme::Bootstrap),
            Estimator::Forward => Some(Scheme::Forward),
            Estimator::Online => Some(Scheme::Online),
            Estimator::FastOnline => Some(Scheme::FastOnline),
            Estimator::Backward => Some(Scheme::Backward),
            Estimator::Kalman => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub estimator: Estimator,
    /// Particles of the bootstrap filter.
    #[serde(default = "default_bootstrap_particles")]
    pub n_bootstrap: usize,
    /// Training settings of the twisted estimators; twists are re-learned at every call.
    #[serde(default)]
    pub scheme: SchemeConfig,
}

fn default_bootstrap_particles() -> usize {
    256
}

impl EstimatorSpec {
    pub fn new(estimator: Estimator) -> Self {
        EstimatorSpec { estimator, n_bootstrap: default_bootstrap_particles(), scheme: SchemeConfig::default() }
    }
}

/// `log Z` estimate under `spec`: the bootstrap filter, or the final pass of a training run.
pub fn estimate_log_z<R: GaussianReference + ?Sized>(
    reference: &R,
    spec: &EstimatorSpec,
    streams: &RngStreams,
) -> Result<f64> {
    match spec.estimator {
        Estimator::Kalman => Err(SmcError::InvalidModel("the kalman estimator needs a linear-Gaussian model".into())),
        Estimator::Bootstrap => Ok(run_smc(&TwistedModel::bootstrap(reference), spec.n_bootstrap, streams)?.log_z()),
        other => Ok(train(other.scheme().expect("smc estimator"), reference, &spec.scheme, streams)?.final_log_z()),
    }
}

/// Stochastic volatility parameters in the `(m, alpha, sigma2, rho)` layout.
pub fn msv_params_from_vector(d: usize, theta: &[f64]) -> Result<MsvParams> {
    if theta.len() != 4 * d - 1 {
        return Err(SmcError::DimensionMismatch { expected: 4 * d - 1, got: theta.len() });
    }
    Ok(MsvParams {
        m: theta[..d].to_vec(),
        alpha: theta[d..2 * d].to_vec(),
        sigma2: theta[2 * d..3 * d].to_vec(),
        rho: theta[3 * d..].to_vec(),
    })
}

pub fn msv_params_to_vector(params: &MsvParams) -> Vec<f64> {
    [&params.m[..], &params.alpha, &params.sigma2, &params.rho].concat()
}

/// How the level `m` is initialized from the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum MInit {
    /// Log of the empirical variance of each return series.
    #[default]
    LogVariance,
    Variance,
}

/// Initial point: `m` from the data, `alpha = 0.9`, `sigma2 = 0.2`, `rho = 0.25`.
pub fn msv_initial_theta(observations: &[Vec<f64>], m_init: MInit) -> Vec<f64> {
    let d = observations.first().map_or(0, Vec::len);
    let n = observations.len() as f64;
    let m = (0..d).map(|i| {
        let mean = observations.iter().map(|y| y[i]).sum::<f64>() / n;
        let var = observations.iter().map(|y| (y[i] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        match m_init {
            MInit::LogVariance => var.ln(),
            MInit::Variance => var,
        }
    });
    let mut theta: Vec<f64> = m.collect();
    theta.extend(std::iter::repeat_n(0.9, d));
    theta.extend(std::iter::repeat_n(0.2, d));
    theta.extend(std::iter::repeat_n(0.25, d.saturating_sub(1)));
    theta
}

/// Stochastic volatility likelihood estimator over `(m, alpha, sigma2, rho)`.
#[derive(Debug, Clone)]
pub struct MsvLikelihood {
    pub observations: Vec<Vec<f64>>,
    pub spec: EstimatorSpec,
}

impl LogLikelihood for MsvLikelihood {
    fn log_likelihood(&self, theta: &[f64], streams: &RngStreams) -> Result<f64> {
        let d = self.observations.first().map_or(0, Vec::len);
        let model = MsvModel::new(msv_params_from_vector(d, theta)?, self.observations.clone())?;
        estimate_log_z(&model, &self.spec, streams)
    }
}

/// Linear-Gaussian likelihood with parameters built from `theta` by `params_of`.
pub struct LgssmLikelihood<F> {
    pub params_of: F,
    pub observations: Vec<Vec<f64>>,
    pub spec: EstimatorSpec,
}

impl<F: Fn(&[f64]) -> Result<LgssmParams> + Sync> LogLikelihood for LgssmLikelihood<F> {
    fn log_likelihood(&self, theta: &[f64], streams: &RngStreams) -> Result<f64> {
        let params = (self.params_of)(theta)?;
        if self.spec.estimator == Estimator::Kalman {
            return Ok(kalman(&params, &self.observations)?.log_z());
        }
        let model = LgssmModel::new(params, self.observations.clone())?;
        estimate_log_z(&model, &self.spec, streams)
    }
}
