use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmcError};
use crate::twist::{GaussianReference, LogQuadraticTwist};

use super::lgssm::LgssmParams;

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

/// AR(1) latent state observed through a nonlinear function in Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NlObsParams {
    pub alpha: f64,
    pub sigma_x2: f64,
    pub sigma_y2: f64,
    pub horizon: usize,
}

/// Observation mean `f(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ObservationFn {
    /// `exp(x) + x / 10`.
    #[default]
    ExpPlusLinear,
    /// `slope * x + intercept`; turns the model into a linear-Gaussian one.
    Linear { slope: f64, intercept: f64 },
}

impl ObservationFn {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ObservationFn::ExpPlusLinear => x.exp() + x / 10.0,
            ObservationFn::Linear { slope, intercept } => slope * x + intercept,
        }
    }
}

impl NlObsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.abs() < 1.0) {
            return Err(SmcError::InvalidModel(format!("autoregression {} is not stationary", self.alpha)));
        }
        if !(self.sigma_x2 > 0.0 && self.sigma_y2 > 0.0) || self.horizon == 0 {
            return Err(SmcError::InvalidModel("variances must be positive and the horizon nonzero".into()));
        }
        Ok(())
    }

    pub fn stationary_variance(&self) -> f64 {
        self.sigma_x2 / (1.0 - self.alpha * self.alpha)
    }
}

/// Simulate `(x_{1:T}, y_{1:T})`. `initial` forces `x_1`. Zero variances are allowed here.
pub fn simulate_nlobs<G: Rng + ?Sized>(
    params: &NlObsParams,
    f: ObservationFn,
    initial: Option<f64>,
    rng: &mut G,
) -> (Vec<f64>, Vec<f64>) {
    let sx = params.sigma_x2.sqrt();
    let sy = params.sigma_y2.sqrt();
    let mut xs = Vec::with_capacity(params.horizon);
    let mut ys = Vec::with_capacity(params.horizon);
    let mut x = 0.0;
    for t in 0..params.horizon {
        let z: f64 = rng.sample(StandardNormal);
        x = if t == 0 {
            initial.unwrap_or(params.stationary_variance().sqrt() * z)
        } else {
            params.alpha * x + sx * z
        };
        let e: f64 = rng.sample(StandardNormal);
        xs.push(x);
        ys.push(f.eval(x) + sy * e);
    }
    (xs, ys)
}

#[derive(Debug, Clone)]
pub struct NlObsModel {
    params: NlObsParams,
    f: ObservationFn,
    observations: Vec<f64>,
    log_norm: f64,
}

impl NlObsModel {
    pub fn new(params: NlObsParams, f: ObservationFn, observations: Vec<f64>) -> Result<Self> {
        params.validate()?;
        if observations.is_empty() {
            return Err(SmcError::InvalidModel("no observations".into()));
        }
        let log_norm = -0.5 * (LOG_2PI + params.sigma_y2.ln());
        Ok(NlObsModel { params: NlObsParams { horizon: observations.len(), ..params }, f, observations, log_norm })
    }

    pub fn params(&self) -> &NlObsParams {
        &self.params
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    /// Equivalent linear-Gaussian parameters when `f` is linear.
    pub fn as_lgssm(&self) -> Option<LgssmParams> {
        let ObservationFn::Linear { slope, intercept } = self.f else {
            return None;
        };
        let s = |v: f64| DMatrix::from_element(1, 1, v);
        Some(LgssmParams {
            transition: s(self.params.alpha),
            transition_offset: DVector::zeros(1),
            transition_cov: s(self.params.sigma_x2),
            observation: s(slope),
            observation_offset: DVector::from_element(1, intercept),
            observation_cov: s(self.params.sigma_y2),
            initial_mean: DVector::zeros(1),
            initial_cov: s(self.params.stationary_variance()),
        })
    }

    pub fn lgssm_observations(&self) -> Vec<Vec<f64>> {
        self.observations.iter().map(|y| vec![*y]).collect()
    }
}

impl GaussianReference for NlObsModel {
    fn horizon(&self) -> usize {
        self.observations.len()
    }

    fn dim(&self) -> usize {
        1
    }

    fn kernel_cov(&self, t: usize) -> DMatrix<f64> {
        let v = if t == 1 { self.params.stationary_variance() } else { self.params.sigma_x2 };
        DMatrix::from_element(1, 1, v)
    }

    fn kernel_mean(&self, _t: usize, prev: Option<&[f64]>, out: &mut [f64]) {
        out[0] = prev.map_or(0.0, |p| self.params.alpha * p[0]);
    }

    #[inline]
    fn log_potential(&self, t: usize, _prev: Option<&[f64]>, x: &[f64]) -> f64 {
        let r = self.observations[t - 1] - self.f.eval(x[0]);
        self.log_norm - 0.5 * r * r / self.params.sigma_y2
    }

    fn affine_mean(&self, _t: usize) -> Option<(DMatrix<f64>, DVector<f64>)> {
        Some((DMatrix::from_element(1, 1, self.params.alpha), DVector::zeros(1)))
    }

    fn quadratic_potential(&self, t: usize) -> Option<LogQuadraticTwist> {
        let ObservationFn::Linear { slope, intercept } = self.f else {
            return None;
        };
        let v = self.params.sigma_y2;
        let r = self.observations[t - 1] - intercept;
        Some(LogQuadraticTwist {
            a: DMatrix::from_element(1, 1, slope * slope / v),
            b: DVector::from_element(1, -slope * r / v),
            c: r * r / v + LOG_2PI + v.ln(),
        })
    }
}
