use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmcError};
use crate::linalg::{cholesky, matvec, to_row_major};
use crate::twist::GaussianReference;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

/// Multivariate stochastic volatility: log-volatilities follow a stationary
/// VAR(1) with diagonal autoregression and tridiagonal innovation covariance,
/// and `y_{t,i} ~ N(0, exp(x_{t,i}))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct MsvParams {
    pub m: Vec<f64>,
    pub alpha: Vec<f64>,
    pub sigma2: Vec<f64>,
    /// Correlations between neighbouring innovations, length `d - 1`.
    pub rho: Vec<f64>,
}

impl MsvParams {
    pub fn dim(&self) -> usize {
        self.m.len()
    }

    fn check_shapes(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || self.alpha.len() != d || self.sigma2.len() != d || self.rho.len() + 1 != d {
            return Err(SmcError::InvalidModel("stochastic volatility parameter lengths are inconsistent".into()));
        }
        if self.alpha.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(SmcError::InvalidModel("autoregression coefficients must lie in (0, 1)".into()));
        }
        if self.sigma2.iter().any(|s| !(*s > 0.0)) || self.rho.iter().any(|r| !(r.abs() < 1.0)) {
            return Err(SmcError::InvalidModel("variances must be positive and correlations in (-1, 1)".into()));
        }
        Ok(())
    }

    /// Innovation covariance; fails when it is not positive definite.
    pub fn innovation_cov(&self) -> Result<DMatrix<f64>> {
        self.check_shapes()?;
        let d = self.dim();
        let sd: Vec<f64> = self.sigma2.iter().map(|s| s.sqrt()).collect();
        let cov = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                self.sigma2[i]
            } else if i + 1 == j {
                self.rho[i] * sd[i] * sd[j]
            } else if j + 1 == i {
                self.rho[j] * sd[i] * sd[j]
            } else {
                0.0
            }
        });
        cholesky(&cov, "innovation covariance").map_err(|e| SmcError::InvalidModel(e.to_string()))?;
        Ok(cov)
    }

    /// Stationary covariance, `cov_ij / (1 - alpha_i alpha_j)`.
    pub fn stationary_cov(&self) -> Result<DMatrix<f64>> {
        let cov = self.innovation_cov()?;
        let d = self.dim();
        Ok(DMatrix::from_fn(d, d, |i, j| cov[(i, j)] / (1.0 - self.alpha[i] * self.alpha[j])))
    }
}

/// Simulate latent log-volatilities and returns; rows are time steps.
pub fn simulate_msv<G: Rng + ?Sized>(
    params: &MsvParams,
    horizon: usize,
    rng: &mut G,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let d = params.dim();
    let l = cholesky(&params.innovation_cov()?, "innovation covariance")?.l();
    let l_inf = cholesky(&params.stationary_cov()?, "stationary covariance")?.l();
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(horizon);
    let mut ys = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let z = DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
        let x: Vec<f64> = if t == 0 {
            let noise = &l_inf * z;
            (0..d).map(|i| params.m[i] + noise[i]).collect()
        } else {
            let noise = &l * z;
            let prev = &xs[t - 1];
            (0..d).map(|i| params.m[i] + params.alpha[i] * (prev[i] - params.m[i]) + noise[i]).collect()
        };
        let y: Vec<f64> = x
            .iter()
            .map(|xi| {
                let e: f64 = rng.sample(StandardNormal);
                (0.5 * xi).exp() * e
            })
            .collect();
        xs.push(x);
        ys.push(y);
    }
    Ok((xs, ys))
}

#[derive(Debug, Clone)]
pub struct MsvModel {
    params: MsvParams,
    observations: Vec<Vec<f64>>,
    squared: Vec<Vec<f64>>,
    cov: DMatrix<f64>,
    stationary: DMatrix<f64>,
    transition_rm: Vec<f64>,
    offset: Vec<f64>,
}

impl MsvModel {
    pub fn new(params: MsvParams, observations: Vec<Vec<f64>>) -> Result<Self> {
        let cov = params.innovation_cov()?;
        let stationary = params.stationary_cov()?;
        let d = params.dim();
        if observations.is_empty() {
            return Err(SmcError::InvalidModel("no observations".into()));
        }
        if let Some(bad) = observations.iter().find(|y| y.len() != d) {
            return Err(SmcError::DimensionMismatch { expected: d, got: bad.len() });
        }
        let squared = observations.iter().map(|y| y.iter().map(|v| v * v).collect()).collect();
        let transition = DMatrix::from_diagonal(&DVector::from_column_slice(&params.alpha));
        let offset = (0..d).map(|i| (1.0 - params.alpha[i]) * params.m[i]).collect();
        Ok(MsvModel {
            transition_rm: to_row_major(&transition),
            params,
            observations,
            squared,
            cov,
            stationary,
            offset,
        })
    }

    pub fn params(&self) -> &MsvParams {
        &self.params
    }

    pub fn observations(&self) -> &[Vec<f64>] {
        &self.observations
    }
}

impl GaussianReference for MsvModel {
    fn horizon(&self) -> usize {
        self.observations.len()
    }

    fn dim(&self) -> usize {
        self.params.dim()
    }

    fn kernel_cov(&self, t: usize) -> DMatrix<f64> {
        if t == 1 {
            self.stationary.clone()
        } else {
            self.cov.clone()
        }
    }

    fn kernel_mean(&self, _t: usize, prev: Option<&[f64]>, out: &mut [f64]) {
        match prev {
            None => out.copy_from_slice(&self.params.m),
            Some(p) => {
                matvec(&self.transition_rm, p, out);
                for (o, f) in out.iter_mut().zip(&self.offset) {
                    *o += f;
                }
            }
        }
    }

    #[inline]
    fn log_potential(&self, t: usize, _prev: Option<&[f64]>, x: &[f64]) -> f64 {
        let y2 = &self.squared[t - 1];
        let mut total = 0.0;
        for i in 0..x.len() {
            total -= HALF_LOG_2PI + 0.5 * x[i] + 0.5 * y2[i] * (-x[i]).exp();
        }
        total
    }

    fn affine_mean(&self, _t: usize) -> Option<(DMatrix<f64>, DVector<f64>)> {
        Some((
            DMatrix::from_diagonal(&DVector::from_column_slice(&self.params.alpha)),
            DVector::from_column_slice(&self.offset),
        ))
    }
}
