use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SmcError};
use crate::linalg::{cholesky, log_det_from_cholesky, matvec, to_row_major};
use crate::twist::{GaussianReference, LogQuadraticTwist};

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

/// `x_1 ~ N(m1, P1)`, `x_t = F x_{t-1} + f + N(0, Q)`, `y_t = H x_t + h + N(0, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LgssmParams {
    pub transition: DMatrix<f64>,
    pub transition_offset: DVector<f64>,
    pub transition_cov: DMatrix<f64>,
    pub observation: DMatrix<f64>,
    pub observation_offset: DVector<f64>,
    pub observation_cov: DMatrix<f64>,
    pub initial_mean: DVector<f64>,
    pub initial_cov: DMatrix<f64>,
}

impl LgssmParams {
    /// Scalar AR(1) state observed in Gaussian noise: `x_t = a x_{t-1} + N(0, q)`, `y_t = x_t + N(0, r)`,
    /// started at `N(0, p1)`.
    pub fn scalar(a: f64, q: f64, r: f64, p1: f64) -> Self {
        let s = |v: f64| DMatrix::from_element(1, 1, v);
        LgssmParams {
            transition: s(a),
            transition_offset: DVector::zeros(1),
            transition_cov: s(q),
            observation: s(1.0),
            observation_offset: DVector::zeros(1),
            observation_cov: s(r),
            initial_mean: DVector::zeros(1),
            initial_cov: s(p1),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.observation.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.state_dim();
        let k = self.obs_dim();
        let shapes = [
            (self.transition.shape(), (d, d)),
            ((self.transition_offset.len(), 1), (d, 1)),
            (self.transition_cov.shape(), (d, d)),
            (self.observation.shape(), (k, d)),
            ((self.observation_offset.len(), 1), (k, 1)),
            (self.observation_cov.shape(), (k, k)),
            ((self.initial_mean.len(), 1), (d, 1)),
            (self.initial_cov.shape(), (d, d)),
        ];
        if shapes.iter().any(|(got, want)| got != want) {
            return Err(SmcError::InvalidModel("linear-Gaussian parameter shapes are inconsistent".into()));
        }
        for (m, what) in [
            (&self.transition_cov, "transition covariance"),
            (&self.observation_cov, "observation covariance"),
            (&self.initial_cov, "initial covariance"),
        ] {
            cholesky(m, what).map_err(|e| SmcError::InvalidModel(e.to_string()))?;
        }
        Ok(())
    }
}

/// Draw a latent path and observations.
pub fn simulate_lgssm<G: Rng + ?Sized>(
    params: &LgssmParams,
    horizon: usize,
    rng: &mut G,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    params.validate()?;
    let lq = cholesky(&params.transition_cov, "transition covariance")?.l();
    let lr = cholesky(&params.observation_cov, "observation covariance")?.l();
    let l1 = cholesky(&params.initial_cov, "initial covariance")?.l();
    let mut normal = |n: usize| DVector::<f64>::from_fn(n, |_, _| rng.sample(StandardNormal));
    let (d, k) = (params.state_dim(), params.obs_dim());
    let mut xs = Vec::with_capacity(horizon);
    let mut ys = Vec::with_capacity(horizon);
    let mut x = &params.initial_mean + &l1 * normal(d);
    for t in 0..horizon {
        if t > 0 {
            x = &params.transition * &x + &params.transition_offset + &lq * normal(d);
        }
        let y = &params.observation * &x + &params.observation_offset + &lr * normal(k);
        xs.push(x.iter().copied().collect());
        ys.push(y.iter().copied().collect());
    }
    Ok((xs, ys))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanOutput {
    /// Cumulative `log p(y_{1:t})`.
    pub log_z_path: Vec<f64>,
    pub filter_means: Vec<DVector<f64>>,
    pub filter_covs: Vec<DMatrix<f64>>,
    /// `log p(y_t | y_{1:t-1})`.
    pub predictive_log_lik: Vec<f64>,
}

impl KalmanOutput {
    pub fn log_z(&self) -> f64 {
        self.log_z_path.last().copied().unwrap_or(0.0)
    }
}

pub fn kalman(params: &LgssmParams, observations: &[Vec<f64>]) -> Result<KalmanOutput> {
    params.validate()?;
    let h = &params.observation;
    let mut mean = params.initial_mean.clone();
    let mut cov = params.initial_cov.clone();
    let mut out = KalmanOutput {
        log_z_path: Vec::with_capacity(observations.len()),
        filter_means: Vec::with_capacity(observations.len()),
        filter_covs: Vec::with_capacity(observations.len()),
        predictive_log_lik: Vec::with_capacity(observations.len()),
    };
    let mut total = 0.0;
    for (t, y) in observations.iter().enumerate() {
        if t > 0 {
            mean = &params.transition * &mean + &params.transition_offset;
            cov = &params.transition * &cov * params.transition.transpose() + &params.transition_cov;
        }
        let y = DVector::from_column_slice(y);
        let innovation = y - (h * &mean + &params.observation_offset);
        let s = h * &cov * h.transpose() + &params.observation_cov;
        let chol = s
            .clone()
            .cholesky()
            .ok_or_else(|| SmcError::Numerical(format!("innovation covariance not positive definite at t={}", t + 1)))?;
        let solved = chol.solve(&innovation);
        let ll = -0.5 * (innovation.len() as f64 * LOG_2PI + log_det_from_cholesky(&chol) + innovation.dot(&solved));
        // gain K = P H' S^-1
        let gain = chol.solve(&(h * &cov)).transpose();
        mean += &gain * innovation;
        cov = &cov - &gain * h * &cov;
        cov = (&cov + cov.transpose()) * 0.5;
        total += ll;
        out.predictive_log_lik.push(ll);
        out.log_z_path.push(total);
        out.filter_means.push(mean.clone());
        out.filter_covs.push(cov.clone());
    }
    Ok(out)
}

/// Bootstrap reference for a linear-Gaussian model with fixed observations.
#[derive(Debug, Clone)]
pub struct LgssmModel {
    params: LgssmParams,
    observations: Vec<Vec<f64>>,
    transition_rm: Vec<f64>,
    potentials: Vec<LogQuadraticTwist>,
}

impl LgssmModel {
    pub fn new(params: LgssmParams, observations: Vec<Vec<f64>>) -> Result<Self> {
        params.validate()?;
        if observations.is_empty() {
            return Err(SmcError::InvalidModel("no observations".into()));
        }
        let k = params.obs_dim();
        if let Some(bad) = observations.iter().find(|y| y.len() != k) {
            return Err(SmcError::DimensionMismatch { expected: k, got: bad.len() });
        }
        let chol_r = cholesky(&params.observation_cov, "observation covariance")?;
        let h = &params.observation;
        let hr = chol_r.solve(h);
        let mut a = h.transpose() * &hr;
        crate::linalg::symmetrize(&mut a);
        let log_det_2pi_r = k as f64 * LOG_2PI + log_det_from_cholesky(&chol_r);
        let potentials = observations
            .iter()
            .map(|y| {
                let resid = DVector::from_column_slice(y) - &params.observation_offset;
                let r_inv_resid = chol_r.solve(&resid);
                LogQuadraticTwist {
                    a: a.clone(),
                    b: -(h.transpose() * &r_inv_resid),
                    c: resid.dot(&r_inv_resid) + log_det_2pi_r,
                }
            })
            .collect();
        Ok(LgssmModel { transition_rm: to_row_major(&params.transition), params, observations, potentials })
    }

    pub fn params(&self) -> &LgssmParams {
        &self.params
    }

    pub fn observations(&self) -> &[Vec<f64>] {
        &self.observations
    }

    pub fn kalman(&self) -> Result<KalmanOutput> {
        kalman(&self.params, &self.observations)
    }
}

impl GaussianReference for LgssmModel {
    fn horizon(&self) -> usize {
        self.observations.len()
    }

    fn dim(&self) -> usize {
        self.params.state_dim()
    }

    fn kernel_cov(&self, t: usize) -> DMatrix<f64> {
        if t == 1 {
            self.params.initial_cov.clone()
        } else {
            self.params.transition_cov.clone()
        }
    }

    fn kernel_mean(&self, _t: usize, prev: Option<&[f64]>, out: &mut [f64]) {
        match prev {
            None => out.copy_from_slice(self.params.initial_mean.as_slice()),
            Some(p) => {
                matvec(&self.transition_rm, p, out);
                for (o, f) in out.iter_mut().zip(self.params.transition_offset.iter()) {
                    *o += f;
                }
            }
        }
    }

    fn log_potential(&self, t: usize, _prev: Option<&[f64]>, x: &[f64]) -> f64 {
        self.potentials[t - 1].log_eval(x)
    }

    fn affine_mean(&self, _t: usize) -> Option<(DMatrix<f64>, DVector<f64>)> {
        Some((self.params.transition.clone(), self.params.transition_offset.clone()))
    }

    fn quadratic_potential(&self, t: usize) -> Option<LogQuadraticTwist> {
        Some(self.potentials[t - 1].clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Marginal likelihood from the joint Gaussian law of `(y_1..y_T)`.
    fn dense_log_z(p: &LgssmParams, ys: &[Vec<f64>]) -> f64 {
        let (d, k, horizon) = (p.state_dim(), p.obs_dim(), ys.len());
        // state means and cross-covariances Cov(x_s, x_t)
        let mut means = vec![p.initial_mean.clone()];
        let mut covs = vec![p.initial_cov.clone()];
        for t in 1..horizon {
            means.push(&p.transition * &means[t - 1] + &p.transition_offset);
            covs.push(&p.transition * &covs[t - 1] * p.transition.transpose() + &p.transition_cov);
        }
        let cross = |s: usize, t: usize| -> DMatrix<f64> {
            let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
            let mut m = covs[lo].clone();
            for _ in lo..hi {
                m = &p.transition * m;
            }
            if s <= t {
                m.transpose()
            } else {
                m
            }
        };
        let n = horizon * k;
        let mut big = DMatrix::zeros(n, n);
        let mut mu = DVector::zeros(n);
        let mut y = DVector::zeros(n);
        for s in 0..horizon {
            let m = &p.observation * &means[s] + &p.observation_offset;
            mu.rows_mut(s * k, k).copy_from(&m);
            y.rows_mut(s * k, k).copy_from(&DVector::from_column_slice(&ys[s]));
            for t in 0..horizon {
                let mut block = &p.observation * cross(s, t) * p.observation.transpose();
                if s == t {
                    block += &p.observation_cov;
                }
                big.view_mut((s * k, t * k), (k, k)).copy_from(&block);
            }
        }
        let _ = d;
        let chol = big.cholesky().unwrap();
        let r = y - mu;
        -0.5 * (n as f64 * LOG_2PI + log_det_from_cholesky(&chol) + r.dot(&chol.solve(&r)))
    }

    #[test]
    fn single_scalar_observation() {
        let p = LgssmParams::scalar(0.5, 1.0, 1.0, 1.0);
        let out = kalman(&p, &[vec![0.0]]).unwrap();
        assert!((out.log_z() + 0.5 * (4.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn zero_observation_matrix_ignores_state() {
        let mut p = LgssmParams::scalar(0.9, 1.0, 0.3, 2.0);
        p.observation = DMatrix::zeros(1, 1);
        let ys: Vec<Vec<f64>> = vec![vec![0.4], vec![-1.0], vec![2.0]];
        let expected: f64 = ys.iter().map(|y| -0.5 * (LOG_2PI + 0.3f64.ln() + y[0] * y[0] / 0.3)).sum();
        assert!((kalman(&p, &ys).unwrap().log_z() - expected).abs() < 1e-12);
    }

    #[test]
    fn matches_dense_joint_gaussian() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let d = 1 + trial % 3;
            let k = 1 + (trial / 3) % 2;
            let rand_mat = |r: usize, c: usize, rng: &mut rand_chacha::ChaCha8Rng| {
                DMatrix::from_fn(r, c, |_, _| rng.random_range(-0.8..0.8))
            };
            let spd = |n: usize, rng: &mut rand_chacha::ChaCha8Rng| {
                let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                &m * m.transpose() + DMatrix::identity(n, n) * 0.3
            };
            let p = LgssmParams {
                transition: rand_mat(d, d, &mut rng),
                transition_offset: DVector::from_fn(d, |_, _| rng.random_range(-0.5..0.5)),
                transition_cov: spd(d, &mut rng),
                observation: rand_mat(k, d, &mut rng),
                observation_offset: DVector::from_fn(k, |_, _| rng.random_range(-0.5..0.5)),
                observation_cov: spd(k, &mut rng),
                initial_mean: DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)),
                initial_cov: spd(d, &mut rng),
            };
            let horizon = 1 + trial % 5;
            let (_, ys) = simulate_lgssm(&p, horizon, &mut rng).unwrap();
            let kal = kalman(&p, &ys).unwrap().log_z();
            let dense = dense_log_z(&p, &ys);
            assert!(((kal - dense) / dense).abs() < 1e-10, "trial {trial}: {kal} vs {dense}");
        }
    }

    #[test]
    fn quadratic_potential_matches_density() {
        let p = LgssmParams::scalar(0.8, 1.0, 0.25, 1.0);
        let model = LgssmModel::new(p, vec![vec![0.7], vec![-0.2]]).unwrap();
        for x in [-2.0, 0.0, 0.3, 1.5] {
            let direct = -0.5 * (LOG_2PI + 0.25f64.ln() + (0.7 - x) * (0.7 - x) / 0.25);
            assert!((model.log_potential(1, None, &[x]) - direct).abs() < 1e-12);
        }
    }
}
