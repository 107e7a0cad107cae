//! Closed-form twisting of Gaussian kernels.
//!
//! For `M(x_prev, .) = N(m(x_prev), S)` and `phi(x) = exp(-x'Ax/2 - x'b - c/2)`
//! with `P = S^-1 + A` positive definite:
//!
//! * twisted kernel `phi M / M(phi) = N(P^-1 (S^-1 m - b), P^-1)`;
//! * `log M(phi)` is itself log-quadratic in the mean `m`, with coefficients
//!   `A' = S^-1 P^-1 A`, `b' = S^-1 P^-1 b`, `c' = c + log|S| + log|P| - b'P^-1 b`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SmcError};
use crate::linalg::{cholesky, log_det_from_cholesky, matvec, symmetrize, to_row_major};

use super::quadratic::LogQuadraticTwist;

/// A reference Gaussian kernel covariance combined with one twist, with
/// everything the per-particle loops need precomputed.
#[derive(Debug, Clone)]
pub struct TwistedKernel {
    twist: LogQuadraticTwist,
    identity: bool,
    dim: usize,
    /// Row-major `P^-1 S^-1`.
    gain: Vec<f64>,
    /// `P^-1 b`.
    offset: Vec<f64>,
    /// Row-major lower Cholesky factor: of `S` for the identity twist, of `P` otherwise.
    factor: Vec<f64>,
    /// `log M(phi)` as a function of the kernel mean.
    log_norm: LogQuadraticTwist,
    twisted_cov: DMatrix<f64>,
}

impl TwistedKernel {
    pub fn new(cov: &DMatrix<f64>, twist: LogQuadraticTwist) -> Result<Self> {
        let d = cov.nrows();
        if twist.dim() != d {
            return Err(SmcError::DimensionMismatch { expected: d, got: twist.dim() });
        }
        let chol_s = cholesky(cov, "kernel covariance")?;
        if twist.is_identity() {
            return Ok(TwistedKernel {
                identity: true,
                dim: d,
                gain: to_row_major(&DMatrix::identity(d, d)),
                offset: vec![0.0; d],
                factor: to_row_major(&chol_s.l()),
                log_norm: LogQuadraticTwist::identity(d),
                twisted_cov: cov.clone(),
                twist,
            });
        }
        let s_inv = chol_s.inverse();
        let mut precision = &s_inv + &twist.a;
        symmetrize(&mut precision);
        let chol_p = nalgebra::Cholesky::new(precision.clone()).ok_or_else(|| SmcError::InvalidTwist {
            t: 0,
            reason: "kernel precision plus twist quadratic term is not positive definite".into(),
        })?;
        if chol_p.l_dirty().diagonal().iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(SmcError::InvalidTwist { t: 0, reason: "degenerate twisted precision".into() });
        }
        let gain = chol_p.solve(&s_inv);
        let offset = chol_p.solve(&twist.b);
        let gain_t = gain.transpose();
        let mut a_mean = &gain_t * &twist.a;
        symmetrize(&mut a_mean);
        let b_mean = &gain_t * &twist.b;
        let c_mean = twist.c + log_det_from_cholesky(&chol_s) + log_det_from_cholesky(&chol_p) - twist.b.dot(&offset);
        let mut twisted_cov = chol_p.inverse();
        symmetrize(&mut twisted_cov);
        Ok(TwistedKernel {
            identity: false,
            dim: d,
            gain: to_row_major(&gain),
            offset: offset.as_slice().to_vec(),
            factor: to_row_major(&chol_p.l()),
            log_norm: LogQuadraticTwist { a: a_mean, b: b_mean, c: c_mean },
            twisted_cov,
            twist,
        })
    }

    pub fn twist(&self) -> &LogQuadraticTwist {
        &self.twist
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn twisted_cov(&self) -> &DMatrix<f64> {
        &self.twisted_cov
    }

    /// `log M(phi)` when the reference kernel has mean `mean`, as a twist over the mean.
    pub fn log_normalizer_twist(&self) -> &LogQuadraticTwist {
        &self.log_norm
    }

    #[inline]
    pub fn log_normalizer(&self, mean: &[f64]) -> f64 {
        if self.identity {
            0.0
        } else {
            self.log_norm.log_eval(mean)
        }
    }

    pub fn twisted_mean(&self, mean: &[f64], out: &mut [f64]) {
        if self.identity {
            out.copy_from_slice(mean);
        } else {
            matvec(&self.gain, mean, out);
            for (o, g) in out.iter_mut().zip(&self.offset) {
                *o -= g;
            }
        }
    }

    /// Draw from the twisted kernel given the reference mean and standard normals `z`.
    /// `z` is used as scratch and overwritten.
    #[inline]
    pub fn sample(&self, mean: &[f64], z: &mut [f64], out: &mut [f64]) {
        let d = self.dim;
        if self.identity {
            for i in 0..d {
                let row = &self.factor[i * d..i * d + i + 1];
                let mut acc = mean[i];
                for j in 0..=i {
                    acc += row[j] * z[j];
                }
                out[i] = acc;
            }
            return;
        }
        // v = L_P^{-T} z by back substitution, so that cov(v) = P^{-1}
        for i in (0..d).rev() {
            let mut acc = z[i];
            for j in (i + 1)..d {
                acc -= self.factor[j * d + i] * z[j];
            }
            z[i] = acc / self.factor[i * d + i];
        }
        self.twisted_mean(mean, out);
        for i in 0..d {
            out[i] += z[i];
        }
    }
}

/// Twisted mean, twisted covariance and `log ∫ phi dN(mean, cov)`.
pub fn twist_gaussian(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    twist: &LogQuadraticTwist,
) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
    if twist.is_identity() {
        return Ok((mean.clone(), cov.clone(), 0.0));
    }
    let kernel = TwistedKernel::new(cov, twist.clone())?;
    let mut m = vec![0.0; mean.len()];
    kernel.twisted_mean(mean.as_slice(), &mut m);
    Ok((DVector::from_vec(m), kernel.twisted_cov.clone(), kernel.log_normalizer(mean.as_slice())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    #[test]
    fn identity_twist_is_a_no_op() {
        let mean = DVector::from_vec(vec![0.3, -1.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let (m, s, le) = twist_gaussian(&mean, &cov, &LogQuadraticTwist::identity(2)).unwrap();
        assert_eq!(m, mean);
        assert_eq!(s, cov);
        assert_eq!(le, 0.0);
    }

    #[test]
    fn scalar_example_matches_hand_calculation_and_quadrature() {
        let twist = LogQuadraticTwist::new(DMatrix::from_element(1, 1, 1.0), DVector::zeros(1), 0.0).unwrap();
        let (m, s, le) =
            twist_gaussian(&DVector::zeros(1), &DMatrix::from_element(1, 1, 1.0), &twist).unwrap();
        assert!(m[0].abs() < 1e-15);
        assert!((s[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((le + 0.5 * 2f64.ln()).abs() < 1e-14);
        // trapezoid quadrature of exp(-x^2/2) N(x; 0, 1) on [-12, 12]
        let h = 1e-3;
        let integral: f64 = (-12000..=12000)
            .map(|k| {
                let x = k as f64 * h;
                (-0.5 * x * x).exp() * (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
            })
            .sum::<f64>()
            * h;
        assert!((integral.ln() - le).abs() < 1e-10);
    }

    #[test]
    fn invalid_twist_is_rejected() {
        let twist = LogQuadraticTwist::new(DMatrix::from_element(1, 1, -2.0), DVector::zeros(1), 0.0).unwrap();
        let err = twist_gaussian(&DVector::zeros(1), &DMatrix::from_element(1, 1, 1.0), &twist).unwrap_err();
        assert!(matches!(err, SmcError::InvalidTwist { .. }));
    }

    #[test]
    fn samples_have_twisted_moments() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]);
        let twist = LogQuadraticTwist::new(
            DMatrix::from_row_slice(2, 2, &[0.5, -0.1, -0.1, 1.2]),
            DVector::from_vec(vec![0.4, -0.3]),
            0.7,
        )
        .unwrap();
        let kernel = TwistedKernel::new(&cov, twist).unwrap();
        let mean = [0.2, -0.5];
        let mut expected_mean = [0.0; 2];
        kernel.twisted_mean(&mean, &mut expected_mean);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let n = 200_000;
        let mut sum = [0.0; 2];
        let mut sum2 = [[0.0; 2]; 2];
        let mut out = [0.0; 2];
        for _ in 0..n {
            let mut z = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            kernel.sample(&mean, &mut z, &mut out);
            for i in 0..2 {
                sum[i] += out[i];
                for j in 0..2 {
                    sum2[i][j] += out[i] * out[j];
                }
            }
        }
        let s = kernel.twisted_cov();
        for i in 0..2 {
            let mu = sum[i] / n as f64;
            assert!((mu - expected_mean[i]).abs() < 5.0 * (s[(i, i)] / n as f64).sqrt());
            for j in 0..2 {
                let c = sum2[i][j] / n as f64 - mu * sum[j] / n as f64;
                assert!((c - s[(i, j)]).abs() < 0.02, "cov {i}{j}: {c} vs {}", s[(i, j)]);
            }
        }
    }
}
