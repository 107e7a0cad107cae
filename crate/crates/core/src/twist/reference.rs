use nalgebra::{DMatrix, DVector};

use super::quadratic::LogQuadraticTwist;

/// A reference model whose initial law and transition kernels are Gaussian
/// with a covariance that may depend on `t` but not on the previous state.
///
/// Index convention: time `t = 1` is the initial law; `kernel_mean(1, None, ..)`
/// writes its mean and `kernel_cov(1)` is its covariance.
pub trait GaussianReference: Sync {
    fn horizon(&self) -> usize;
    fn dim(&self) -> usize;
    fn kernel_cov(&self, t: usize) -> DMatrix<f64>;
    fn kernel_mean(&self, t: usize, prev: Option<&[f64]>, out: &mut [f64]);
    /// Untwisted log-potential `log G_t`.
    fn log_potential(&self, t: usize, prev: Option<&[f64]>, x: &[f64]) -> f64;

    /// `(F, f)` when the transition mean at `t >= 2` is `F x_prev + f`.
    fn affine_mean(&self, _t: usize) -> Option<(DMatrix<f64>, DVector<f64>)> {
        None
    }

    /// The potential at `t` as an exact log-quadratic function of `x_t`, when it is one.
    fn quadratic_potential(&self, _t: usize) -> Option<LogQuadraticTwist> {
        None
    }
}

impl<R: GaussianReference + ?Sized> GaussianReference for &R {
    fn horizon(&self) -> usize {
        (**self).horizon()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn kernel_cov(&self, t: usize) -> DMatrix<f64> {
        (**self).kernel_cov(t)
    }
    fn kernel_mean(&self, t: usize, prev: Option<&[f64]>, out: &mut [f64]) {
        (**self).kernel_mean(t, prev, out)
    }
    fn log_potential(&self, t: usize, prev: Option<&[f64]>, x: &[f64]) -> f64 {
        (**self).log_potential(t, prev, x)
    }
    fn affine_mean(&self, t: usize) -> Option<(DMatrix<f64>, DVector<f64>)> {
        (**self).affine_mean(t)
    }
    fn quadratic_potential(&self, t: usize) -> Option<LogQuadraticTwist> {
        (**self).quadratic_potential(t)
    }
}
