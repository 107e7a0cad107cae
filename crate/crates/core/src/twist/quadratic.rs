use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmcError};
use crate::linalg::{dot, quad_form, symmetrize};

/// Whether the quadratic term of a twist is restricted to a diagonal matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum TwistMode {
    #[default]
    Diagonal,
    Full,
}

/// `phi(x) = exp(-x'Ax/2 - x'b - c/2)` with `A` symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct LogQuadraticTwist {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
}

impl LogQuadraticTwist {
    pub fn identity(dim: usize) -> Self {
        LogQuadraticTwist { a: DMatrix::zeros(dim, dim), b: DVector::zeros(dim), c: 0.0 }
    }

    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: f64) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() != b.len() {
            return Err(SmcError::DimensionMismatch { expected: b.len(), got: a.nrows() });
        }
        let mut a = a;
        symmetrize(&mut a);
        Ok(LogQuadraticTwist { a, b, c })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn is_identity(&self) -> bool {
        self.c == 0.0 && self.b.iter().all(|v| *v == 0.0) && self.a.iter().all(|v| *v == 0.0)
    }

    pub fn is_diagonal(&self) -> bool {
        crate::linalg::is_diagonal(&self.a)
    }

    /// `log phi(x)`. `A` is symmetric, so its column-major storage is also row-major.
    #[inline]
    pub fn log_eval(&self, x: &[f64]) -> f64 {
        -0.5 * quad_form(self.a.as_slice(), x) - dot(self.b.as_slice(), x) - 0.5 * self.c
    }

    /// Pointwise product of two twists: coefficients add.
    pub fn compose(&self, other: &LogQuadraticTwist) -> Result<LogQuadraticTwist> {
        if self.dim() != other.dim() {
            return Err(SmcError::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(LogQuadraticTwist { a: &self.a + &other.a, b: &self.b + &other.b, c: self.c + other.c })
    }

    /// The twist `x -> phi(F x + f)`, with `F` possibly rectangular (`dim x k`).
    pub fn pullback_affine(&self, f_mat: &DMatrix<f64>, f_vec: &DVector<f64>) -> LogQuadraticTwist {
        let af = &self.a * f_mat;
        let mut a = f_mat.transpose() * &af;
        symmetrize(&mut a);
        let af_vec = &self.a * f_vec;
        let b = f_mat.transpose() * (&af_vec + &self.b);
        let c = self.c + f_vec.dot(&af_vec) + 2.0 * f_vec.dot(&self.b);
        LogQuadraticTwist { a, b, c }
    }

    /// Same twist with the off-diagonal part of `A` dropped.
    pub fn diagonal_part(&self) -> LogQuadraticTwist {
        let a = DMatrix::from_diagonal(&self.a.diagonal());
        LogQuadraticTwist { a, b: self.b.clone(), c: self.c }
    }

    /// Max-norm distance between coefficient vectors relative to the max-norm of `reference`.
    pub fn relative_error(&self, reference: &LogQuadraticTwist) -> f64 {
        let diff = self
            .a
            .iter()
            .zip(reference.a.iter())
            .map(|(x, y)| (x - y).abs())
            .chain(self.b.iter().zip(reference.b.iter()).map(|(x, y)| (x - y).abs()))
            .chain(std::iter::once((self.c - reference.c).abs()))
            .fold(0.0, f64::max);
        let scale = reference
            .a
            .iter()
            .chain(reference.b.iter())
            .chain(std::iter::once(&reference.c))
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_twist(rng: &mut impl Rng, d: usize) -> LogQuadraticTwist {
        let raw = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let a = &raw * raw.transpose() * 0.5;
        let b = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        LogQuadraticTwist::new(a, b, rng.random_range(-2.0..2.0)).unwrap()
    }

    #[test]
    fn compose_identity_and_additivity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let phi = random_twist(&mut rng, 3);
        assert_eq!(phi.compose(&LogQuadraticTwist::identity(3)).unwrap(), phi);
        let doubled = phi.compose(&phi).unwrap();
        assert_eq!(doubled.a, &phi.a * 2.0);
        assert_eq!(doubled.b, &phi.b * 2.0);
        assert_eq!(doubled.c, 2.0 * phi.c);
        assert!(matches!(
            phi.compose(&LogQuadraticTwist::identity(2)),
            Err(SmcError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn composition_is_pointwise_product() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let (p, q) = (random_twist(&mut rng, 2), random_twist(&mut rng, 2));
        let pq = p.compose(&q).unwrap();
        for _ in 0..100 {
            let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let product = p.log_eval(&x).exp() * q.log_eval(&x).exp();
            let composed = pq.log_eval(&x).exp();
            assert!(((composed - product) / product).abs() <= 1e-12);
        }
    }

    #[test]
    fn pullback_matches_pointwise_evaluation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let phi = random_twist(&mut rng, 2);
        let f_mat = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.2, 0.7]);
        let f_vec = DVector::from_vec(vec![0.3, -0.4]);
        let pulled = phi.pullback_affine(&f_mat, &f_vec);
        for _ in 0..20 {
            let x = DVector::from_vec(vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]);
            let m = &f_mat * &x + &f_vec;
            assert!((pulled.log_eval(x.as_slice()) - phi.log_eval(m.as_slice())).abs() < 1e-12);
        }
    }
}
