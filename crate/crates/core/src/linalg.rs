//! Small dense helpers on top of nalgebra, plus slice kernels for the
//! per-particle hot loops.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Result, SmcError};

pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone())
        .ok_or_else(|| SmcError::Numerical(format!("{what} is not positive definite")))
}

pub fn log_det_from_cholesky(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    SymmetricEigen::new(m.clone()).eigenvalues.max()
}

pub fn is_diagonal(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0))
}

/// Row-major copy of a square matrix for the slice kernels below.
pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// `out = m * x` for a row-major `d x d` matrix.
#[inline]
pub fn matvec(m: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for i in 0..d {
        let row = &m[i * d..(i + 1) * d];
        out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

/// `x' m x` for a row-major `d x d` matrix.
#[inline]
pub fn quad_form(m: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    if d == 1 {
        return m[0] * x[0] * x[0];
    }
    let mut acc = 0.0;
    for i in 0..d {
        let row = &m[i * d..(i + 1) * d];
        let r: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
        acc += x[i] * r;
    }
    acc
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn dvec(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// Log-density of `N(mean, cov)` at `x`, given the Cholesky factor of `cov`.
pub fn gaussian_log_density(x: &DVector<f64>, mean: &DVector<f64>, chol: &Cholesky<f64, Dyn>) -> f64 {
    let d = x.len() as f64;
    let diff = x - mean;
    let sol = chol.solve(&diff);
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det_from_cholesky(chol) + diff.dot(&sol))
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
