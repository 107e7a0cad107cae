use nalgebra::{DMatrix, SymmetricEigen};

use crate::linalg::{cholesky, is_diagonal, max_eigenvalue, min_eigenvalue, symmetrize};

use super::quadratic::TwistMode;

/// Default floor `1e-6 / lambda_max(cov)` on the twisted precision.
pub fn default_epsilon(cov: &DMatrix<f64>) -> f64 {
    1e-6 / max_eigenvalue(cov)
}

fn clamp_target(epsilon: f64, scale: f64) -> f64 {
    epsilon + (1e-6 * epsilon).max(64.0 * f64::EPSILON * scale)
}

/// Project `a` so that `cov^-1 + a' >= epsilon I`, by eigenvalue clamping of
/// `cov^-1 + a`. Returns `a` unchanged when it already satisfies the bound.
pub fn psd_floor(a: &DMatrix<f64>, cov: &DMatrix<f64>, epsilon: f64) -> DMatrix<f64> {
    psd_floor_mode(a, cov, epsilon, TwistMode::Full)
}

/// Mode-aware projection. In diagonal mode the result stays diagonal: it is
/// the exact per-coordinate clamp when `cov` is diagonal, and a uniform floor of
/// each entry at `epsilon - lambda_min(cov^-1)` otherwise.
pub fn psd_floor_mode(a: &DMatrix<f64>, cov: &DMatrix<f64>, epsilon: f64, mode: TwistMode) -> DMatrix<f64> {
    let s_inv = cholesky(cov, "kernel covariance").expect("covariance must be SPD").inverse();
    let mut m = &s_inv + a;
    symmetrize(&mut m);
    if min_eigenvalue(&m) >= epsilon {
        return a.clone();
    }
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let target = clamp_target(epsilon, scale);
    match mode {
        TwistMode::Full => {
            let eig = SymmetricEigen::new(m);
            let clamped = eig.eigenvalues.map(|l| l.max(target));
            let mut rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
            symmetrize(&mut rebuilt);
            let mut out = rebuilt - s_inv;
            symmetrize(&mut out);
            out
        }
        TwistMode::Diagonal => {
            let d = a.nrows();
            let mut out = DMatrix::from_diagonal(&a.diagonal());
            if is_diagonal(&s_inv) {
                for i in 0..d {
                    if s_inv[(i, i)] + out[(i, i)] < target {
                        out[(i, i)] = target - s_inv[(i, i)];
                    }
                }
            } else {
                let floor = target - min_eigenvalue(&s_inv);
                for i in 0..d {
                    out[(i, i)] = out[(i, i)].max(floor);
                }
            }
            out
        }
    }
}
