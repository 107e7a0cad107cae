use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, SmcError};
use crate::twist::{psd_floor_mode, LogQuadraticTwist, TwistMode};

/// Relative ridge: `lambda = DEFAULT_RIDGE * trace(G) / p` on the standardized normal matrix.
pub const DEFAULT_RIDGE: f64 = 1e-8;
const REFINEMENT_STEPS: usize = 3;
const MIN_CORRELATION_EIGENVALUE: f64 = 1e-13;

/// Projection of the fitted quadratic term against a kernel covariance.
#[derive(Debug, Clone, Copy)]
pub struct Projection<'a> {
    pub cov: &'a DMatrix<f64>,
    pub epsilon: f64,
}

/// Least-squares fit of a log-quadratic function of the states to log targets.
#[derive(Debug, Clone)]
pub struct RegressionProblem<'a> {
    /// Row-major `N x dim`.
    pub states: &'a [f64],
    pub dim: usize,
    pub log_targets: &'a [f64],
    /// `None` for an unweighted fit.
    pub log_weights: Option<&'a [f64]>,
    pub mode: TwistMode,
    pub ridge: f64,
    pub projection: Option<Projection<'a>>,
    /// Refit `(b, c)` with the projected `A` held fixed.
    pub refit_after_projection: bool,
}

impl<'a> RegressionProblem<'a> {
    pub fn new(states: &'a [f64], dim: usize, log_targets: &'a [f64], mode: TwistMode) -> Self {
        RegressionProblem {
            states,
            dim,
            log_targets,
            log_weights: None,
            mode,
            ridge: DEFAULT_RIDGE,
            projection: None,
            refit_after_projection: true,
        }
    }

    pub fn with_weights(mut self, log_weights: &'a [f64]) -> Self {
        self.log_weights = Some(log_weights);
        self
    }

    pub fn with_projection(mut self, cov: &'a DMatrix<f64>, epsilon: f64) -> Self {
        self.projection = Some(Projection { cov, epsilon });
        self
    }

    fn len(&self) -> usize {
        self.log_targets.len()
    }

    fn state(&self, n: usize) -> &[f64] {
        &self.states[n * self.dim..(n + 1) * self.dim]
    }

    /// Indices and normalized weights of the points that take part in the fit.
    fn usable(&self) -> Result<(Vec<usize>, Vec<f64>)> {
        if self.states.len() != self.len() * self.dim {
            return Err(SmcError::DimensionMismatch { expected: self.len() * self.dim, got: self.states.len() });
        }
        if let Some(lw) = self.log_weights {
            if lw.len() != self.len() {
                return Err(SmcError::DimensionMismatch { expected: self.len(), got: lw.len() });
            }
        }
        let mut idx = Vec::with_capacity(self.len());
        for n in 0..self.len() {
            let y = self.log_targets[n];
            let lw = self.log_weights.map_or(0.0, |w| w[n]);
            if y.is_nan() || y == f64::INFINITY || lw.is_nan() || lw == f64::INFINITY {
                return Err(SmcError::Numerical(format!("non-finite regression input at point {n}")));
            }
            if y > f64::NEG_INFINITY && lw > f64::NEG_INFINITY {
                idx.push(n);
            }
        }
        let weights = match self.log_weights {
            None => vec![1.0 / idx.len().max(1) as f64; idx.len()],
            Some(lw) => {
                let max = idx.iter().map(|&n| lw[n]).fold(f64::NEG_INFINITY, f64::max);
                let raw: Vec<f64> = idx.iter().map(|&n| (lw[n] - max).exp()).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|w| w / total).collect()
            }
        };
        // points with underflowing weight carry no information
        let (idx, weights): (Vec<usize>, Vec<f64>) = idx.into_iter().zip(weights).filter(|(_, w)| *w > 0.0).unzip();
        Ok((idx, weights))
    }

    fn distinct_states(&self, idx: &[usize]) -> usize {
        let mut rows: Vec<&[f64]> = idx.iter().map(|&n| self.state(n)).collect();
        rows.sort_by(|a, b| {
            a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        });
        rows.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        rows.len()
    }
}

/// Quadratic, linear, and constant terms.
pub fn feature_count(dim: usize, mode: TwistMode) -> usize {
    let quadratic = match mode {
        TwistMode::Diagonal => dim,
        TwistMode::Full => dim * (dim + 1) / 2,
    };
    quadratic + dim + 1
}

/// The regression's default ESS floor, twice the number of features.
pub fn default_target_ess(dim: usize, mode: TwistMode) -> f64 {
    2.0 * feature_count(dim, mode) as f64
}

fn quadratic_features(x: &[f64], mode: TwistMode, out: &mut Vec<f64>) {
    match mode {
        TwistMode::Diagonal => out.extend(x.iter().map(|v| v * v)),
        TwistMode::Full => {
            for i in 0..x.len() {
                for j in i..x.len() {
                    out.push(x[i] * x[j]);
                }
            }
        }
    }
}

/// Weighted least squares of `y` on the columns of `features` (row-major `n x q`)
/// plus an intercept. Returns `(intercept, coefficients)`.
fn solve_wls(features: &[f64], q: usize, y: &[f64], w: &[f64], ridge: f64) -> Result<(f64, Vec<f64>)> {
    let n = y.len();
    let y_mean: f64 = y.iter().zip(w).map(|(y, w)| y * w).sum();
    if q == 0 {
        return Ok((y_mean, Vec::new()));
    }
    let mut mean = vec![0.0; q];
    for i in 0..n {
        for k in 0..q {
            mean[k] += w[i] * features[i * q + k];
        }
    }
    let mut sd = vec![0.0; q];
    for i in 0..n {
        for k in 0..q {
            let c = features[i * q + k] - mean[k];
            sd[k] += w[i] * c * c;
        }
    }
    for k in 0..q {
        sd[k] = sd[k].sqrt();
        if !(sd[k] > 1e-13 * (1.0 + mean[k].abs())) {
            return Err(SmcError::SingularDesign { t: 0, reason: format!("feature {k} is constant over the cloud") });
        }
    }
    let mut gram = DMatrix::<f64>::zeros(q, q);
    let mut rhs = DVector::<f64>::zeros(q);
    let mut z = vec![0.0; q];
    for i in 0..n {
        for k in 0..q {
            z[k] = (features[i * q + k] - mean[k]) / sd[k];
        }
        let dy = w[i] * (y[i] - y_mean);
        for k in 0..q {
            rhs[k] += z[k] * dy;
            let wz = w[i] * z[k];
            for l in 0..=k {
                gram[(k, l)] += wz * z[l];
            }
        }
    }
    for k in 0..q {
        for l in 0..k {
            gram[(l, k)] = gram[(k, l)];
        }
    }
    let min_eig = SymmetricEigen::new(gram.clone()).eigenvalues.min();
    if !(min_eig > MIN_CORRELATION_EIGENVALUE) {
        return Err(SmcError::SingularDesign { t: 0, reason: format!("collinear features (eigenvalue {min_eig:e})") });
    }
    let lambda = ridge * gram.trace() / q as f64;
    let mut regularized = gram.clone();
    for k in 0..q {
        regularized[(k, k)] += lambda;
    }
    let chol = regularized
        .cholesky()
        .ok_or_else(|| SmcError::SingularDesign { t: 0, reason: "normal matrix is not positive definite".into() })?;
    // iterated Tikhonov: removes the ridge bias while keeping the regularized factorization
    let mut theta = chol.solve(&rhs);
    for _ in 0..REFINEMENT_STEPS {
        let resid = &rhs - &gram * &theta;
        theta += chol.solve(&resid);
    }
    let coefs: Vec<f64> = (0..q).map(|k| theta[k] / sd[k]).collect();
    let intercept = y_mean - coefs.iter().zip(&mean).map(|(c, m)| c * m).sum::<f64>();
    if !intercept.is_finite() || coefs.iter().any(|c| !c.is_finite()) {
        return Err(SmcError::SingularDesign { t: 0, reason: "non-finite coefficients".into() });
    }
    Ok((intercept, coefs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub twist: LogQuadraticTwist,
    /// Whether the PSD projection changed the quadratic term.
    pub projected: bool,
    pub points_used: usize,
}

pub fn fit_log_quadratic(problem: &RegressionProblem<'_>) -> Result<RegressionFit> {
    let d = problem.dim;
    let mode = problem.mode;
    let p = feature_count(d, mode);
    let (idx, w) = problem.usable()?;
    let distinct = problem.distinct_states(&idx);
    if distinct < p {
        return Err(SmcError::SingularDesign {
            t: 0,
            reason: format!("{distinct} distinct usable states for {p} features"),
        });
    }
    let q = p - 1;
    let mut features = Vec::with_capacity(idx.len() * q);
    let mut y = Vec::with_capacity(idx.len());
    for &n in &idx {
        let x = problem.state(n);
        quadratic_features(x, mode, &mut features);
        features.extend_from_slice(x);
        y.push(problem.log_targets[n]);
    }
    let (intercept, coefs) = solve_wls(&features, q, &y, &w, problem.ridge)?;

    let mut a = DMatrix::zeros(d, d);
    let mut k = 0;
    match mode {
        TwistMode::Diagonal => {
            for i in 0..d {
                a[(i, i)] = -2.0 * coefs[k];
                k += 1;
            }
        }
        TwistMode::Full => {
            for i in 0..d {
                for j in i..d {
                    if i == j {
                        a[(i, i)] = -2.0 * coefs[k];
                    } else {
                        a[(i, j)] = -coefs[k];
                        a[(j, i)] = -coefs[k];
                    }
                    k += 1;
                }
            }
        }
    }
    let b = DVector::from_iterator(d, coefs[k..].iter().map(|v| -v));
    let mut twist = LogQuadraticTwist { a, b, c: -2.0 * intercept };

    let mut projected = false;
    if let Some(proj) = problem.projection {
        let floored = psd_floor_mode(&twist.a, proj.cov, proj.epsilon, mode);
        if floored != twist.a {
            projected = true;
            twist.a = floored;
            if problem.refit_after_projection {
                let mut linear = Vec::with_capacity(idx.len() * d);
                let mut resid = Vec::with_capacity(idx.len());
                let a_fixed = LogQuadraticTwist { a: twist.a.clone(), b: DVector::zeros(d), c: 0.0 };
                for (j, &n) in idx.iter().enumerate() {
                    let x = problem.state(n);
                    linear.extend_from_slice(x);
                    resid.push(y[j] - a_fixed.log_eval(x));
                }
                let (intercept, coefs) = solve_wls(&linear, d, &resid, &w, problem.ridge)?;
                twist.b = DVector::from_iterator(d, coefs.iter().map(|v| -v));
                twist.c = -2.0 * intercept;
            }
        }
    }
    Ok(RegressionFit { twist, projected, points_used: idx.len() })
}

/// The weighted squared error minimized by [`fit_log_quadratic`], with weights normalized.
pub fn weighted_objective(problem: &RegressionProblem<'_>, twist: &LogQuadraticTwist) -> Result<f64> {
    let (idx, w) = problem.usable()?;
    Ok(idx
        .iter()
        .zip(&w)
        .map(|(&n, w)| {
            let r = twist.log_eval(problem.state(n)) - problem.log_targets[n];
            w * r * r
        })
        .sum())
}
