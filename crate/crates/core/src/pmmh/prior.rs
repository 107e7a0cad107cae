use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, InverseGamma, Triangular, Uniform};

use super::transform::Constraint;
use super::PmmhError;

/// Prior on one parameter coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Prior {
    /// Improper flat density, log-density 0 everywhere.
    Flat,
    Uniform { lo: f64, hi: f64 },
    InverseGamma { shape: f64, scale: f64 },
    Triangular { lo: f64, hi: f64, mode: f64 },
}

/// `(shape, scale)` of the inverse gamma with the given mean and variance.
pub fn inverse_gamma_from_moments(mean: f64, variance: f64) -> (f64, f64) {
    let shape = 2.0 + mean * mean / variance;
    (shape, mean * (shape - 1.0))
}

impl Prior {
    pub fn is_proper(&self) -> bool {
        !matches!(self, Prior::Flat)
    }

    pub fn log_density(&self, theta: f64) -> f64 {
        let ln = |p: f64| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
        match *self {
            Prior::Flat => {
                if theta.is_finite() {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Prior::Uniform { lo, hi } => {
                if theta > lo && theta < hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Prior::InverseGamma { shape, scale } => match InverseGamma::new(shape, scale) {
                Ok(d) if theta > 0.0 => d.ln_pdf(theta),
                _ => f64::NEG_INFINITY,
            },
            Prior::Triangular { lo, hi, mode } => match Triangular::new(lo, hi, mode) {
                Ok(d) if theta > lo && theta < hi => ln(d.pdf(theta)),
                _ => f64::NEG_INFINITY,
            },
        }
    }

    /// Direct draw by inversion; `None` for the improper prior.
    pub fn sample<G: Rng + ?Sized>(&self, rng: &mut G) -> Option<f64> {
        let u: f64 = rng.random();
        let u = u.max(f64::MIN_POSITIVE);
        match *self {
            Prior::Flat => None,
            Prior::Uniform { lo, hi } => Uniform::new(lo, hi).ok().map(|d| d.inverse_cdf(u)),
            Prior::InverseGamma { shape, scale } => InverseGamma::new(shape, scale).ok().map(|d| d.inverse_cdf(u)),
            Prior::Triangular { lo, hi, mode } => Triangular::new(lo, hi, mode).ok().map(|d| d.inverse_cdf(u)),
        }
    }

    /// Constraint whose interior is the support.
    pub fn constraint(&self) -> Result<Constraint, PmmhError> {
        match *self {
            Prior::Flat => Ok(Constraint::Real),
            Prior::Uniform { lo: 0.0, hi: 1.0 } => Ok(Constraint::UnitInterval),
            Prior::InverseGamma { .. } => Ok(Constraint::Positive),
            Prior::Triangular { lo: -1.0, hi: 1.0, .. } => Ok(Constraint::Correlation),
            other => Err(PmmhError::Config(format!("no transform matches the support of {other:?}"))),
        }
    }
}

/// Independent per-coordinate priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub coords: Vec<Prior>,
}

impl PriorSpec {
    pub fn new(coords: Vec<Prior>) -> Self {
        PriorSpec { coords }
    }

    /// Stochastic volatility priors in the `(m, alpha, sigma2, rho)` layout:
    /// flat on `m`, uniform on `alpha`, inverse gamma with mean 0.2 and
    /// variance 1 on `sigma2`, symmetric triangular on `rho`.
    pub fn msv(d: usize) -> Self {
        let (shape, scale) = inverse_gamma_from_moments(0.2, 1.0);
        let mut coords = vec![Prior::Flat; d];
        coords.extend(std::iter::repeat_n(Prior::Uniform { lo: 0.0, hi: 1.0 }, d));
        coords.extend(std::iter::repeat_n(Prior::InverseGamma { shape, scale }, d));
        coords.extend(std::iter::repeat_n(Prior::Triangular { lo: -1.0, hi: 1.0, mode: 0.0 }, d.saturating_sub(1)));
        PriorSpec { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        self.coords.iter().zip(theta).map(|(p, t)| p.log_density(*t)).sum()
    }

    /// The transform matching each coordinate's support.
    pub fn transform(&self) -> Result<super::ParamTransform, PmmhError> {
        Ok(super::ParamTransform::new(self.coords.iter().map(Prior::constraint).collect::<Result<_, _>>()?))
    }

    pub fn sample<G: Rng + ?Sized>(&self, rng: &mut G) -> Option<Vec<f64>> {
        self.coords.iter().map(|p| p.sample(rng)).collect()
    }
}
