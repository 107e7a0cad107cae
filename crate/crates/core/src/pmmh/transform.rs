use serde::{Deserialize, Serialize};

/// Coordinate-wise bijection from a constrained parameter to the real line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    Real,
    /// `(0, 1)`, through the logit.
    UnitInterval,
    /// `(0, inf)`, through the log.
    Positive,
    /// `(-1, 1)`, through `z = 2 atanh(theta)`, a rescaled logit.
    Correlation,
}

impl Constraint {
    pub fn contains(&self, theta: f64) -> bool {
        match self {
            Constraint::Real => theta.is_finite(),
            Constraint::UnitInterval => theta > 0.0 && theta < 1.0,
            Constraint::Positive => theta > 0.0 && theta.is_finite(),
            Constraint::Correlation => theta > -1.0 && theta < 1.0,
        }
    }

    /// `theta -> z`.
    pub fn forward(&self, theta: f64) -> f64 {
        match self {
            Constraint::Real => theta,
            Constraint::UnitInterval => (theta / (1.0 - theta)).ln(),
            Constraint::Positive => theta.ln(),
            Constraint::Correlation => 2.0 * theta.atanh(),
        }
    }

    /// `z -> theta`.
    pub fn inverse(&self, z: f64) -> f64 {
        match self {
            Constraint::Real => z,
            Constraint::UnitInterval => 1.0 / (1.0 + (-z).exp()),
            Constraint::Positive => z.exp(),
            Constraint::Correlation => (0.5 * z).tanh(),
        }
    }

    /// `log |d theta / d z|` at `z`.
    pub fn log_jacobian(&self, z: f64) -> f64 {
        match self {
            Constraint::Real => 0.0,
            // log(s(z) (1 - s(z))) = -|z| - 2 log(1 + e^-|z|)
            Constraint::UnitInterval => -z.abs() - 2.0 * (-z.abs()).exp().ln_1p(),
            Constraint::Positive => z,
            // (1 - tanh^2(z/2)) / 2 = 2 / (e^{z/2} + e^{-z/2})^2
            Constraint::Correlation => {
                let h = 0.5 * z.abs();
                std::f64::consts::LN_2 - 2.0 * h - 2.0 * (-2.0 * h).exp().ln_1p()
            }
        }
    }
}

/// Product transform over a parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTransform {
    pub constraints: Vec<Constraint>,
}

impl ParamTransform {
    pub fn new(constraints: Vec<Constraint>) -> Self {
        ParamTransform { constraints }
    }

    pub fn dim(&self) -> usize {
        self.constraints.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim() && self.constraints.iter().zip(theta).all(|(c, t)| c.contains(*t))
    }

    pub fn forward(&self, theta: &[f64]) -> Vec<f64> {
        self.constraints.iter().zip(theta).map(|(c, t)| c.forward(*t)).collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        self.constraints.iter().zip(z).map(|(c, v)| c.inverse(*v)).collect()
    }

    /// Log-Jacobian of the inverse map at `z`.
    pub fn log_jacobian(&self, z: &[f64]) -> f64 {
        self.constraints.iter().zip(z).map(|(c, v)| c.log_jacobian(*v)).sum()
    }
}
