use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmcError};

use super::gaussian::TwistedKernel;
use super::quadratic::{LogQuadraticTwist, TwistMode};
use super::reference::GaussianReference;

/// One twist per time step for the proposal, plus the twists whose Gaussian
/// integrals define the auxiliary weights.
///
/// The auxiliary weights are `log eta_{t-1}(x) = log M_t(psi_t)(x)` for
/// `t = 1..T`, with `psi = auxiliary` when present and `psi = twists`
/// otherwise, and `eta_T = terminal` which must be the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistPolicy {
    pub mode: TwistMode,
    pub dim: usize,
    pub twists: Vec<LogQuadraticTwist>,
    pub auxiliary: Option<Vec<LogQuadraticTwist>>,
    pub terminal: LogQuadraticTwist,
}

impl TwistPolicy {
    pub fn identity(horizon: usize, dim: usize, mode: TwistMode) -> Self {
        TwistPolicy {
            mode,
            dim,
            twists: vec![LogQuadraticTwist::identity(dim); horizon],
            auxiliary: None,
            terminal: LogQuadraticTwist::identity(dim),
        }
    }

    pub fn linked(twists: Vec<LogQuadraticTwist>, mode: TwistMode) -> Self {
        let dim = twists.first().map_or(0, LogQuadraticTwist::dim);
        TwistPolicy { mode, dim, twists, auxiliary: None, terminal: LogQuadraticTwist::identity(dim) }
    }

    pub fn horizon(&self) -> usize {
        self.twists.len()
    }

    pub fn is_identity(&self) -> bool {
        self.twists.iter().all(LogQuadraticTwist::is_identity)
            && self.auxiliary.as_ref().is_none_or(|aux| aux.iter().all(LogQuadraticTwist::is_identity))
    }

    /// Twists defining the auxiliary weights.
    pub fn auxiliary_twists(&self) -> &[LogQuadraticTwist] {
        self.auxiliary.as_deref().unwrap_or(&self.twists)
    }

    pub fn validate_structure(&self) -> Result<()> {
        if !self.terminal.is_identity() {
            return Err(SmcError::InvalidPolicy("terminal auxiliary weight must be identically one".into()));
        }
        if let Some(aux) = &self.auxiliary {
            if aux.len() != self.twists.len() {
                return Err(SmcError::InvalidPolicy(format!(
                    "{} auxiliary twists for {} time steps",
                    aux.len(),
                    self.twists.len()
                )));
            }
        }
        for (t, tw) in self.twists.iter().chain(self.auxiliary.iter().flatten()).enumerate() {
            if tw.dim() != self.dim {
                return Err(SmcError::DimensionMismatch { expected: self.dim, got: tw.dim() }.at_time(t + 1));
            }
            if self.mode == TwistMode::Diagonal && !tw.is_diagonal() {
                return Err(SmcError::InvalidPolicy("diagonal policy holds a non-diagonal twist".into()));
            }
        }
        Ok(())
    }

    /// `log eta_0` and `log eta_t` as log-quadratic functions of `x_t` for
    /// `t = 1..T`. Requires affine transition means.
    pub fn induced_log_eta<R: GaussianReference + ?Sized>(&self, reference: &R) -> Result<InducedEta> {
        let horizon = self.horizon();
        let d = self.dim;
        let aux = self.auxiliary_twists();
        let mut m1 = vec![0.0; d];
        reference.kernel_mean(1, None, &mut m1);
        let first = TwistedKernel::new(&reference.kernel_cov(1), aux[0].clone()).map_err(|e| e.at_time(1))?;
        let initial = first.log_normalizer(&m1);
        let mut per_time = Vec::with_capacity(horizon);
        for t in 1..horizon {
            let kernel =
                TwistedKernel::new(&reference.kernel_cov(t + 1), aux[t].clone()).map_err(|e| e.at_time(t + 1))?;
            let (f_mat, f_vec) = reference
                .affine_mean(t + 1)
                .ok_or_else(|| SmcError::InvalidModel("auxiliary weights need affine transition means".into()))?;
            per_time.push(kernel.log_normalizer_twist().pullback_affine(&f_mat, &f_vec));
        }
        per_time.push(self.terminal.clone());
        Ok(InducedEta { initial, per_time })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(PolicyRecord::from(self)).expect("policy serializes")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&PolicyRecord::from(self)).expect("policy serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let record: PolicyRecord =
            serde_json::from_str(text).map_err(|e| SmcError::InvalidPolicy(format!("policy json: {e}")))?;
        record.into_policy()
    }
}

/// Auxiliary weights of a policy in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedEta {
    /// `log eta_0`, a constant.
    pub initial: f64,
    /// `log eta_t` for `t = 1..T`; the last entry is the identity.
    pub per_time: Vec<LogQuadraticTwist>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum QuadraticRecord {
    Diagonal(Vec<f64>),
    Dense(Vec<Vec<f64>>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TwistRecord {
    a: QuadraticRecord,
    b: Vec<f64>,
    c: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyRecord {
    mode: TwistMode,
    dim: usize,
    twists: Vec<TwistRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    auxiliary: Option<Vec<TwistRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    terminal: Option<TwistRecord>,
}

impl TwistRecord {
    fn from_twist(tw: &LogQuadraticTwist, mode: TwistMode) -> Self {
        let d = tw.dim();
        let a = match mode {
            TwistMode::Diagonal => QuadraticRecord::Diagonal(tw.a.diagonal().iter().copied().collect()),
            TwistMode::Full => QuadraticRecord::Dense((0..d).map(|i| tw.a.row(i).iter().copied().collect()).collect()),
        };
        TwistRecord { a, b: tw.b.iter().copied().collect(), c: tw.c }
    }

    fn into_twist(self, dim: usize) -> Result<LogQuadraticTwist> {
        let a = match self.a {
            QuadraticRecord::Diagonal(v) => {
                if v.len() != dim {
                    return Err(SmcError::DimensionMismatch { expected: dim, got: v.len() });
                }
                DMatrix::from_diagonal(&DVector::from_vec(v))
            }
            QuadraticRecord::Dense(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(SmcError::InvalidPolicy("dense quadratic term has the wrong shape".into()));
                }
                let m = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
                if (0..dim).any(|i| (0..i).any(|j| m[(i, j)] != m[(j, i)])) {
                    return Err(SmcError::InvalidPolicy("quadratic term is not symmetric".into()));
                }
                m
            }
        };
        if self.b.len() != dim {
            return Err(SmcError::DimensionMismatch { expected: dim, got: self.b.len() });
        }
        Ok(LogQuadraticTwist { a, b: DVector::from_vec(self.b), c: self.c })
    }
}

impl From<&TwistPolicy> for PolicyRecord {
    fn from(p: &TwistPolicy) -> Self {
        let conv = |v: &[LogQuadraticTwist]| v.iter().map(|t| TwistRecord::from_twist(t, p.mode)).collect();
        PolicyRecord {
            mode: p.mode,
            dim: p.dim,
            twists: conv(&p.twists),
            auxiliary: p.auxiliary.as_deref().map(conv),
            terminal: (!p.terminal.is_identity()).then(|| TwistRecord::from_twist(&p.terminal, p.mode)),
        }
    }
}

impl PolicyRecord {
    fn into_policy(self) -> Result<TwistPolicy> {
        let dim = self.dim;
        let conv = |v: Vec<TwistRecord>| v.into_iter().map(|r| r.into_twist(dim)).collect::<Result<Vec<_>>>();
        let policy = TwistPolicy {
            mode: self.mode,
            dim,
            twists: conv(self.twists)?,
            auxiliary: self.auxiliary.map(conv).transpose()?,
            terminal: match self.terminal {
                Some(r) => r.into_twist(dim)?,
                None => LogQuadraticTwist::identity(dim),
            },
        };
        policy.validate_structure()?;
        Ok(policy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn awkward(x: f64) -> f64 {
        x * std::f64::consts::PI / 7.0 + 1e-17
    }

    #[test]
    fn json_round_trip_is_bit_stable() {
        for mode in [TwistMode::Diagonal, TwistMode::Full] {
            let d = 2;
            let twists: Vec<_> = (0..3)
                .map(|k| {
                    let k = k as f64;
                    let off = if mode == TwistMode::Full { awkward(k + 0.5) } else { 0.0 };
                    LogQuadraticTwist::new(
                        DMatrix::from_row_slice(2, 2, &[awkward(k + 1.0), off, off, awkward(k + 2.0)]),
                        DVector::from_vec(vec![awkward(-k), awkward(k * 3.0)]),
                        awkward(k - 4.0),
                    )
                    .unwrap()
                })
                .collect();
            let mut policy = TwistPolicy::linked(twists.clone(), mode);
            policy.auxiliary = Some(twists.into_iter().rev().collect());
            assert_eq!(policy.dim, d);
            let text = policy.to_json_string();
            let back = TwistPolicy::from_json_str(&text).unwrap();
            assert_eq!(back, policy);
            assert_eq!(back.to_json_string(), text);
        }
    }

    #[test]
    fn non_unit_terminal_weight_is_rejected() {
        let mut policy = TwistPolicy::identity(3, 1, TwistMode::Diagonal);
        policy.terminal.c = 1.0;
        assert!(matches!(policy.validate_structure(), Err(SmcError::InvalidPolicy(_))));
        let text = policy.to_json_string();
        assert!(TwistPolicy::from_json_str(&text).is_err());
    }
}
