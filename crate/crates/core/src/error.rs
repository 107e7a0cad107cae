use thiserror::Error;

/// Errors raised by the filtering, twisting and training routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmcError {
    #[error("all particle weights are zero at time {t}")]
    DegenerateWeights { t: usize },

    #[error("non-finite particle weight (NaN or +inf) at time {t}")]
    NonFiniteWeights { t: usize },

    #[error("invalid twist at time {t}: {reason}")]
    InvalidTwist { t: usize, reason: String },

    #[error("singular regression design at time {t}: {reason}")]
    SingularDesign { t: usize, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl SmcError {
    /// Short machine-readable tag used in failure logs and result records.
    pub fn kind(&self) -> &'static str {
        match self {
            SmcError::DegenerateWeights { .. } => "degenerate_weights",
            SmcError::NonFiniteWeights { .. } => "non_finite_weights",
            SmcError::InvalidTwist { .. } => "invalid_twist",
            SmcError::SingularDesign { .. } => "singular_design",
            SmcError::DimensionMismatch { .. } => "dimension_mismatch",
            SmcError::InvalidModel(_) => "invalid_model",
            SmcError::InvalidPolicy(_) => "invalid_policy",
            SmcError::Numerical(_) => "numerical",
        }
    }

    /// Attach a time index to errors raised by time-agnostic helpers.
    pub fn at_time(self, time: usize) -> Self {
        match self {
            SmcError::DegenerateWeights { .. } => SmcError::DegenerateWeights { t: time },
            SmcError::NonFiniteWeights { .. } => SmcError::NonFiniteWeights { t: time },
            SmcError::InvalidTwist { reason, .. } => SmcError::InvalidTwist { t: time, reason },
            SmcError::SingularDesign { reason, .. } => SmcError::SingularDesign { t: time, reason },
            other => other,
        }
    }
}

pub type Result<T, E = SmcError> = std::result::Result<T, E>;
