use serde::Serialize;

use crate::fk::SmcTrace;
use crate::twist::TwistPolicy;

use super::Scheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    SingularDesign,
    InvalidTwist,
    DegenerateWeights,
    NonFiniteWeights,
    /// Training weights too concentrated for a reliable fit.
    DegenerateTrainingCloud,
    Numerical,
}

impl FailureKind {
    pub fn from_error(err: &crate::SmcError) -> Self {
        use crate::SmcError as E;
        match err {
            E::SingularDesign { .. } => FailureKind::SingularDesign,
            E::InvalidTwist { .. } => FailureKind::InvalidTwist,
            E::DegenerateWeights { .. } => FailureKind::DegenerateWeights,
            E::NonFiniteWeights { .. } => FailureKind::NonFiniteWeights,
            _ => FailureKind::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Recovery {
    KeptPreviousTwist,
    ContinuedWithCloud,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureEvent {
    /// Iteration whose twist was being fitted.
    pub iteration: usize,
    pub t: usize,
    pub kind: FailureKind,
    pub recovery: Recovery,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationSummary {
    pub iteration: usize,
    #[serde(rename = "logZ")]
    pub log_z: f64,
    pub ess_min: f64,
    pub weight_variance: f64,
    pub failures: usize,
    pub sample_count: u64,
    pub regressions: usize,
    pub tempered: usize,
    pub projected: usize,
}

/// Output of a training scheme. `policies[0]` is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRun {
    pub scheme: Scheme,
    pub policies: Vec<TwistPolicy>,
    /// Sampling pass of each iteration; empty for the streaming schemes.
    pub traces: Vec<SmcTrace>,
    pub iterations: Vec<IterationSummary>,
    pub failures: Vec<FailureEvent>,
    /// Largest number of distinct time slices held at once (streaming schemes).
    pub max_retained_slices: Option<usize>,
}

impl TrainingRun {
    pub fn final_policy(&self) -> &TwistPolicy {
        self.policies.last().expect("at least the identity policy")
    }

    pub fn final_log_z(&self) -> f64 {
        self.iterations.last().map_or(f64::NAN, |s| s.log_z)
    }

    pub fn total_samples(&self) -> u64 {
        self.iterations.iter().map(|s| s.sample_count).sum()
    }

    /// One JSON object per iteration.
    pub fn summary_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.iterations {
            let v = serde_json::json!({
                "iteration": s.iteration,
                "logZ": s.log_z,
                "ess_min": s.ess_min,
                "weight_variance": s.weight_variance,
                "failures": s.failures,
                "sample_count": s.sample_count,
            });
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }
}
