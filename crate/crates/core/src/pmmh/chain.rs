use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ParamTransform, PmmhError, PriorSpec};
use crate::rng::RngStreams;

/// An estimator of `log Z(theta)`; randomness must come from `streams` only.
pub trait LogLikelihood: Sync {
    fn log_likelihood(&self, theta: &[f64], streams: &RngStreams) -> crate::Result<f64>;
}

impl<F> LogLikelihood for F
where
    F: Fn(&[f64], &RngStreams) -> crate::Result<f64> + Sync,
{
    fn log_likelihood(&self, theta: &[f64], streams: &RngStreams) -> crate::Result<f64> {
        self(theta, streams)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PmmhConfig {
    pub steps: usize,
    /// Random-walk standard deviations on the transformed scale; zeros freeze a coordinate.
    pub proposal_sd: Vec<f64>,
    /// Variance windows are evaluated every this many steps (0 disables them).
    pub window_every: usize,
    pub window_replicates: usize,
    /// Checkpoint interval in steps when a checkpoint path is given.
    pub checkpoint_every: usize,
}

impl Default for PmmhConfig {
    fn default() -> Self {
        PmmhConfig { steps: 2000, proposal_sd: Vec::new(), window_every: 100, window_replicates: 10, checkpoint_every: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStep {
    pub step: usize,
    pub theta: Vec<f64>,
    pub z: Vec<f64>,
    pub log_prior: f64,
    pub log_jacobian: f64,
    /// Estimate held by the chain after this step.
    pub log_z: f64,
    pub accepted: bool,
    /// Error raised by the estimator at this step's proposal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceWindow {
    pub step: usize,
    pub theta: Vec<f64>,
    /// Unbiased sample variance of the finite replicates; `None` with fewer than two.
    pub variance: Option<f64>,
    pub replicates: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmmhChain {
    pub config: PmmhConfig,
    pub seed_key: String,
    pub states: Vec<ChainStep>,
    pub windows: Vec<VarianceWindow>,
    pub failed_proposals: usize,
}

impl PmmhChain {
    pub fn current(&self) -> &ChainStep {
        self.states.last().expect("a chain always holds its initial state")
    }

    pub fn steps_done(&self) -> usize {
        self.current().step
    }

    /// Fraction of accepted moves after the initial state.
    pub fn acceptance_rate(&self) -> f64 {
        let moves = self.states.len().saturating_sub(1);
        if moves == 0 {
            return 0.0;
        }
        self.states[1..].iter().filter(|s| s.accepted).count() as f64 / moves as f64
    }

    /// One JSON object per step with keys `step`, `theta`, `logZ`, `accepted`.
    pub fn chain_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.states {
            let line = serde_json::json!({ "step": s.step, "theta": s.theta, "logZ": s.log_z, "accepted": s.accepted });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    pub fn write_checkpoint(&self, path: &Path) -> Result<(), PmmhError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(self)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn read_checkpoint(path: &Path) -> Result<Self, PmmhError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

mod purpose {
    pub const INITIAL: u64 = 1;
    pub const PROPOSAL: u64 = 2;
    pub const LIKELIHOOD: u64 = 3;
    pub const WINDOW: u64 = 4;
}

/// Sample variance of `R` independent estimates at a fixed `theta`.
pub fn variance_window<L: LogLikelihood + ?Sized>(
    likelihood: &L,
    theta: &[f64],
    replicates: usize,
    streams: &RngStreams,
) -> Result<VarianceWindow, PmmhError> {
    if replicates < 2 {
        return Err(PmmhError::Config("variance windows need at least two replicates".into()));
    }
    let estimates: Vec<Option<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| likelihood.log_likelihood(theta, &streams.derive(r as u64)).ok().filter(|v| v.is_finite()))
        .collect();
    let finite: Vec<f64> = estimates.iter().flatten().copied().collect();
    let variance = (finite.len() >= 2).then(|| {
        // shifted by the first value, so identical estimates give exactly zero
        let n = finite.len() as f64;
        let (s1, s2) = finite.iter().fold((0.0, 0.0), |(a, b), v| {
            let d = v - finite[0];
            (a + d, b + d * d)
        });
        ((s2 - s1 * s1 / n) / (n - 1.0)).max(0.0)
    });
    Ok(VarianceWindow { step: 0, theta: theta.to_vec(), variance, replicates, failed: replicates - finite.len() })
}

/// Everything a chain needs besides its state. Step `s` draws its proposal and
/// its estimate from sub-streams keyed by `s`, so a resumed chain is
/// bit-identical to an uninterrupted one.
pub struct Sampler<'a, L: LogLikelihood + ?Sized> {
    pub likelihood: &'a L,
    pub prior: &'a PriorSpec,
    pub transform: &'a ParamTransform,
    pub config: &'a PmmhConfig,
    pub streams: RngStreams,
}

impl<L: LogLikelihood + ?Sized> Sampler<'_, L> {
    fn check(&self) -> Result<(), PmmhError> {
        let d = self.transform.dim();
        if self.prior.dim() != d || self.config.proposal_sd.len() != d {
            return Err(PmmhError::Config(format!(
                "prior has {} coordinates, transform {d}, proposal {}",
                self.prior.dim(),
                self.config.proposal_sd.len()
            )));
        }
        if self.config.proposal_sd.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(PmmhError::Config("proposal standard deviations must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Chain holding only the initial state.
    pub fn initialize(&self, theta0: &[f64]) -> Result<PmmhChain, PmmhError> {
        self.check()?;
        let log_prior = self.prior.log_density(theta0);
        if !self.transform.contains(theta0) || log_prior == f64::NEG_INFINITY {
            return Err(PmmhError::OutsideSupport(theta0.to_vec()));
        }
        // stored states always satisfy theta = inverse(z) exactly
        let z = self.transform.forward(theta0);
        let theta = self.transform.inverse(&z);
        let log_prior = self.prior.log_density(&theta);
        let log_z = self
            .likelihood
            .log_likelihood(&theta, &self.streams.derive(purpose::INITIAL))
            .map_err(|e| PmmhError::InitialEstimate(e.to_string()))?;
        if !log_z.is_finite() {
            return Err(PmmhError::InitialEstimate(format!("estimate is {log_z}")));
        }
        let state = ChainStep {
            step: 0,
            theta,
            log_jacobian: self.transform.log_jacobian(&z),
            z,
            log_prior,
            log_z,
            accepted: true,
            failure: None,
        };
        Ok(PmmhChain {
            config: self.config.clone(),
            seed_key: self.streams.key_hex(),
            states: vec![state],
            windows: Vec::new(),
            failed_proposals: 0,
        })
    }

    fn propose(&self, chain: &mut PmmhChain, step: usize) {
        let current = chain.current().clone();
        let mut rng = self.streams.derive(purpose::PROPOSAL).stream(step as u64);
        let z: Vec<f64> = current
            .z
            .iter()
            .zip(&self.config.proposal_sd)
            .map(|(v, sd)| v + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let u: f64 = rng.random();
        let theta = self.transform.inverse(&z);
        let log_prior = self.prior.log_density(&theta);
        let log_jacobian = self.transform.log_jacobian(&z);
        let mut failure = None;
        let log_z = if log_prior == f64::NEG_INFINITY || !self.transform.contains(&theta) {
            f64::NEG_INFINITY
        } else {
            match self.likelihood.log_likelihood(&theta, &self.streams.derive2(purpose::LIKELIHOOD, step as u64)) {
                Ok(v) if !v.is_nan() && v != f64::INFINITY => v,
                Ok(v) => {
                    failure = Some(format!("estimate is {v}"));
                    f64::NEG_INFINITY
                }
                Err(e) => {
                    failure = Some(e.to_string());
                    f64::NEG_INFINITY
                }
            }
        };
        if failure.is_some() {
            chain.failed_proposals += 1;
        }
        let log_ratio =
            log_z - current.log_z + log_prior - current.log_prior + log_jacobian - current.log_jacobian;
        let next = if log_z > f64::NEG_INFINITY && u.ln() < log_ratio {
            ChainStep { step, theta, z, log_prior, log_jacobian, log_z, accepted: true, failure }
        } else {
            ChainStep { step, accepted: false, failure, ..current }
        };
        chain.states.push(next);
    }

    /// Run the chain until it has `steps` moves, evaluating variance windows
    /// on schedule and writing a checkpoint every `checkpoint_every` steps.
    pub fn extend(&self, chain: &mut PmmhChain, steps: usize, checkpoint: Option<&Path>) -> Result<(), PmmhError> {
        self.check()?;
        if chain.seed_key != self.streams.key_hex() || chain.config != *self.config {
            return Err(PmmhError::CheckpointMismatch("seed or configuration differs".into()));
        }
        let every = self.config.window_every;
        for step in chain.steps_done() + 1..=steps {
            self.propose(chain, step);
            if every > 0 && step % every == 0 {
                let theta = chain.current().theta.clone();
                let streams = self.streams.derive2(purpose::WINDOW, step as u64);
                let mut window = variance_window(self.likelihood, &theta, self.config.window_replicates, &streams)?;
                window.step = step;
                chain.windows.push(window);
            }
            if let Some(path) = checkpoint {
                if self.config.checkpoint_every > 0 && step % self.config.checkpoint_every == 0 {
                    chain.write_checkpoint(path)?;
                }
            }
        }
        if let Some(path) = checkpoint {
            chain.write_checkpoint(path)?;
        }
        Ok(())
    }

    /// Full run; resumes from `checkpoint` when that file already exists.
    pub fn run(&self, theta0: &[f64], checkpoint: Option<&Path>) -> Result<PmmhChain, PmmhError> {
        let mut chain = match checkpoint.filter(|p| p.exists()) {
            Some(path) => PmmhChain::read_checkpoint(path)?,
            None => self.initialize(theta0)?,
        };
        self.extend(&mut chain, self.config.steps, checkpoint)?;
        Ok(chain)
    }
}

/// Run a chain of `config.steps` moves from `theta0`.
pub fn pmmh_run<L: LogLikelihood + ?Sized>(
    likelihood: &L,
    prior: &PriorSpec,
    transform: &ParamTransform,
    theta0: &[f64],
    config: &PmmhConfig,
    streams: &RngStreams,
) -> Result<PmmhChain, PmmhError> {
    Sampler { likelihood, prior, transform, config, streams: streams.clone() }.run(theta0, None)
}

/// Pick the multiplier of `config.proposal_sd` whose short pilot chain has an
/// acceptance rate closest to `target`. Returns `(multiplier, acceptance)`.
pub fn pilot_scale<L: LogLikelihood + ?Sized>(
    likelihood: &L,
    prior: &PriorSpec,
    transform: &ParamTransform,
    theta0: &[f64],
    config: &PmmhConfig,
    multipliers: &[f64],
    target: f64,
    streams: &RngStreams,
) -> Result<(f64, f64), PmmhError> {
    let mut best: Option<(f64, f64)> = None;
    for (k, &mult) in multipliers.iter().enumerate() {
        let pilot = PmmhConfig {
            proposal_sd: config.proposal_sd.iter().map(|s| s * mult).collect(),
            window_every: 0,
            ..config.clone()
        };
        let chain = pmmh_run(likelihood, prior, transform, theta0, &pilot, &streams.derive(k as u64))?;
        let rate = chain.acceptance_rate();
        if best.is_none_or(|(_, r)| (rate - target).abs() < (r - target).abs()) {
            best = Some((mult, rate));
        }
    }
    best.ok_or_else(|| PmmhError::Config("no pilot multipliers given".into()))
}
