//! Feynman–Kac models and the standard SMC sampler.
//!
//! A [`FeynmanKacModel`] is a proposal Markov chain together with log-potentials.
//! [`run_smc`] resamples at every step (multinomial by default), keeps the full
//! genealogy, and accumulates the log normalizing-constant estimate.
//!
//! Time indices are 1-based throughout the public API (`t = 1..=T`).

mod resample;
mod smc;

pub use resample::{ess, resample, resample_with, Resampling};
pub(crate) use smc::relative_weight_variance_of;
pub use smc::{
    propagate_cloud, relative_weight_variance, run_smc, run_smc_with, smc_step, weighted_expectation,
    ParticleCloud, SmcOptions, SmcTrace,
};

use crate::rng::StreamRng;

/// A proposal chain `M_1, M_2..M_T` and log-potentials `log G_1..log G_T`.
///
/// Implementations must return finite values or `-inf` from `log_potential`, never NaN.
pub trait FeynmanKacModel: Sync {
    fn horizon(&self) -> usize;
    fn dim(&self) -> usize;
    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]);
    /// Draw `x_t ~ M_t(prev, .)` for `t` in `2..=T`.
    fn sample_transition(&self, t: usize, prev: &[f64], rng: &mut StreamRng, out: &mut [f64]);
    /// `log G_t(prev, x)`; `prev` is `None` at `t = 1`.
    fn log_potential(&self, t: usize, prev: Option<&[f64]>, x: &[f64]) -> f64;
}

impl<M: FeynmanKacModel + ?Sized> FeynmanKacModel for &M {
    fn horizon(&self) -> usize {
        (**self).horizon()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]) {
        (**self).sample_initial(rng, out)
    }
    fn sample_transition(&self, t: usize, prev: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        (**self).sample_transition(t, prev, rng, out)
    }
    fn log_potential(&self, t: usize, prev: Option<&[f64]>, x: &[f64]) -> f64 {
        (**self).log_potential(t, prev, x)
    }
}
