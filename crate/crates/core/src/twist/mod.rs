//! Log-quadratic twisting of Gaussian kernels and the auxiliary models they induce.

mod gaussian;
mod model;
mod policy;
mod psd;
mod quadratic;
mod reference;

pub use gaussian::{twist_gaussian, TwistedKernel};
pub use model::TwistedModel;
pub use policy::{InducedEta, TwistPolicy};
pub use psd::{default_epsilon, psd_floor, psd_floor_mode};
pub use quadratic::{LogQuadraticTwist, TwistMode};
pub use reference::GaussianReference;

/// Coefficient-wise sum: the log-quadratic form of a pointwise product.
pub fn compose_potential_twist(
    log_potential: &LogQuadraticTwist,
    log_eta: &LogQuadraticTwist,
) -> crate::Result<LogQuadraticTwist> {
    log_potential.compose(log_eta)
}
