use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SmcError};
use crate::fk::FeynmanKacModel;
use crate::rng::StreamRng;

use super::gaussian::TwistedKernel;
use super::policy::TwistPolicy;
use super::quadratic::LogQuadraticTwist;
use super::reference::GaussianReference;

const STACK_DIM: usize = 16;

#[inline]
fn with_buffers<F: FnOnce(&mut [f64], &mut [f64]) -> T, T>(d: usize, f: F) -> T {
    if d <= STACK_DIM {
        let mut a = [0.0; STACK_DIM];
        let mut b = [0.0; STACK_DIM];
        f(&mut a[..d], &mut b[..d])
    } else {
        let mut a = vec![0.0; d];
        let mut b = vec![0.0; d];
        f(&mut a, &mut b)
    }
}

/// Auxiliary model obtained by twisting the kernels of a Gaussian reference.
///
/// Proposal at `t`: `phi_t M_t / M_t(phi_t)`. Potential:
/// `log G_t + log M_t(phi_t)(x_prev) - log phi_t(x) + log eta_t(x) - log eta_{t-1}(x_prev)`,
/// where `eta_{t-1} = M_t(psi_t)` comes from the auxiliary twists and
/// `eta_0` is folded into the first potential so the normalizing constant
/// is that of the reference. With `psi = phi` the two middle normalizers cancel.
pub struct TwistedModel<'a, R: GaussianReference + ?Sized> {
    reference: &'a R,
    horizon: usize,
    dim: usize,
    kernels: Vec<TwistedKernel>,
    /// `None` when linked (`psi = phi`).
    aux_kernels: Option<Vec<TwistedKernel>>,
}

impl<'a, R: GaussianReference + ?Sized> TwistedModel<'a, R> {
    pub fn new(reference: &'a R, policy: &TwistPolicy) -> Result<Self> {
        policy.validate_structure()?;
        let horizon = reference.horizon();
        if policy.horizon() != horizon {
            return Err(SmcError::InvalidPolicy(format!(
                "policy has {} steps, model has {horizon}",
                policy.horizon()
            )));
        }
        if policy.dim != reference.dim() {
            return Err(SmcError::DimensionMismatch { expected: reference.dim(), got: policy.dim });
        }
        let build = |twists: &[LogQuadraticTwist]| -> Result<Vec<TwistedKernel>> {
            twists
                .iter()
                .enumerate()
                .map(|(i, tw)| TwistedKernel::new(&reference.kernel_cov(i + 1), tw.clone()).map_err(|e| e.at_time(i + 1)))
                .collect()
        };
        let kernels = build(&policy.twists)?;
        let aux_kernels = policy.auxiliary.as_deref().map(build).transpose()?;
        Ok(TwistedModel { reference, horizon, dim: reference.dim(), kernels, aux_kernels })
    }

    /// The reference model itself (identity policy).
    pub fn bootstrap(reference: &'a R) -> Self {
        let policy = TwistPolicy::identity(reference.horizon(), reference.dim(), Default::default());
        TwistedModel::new(reference, &policy).expect("identity policy is always valid")
    }

    pub fn reference(&self) -> &'a R {
        self.reference
    }

    pub fn kernel(&self, t: usize) -> &TwistedKernel {
        &self.kernels[t - 1]
    }

    /// Replace the proposal twist at `t`, keeping everything else.
    pub fn set_twist(&mut self, t: usize, twist: LogQuadraticTwist) -> Result<()> {
        self.kernels[t - 1] = TwistedKernel::new(&self.reference.kernel_cov(t), twist).map_err(|e| e.at_time(t))?;
        Ok(())
    }

    /// Replace the twist defining `eta_{t-1}`. Turns a linked model into an unlinked one.
    pub fn set_auxiliary(&mut self, t: usize, twist: LogQuadraticTwist) -> Result<()> {
        if self.aux_kernels.is_none() {
            self.aux_kernels = Some(self.kernels.clone());
        }
        let kernel = TwistedKernel::new(&self.reference.kernel_cov(t), twist).map_err(|e| e.at_time(t))?;
        self.aux_kernels.as_mut().expect("just set")[t - 1] = kernel;
        Ok(())
    }

    fn aux(&self, t: usize) -> &TwistedKernel {
        match &self.aux_kernels {
            Some(k) => &k[t - 1],
            None => &self.kernels[t - 1],
        }
    }

    /// `log eta_t(x)` for `t = 1..T` (zero at `T`).
    pub fn log_eta(&self, t: usize, x: &[f64]) -> f64 {
        if t >= self.horizon {
            return 0.0;
        }
        let next = self.aux(t + 1);
        if next.is_identity() {
            return 0.0;
        }
        with_buffers(self.dim, |mean, _| {
            self.reference.kernel_mean(t + 1, Some(x), mean);
            next.log_normalizer(mean)
        })
    }

    /// `log eta_0`.
    pub fn log_eta_initial(&self) -> f64 {
        let first = self.aux(1);
        if first.is_identity() {
            return 0.0;
        }
        with_buffers(self.dim, |mean, _| {
            self.reference.kernel_mean(1, None, mean);
            first.log_normalizer(mean)
        })
    }
}

impl<R: GaussianReference + ?Sized> FeynmanKacModel for TwistedModel<'_, R> {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]) {
        with_buffers(self.dim, |mean, z| {
            self.reference.kernel_mean(1, None, mean);
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            self.kernels[0].sample(mean, z, out);
        })
    }

    fn sample_transition(&self, t: usize, prev: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        with_buffers(self.dim, |mean, z| {
            self.reference.kernel_mean(t, Some(prev), mean);
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            self.kernels[t - 1].sample(mean, z, out);
        })
    }

    fn log_potential(&self, t: usize, prev: Option<&[f64]>, x: &[f64]) -> f64 {
        let base = self.reference.log_potential(t, prev, x);
        if base == f64::NEG_INFINITY {
            return base;
        }
        let kernel = &self.kernels[t - 1];
        let mut lw = base;
        if !kernel.is_identity() {
            lw -= kernel.twist().log_eval(x);
        }
        lw += self.log_eta(t, x);
        match (&self.aux_kernels, prev) {
            (None, None) => lw + kernel.log_normalizer_at_initial(self.reference),
            (None, Some(_)) => lw,
            (Some(_), None) => {
                // eta_0 folded in: only the proposal normalizer remains
                lw + kernel.log_normalizer_at_initial(self.reference)
            }
            (Some(aux), Some(p)) => {
                let aux = &aux[t - 1];
                if kernel.is_identity() && aux.is_identity() {
                    return lw;
                }
                with_buffers(self.dim, |mean, _| {
                    self.reference.kernel_mean(t, Some(p), mean);
                    lw + kernel.log_normalizer(mean) - aux.log_normalizer(mean)
                })
            }
        }
    }
}

impl TwistedKernel {
    fn log_normalizer_at_initial<R: GaussianReference + ?Sized>(&self, reference: &R) -> f64 {
        if self.is_identity() {
            return 0.0;
        }
        with_buffers(self.dim(), |mean, _| {
            reference.kernel_mean(1, None, mean);
            self.log_normalizer(mean)
        })
    }
}
