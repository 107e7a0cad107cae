use crate::error::{Result, SmcError};
use crate::linalg::log_sum_exp;
use crate::rng::{RngStreams, StreamRng};

use super::resample::{ess, resample_with, Resampling};
use super::FeynmanKacModel;

/// Weighted particles at one time step with their parent indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub t: usize,
    pub dim: usize,
    /// Row-major `N x d`.
    pub particles: Vec<f64>,
    pub log_weights: Vec<f64>,
    /// Parent index into the cloud at `t - 1` (identity at `t = 1`).
    pub ancestors: Vec<usize>,
}

impl ParticleCloud {
    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn particle(&self, n: usize) -> &[f64] {
        &self.particles[n * self.dim..(n + 1) * self.dim]
    }

    /// `log((1/N) sum_n w_n)`.
    pub fn log_mean_weight(&self) -> f64 {
        log_sum_exp(&self.log_weights) - (self.len() as f64).ln()
    }

    /// States `x^{a_n}` selected by `ancestors`, row-major.
    pub fn gather(&self, ancestors: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(ancestors.len() * self.dim);
        for &a in ancestors {
            out.extend_from_slice(self.particle(a));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SmcOptions {
    pub resampling: Resampling,
}

/// Output of [`run_smc`].
#[derive(Debug, Clone, PartialEq)]
pub struct SmcTrace {
    pub clouds: Vec<ParticleCloud>,
    pub log_z_increments: Vec<f64>,
    pub ess_path: Vec<f64>,
    pub kernel_sample_count: u64,
    /// The resampling performed after the last weighting step. It does not
    /// enter any estimator; trajectory estimators at `T` use the weights.
    pub final_ancestors: Vec<usize>,
}

impl SmcTrace {
    pub fn horizon(&self) -> usize {
        self.clouds.len()
    }

    pub fn log_z(&self) -> f64 {
        self.log_z_increments.iter().sum()
    }

    /// `log Z_t` for `t = 1..=T`.
    pub fn log_z_path(&self) -> Vec<f64> {
        self.log_z_increments
            .iter()
            .scan(0.0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect()
    }

    pub fn ess_min(&self) -> f64 {
        self.ess_path.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Genealogy of particle `n` at time `t`: row-major `t x d`.
    pub fn trajectory(&self, t: usize, n: usize) -> Vec<f64> {
        let d = self.clouds[0].dim;
        let mut path = vec![0.0; t * d];
        let mut idx = n;
        for s in (1..=t).rev() {
            let cloud = &self.clouds[s - 1];
            path[(s - 1) * d..s * d].copy_from_slice(cloud.particle(idx));
            idx = cloud.ancestors[idx];
        }
        path
    }
}

fn check_weights(log_weights: &[f64], t: usize) -> Result<()> {
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(SmcError::NonFiniteWeights { t });
    }
    if log_weights.iter().all(|w| *w == f64::NEG_INFINITY) {
        return Err(SmcError::DegenerateWeights { t });
    }
    Ok(())
}

/// Propagate from already-selected ancestor states (or from the initial law
/// when `ancestor_states` is `None`) and weight with the model potentials.
pub fn propagate_cloud<M: FeynmanKacModel + ?Sized>(
    model: &M,
    t: usize,
    ancestor_states: Option<&[f64]>,
    ancestors: Vec<usize>,
    rng: &mut StreamRng,
) -> Result<ParticleCloud> {
    let d = model.dim();
    let n = ancestors.len();
    let mut particles = vec![0.0; n * d];
    let mut log_weights = vec![0.0; n];
    match ancestor_states {
        None => {
            for i in 0..n {
                let x = &mut particles[i * d..(i + 1) * d];
                model.sample_initial(rng, x);
                log_weights[i] = model.log_potential(1, None, x);
            }
        }
        Some(prev) => {
            for i in 0..n {
                let p = &prev[i * d..(i + 1) * d];
                let x = &mut particles[i * d..(i + 1) * d];
                model.sample_transition(t, p, rng, x);
                log_weights[i] = model.log_potential(t, Some(p), x);
            }
        }
    }
    check_weights(&log_weights, t)?;
    Ok(ParticleCloud { t, dim: d, particles, log_weights, ancestors })
}

/// One loop body of the standard sampler: resample `prev`, propagate, weight.
pub fn smc_step<M: FeynmanKacModel + ?Sized>(
    prev: Option<&ParticleCloud>,
    model: &M,
    t: usize,
    n: usize,
    resampling: Resampling,
    rng: &mut StreamRng,
) -> Result<ParticleCloud> {
    match prev {
        None => {
            assert_eq!(t, 1, "only the first step has no predecessor");
            propagate_cloud(model, 1, None, (0..n).collect(), rng)
        }
        Some(p) => {
            assert_eq!(p.t + 1, t, "steps must be consecutive");
            let ancestors = resample_with(resampling, &p.log_weights, n, rng).map_err(|e| e.at_time(p.t))?;
            let states = p.gather(&ancestors);
            propagate_cloud(model, t, Some(&states), ancestors, rng)
        }
    }
}

pub fn run_smc<M: FeynmanKacModel + ?Sized>(model: &M, n: usize, streams: &RngStreams) -> Result<SmcTrace> {
    run_smc_with(model, n, SmcOptions::default(), streams)
}

/// Standard SMC with resampling at every step. Step `t` draws from stream `t`.
pub fn run_smc_with<M: FeynmanKacModel + ?Sized>(
    model: &M,
    n: usize,
    options: SmcOptions,
    streams: &RngStreams,
) -> Result<SmcTrace> {
    assert!(n >= 1, "need at least one particle");
    let horizon = model.horizon();
    let mut clouds: Vec<ParticleCloud> = Vec::with_capacity(horizon);
    let mut log_z_increments = Vec::with_capacity(horizon);
    let mut ess_path = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let mut rng = streams.stream(t as u64);
        let cloud = smc_step(clouds.last(), model, t, n, options.resampling, &mut rng)?;
        log_z_increments.push(cloud.log_mean_weight());
        ess_path.push(ess(&cloud.log_weights).map_err(|e| e.at_time(t))?);
        clouds.push(cloud);
    }
    let mut rng = streams.stream(horizon as u64 + 1);
    let final_ancestors = resample_with(options.resampling, &clouds[horizon - 1].log_weights, n, &mut rng)
        .map_err(|e| e.at_time(horizon))?;
    Ok(SmcTrace {
        clouds,
        log_z_increments,
        ess_path,
        kernel_sample_count: (n * horizon) as u64,
        final_ancestors,
    })
}

/// Self-normalized estimate of `nu_t(f)` over reconstructed trajectories.
/// `f` receives the row-major `t x d` path.
pub fn weighted_expectation<F: Fn(&[f64]) -> f64>(trace: &SmcTrace, t: usize, f: F) -> f64 {
    let cloud = &trace.clouds[t - 1];
    let lw = &cloud.log_weights;
    let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for n in 0..cloud.len() {
        let w = (lw[n] - max).exp();
        if w == 0.0 {
            continue;
        }
        num += w * f(&trace.trajectory(t, n));
        den += w;
    }
    num / den
}

/// Average over `t` of the relative empirical weight variance
/// `[mean(w^2) - mean(w)^2] / mean(w)^2`, i.e. `N / ESS_t - 1`.
pub fn relative_weight_variance(trace: &SmcTrace) -> f64 {
    let total: f64 = trace
        .clouds
        .iter()
        .map(|c| relative_weight_variance_of(&c.log_weights))
        .sum();
    total / trace.clouds.len() as f64
}

pub(crate) fn relative_weight_variance_of(log_weights: &[f64]) -> f64 {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut s1, mut s2) = (0.0, 0.0);
    for lw in log_weights {
        let w = (lw - max).exp();
        s1 += w;
        s2 += w * w;
    }
    (log_weights.len() as f64 * s2 / (s1 * s1) - 1.0).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Gaussian random walk with a user-supplied potential.
    struct Walk<F: Fn(usize, &[f64]) -> f64 + Sync> {
        horizon: usize,
        potential: F,
    }

    impl<F: Fn(usize, &[f64]) -> f64 + Sync> FeynmanKacModel for Walk<F> {
        fn horizon(&self) -> usize {
            self.horizon
        }
        fn dim(&self) -> usize {
            1
        }
        fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]) {
            out[0] = rng.sample(StandardNormal);
        }
        fn sample_transition(&self, _t: usize, prev: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
            out[0] = prev[0] + rng.sample::<f64, _>(StandardNormal);
        }
        fn log_potential(&self, t: usize, _prev: Option<&[f64]>, x: &[f64]) -> f64 {
            (self.potential)(t, x)
        }
    }

    #[test]
    fn unit_potentials_give_zero_log_z() {
        let model = Walk { horizon: 7, potential: |_, _| 0.0 };
        let trace = run_smc(&model, 50, &RngStreams::from_seed(1)).unwrap();
        assert_eq!(trace.log_z(), 0.0);
        assert_eq!(trace.kernel_sample_count, 350);
        assert!(trace.ess_path.iter().all(|&e| (e - 50.0).abs() < 1e-9));
        assert_eq!(relative_weight_variance(&trace), 0.0);
    }

    #[test]
    fn first_step_uses_identity_ancestors() {
        let model = Walk { horizon: 3, potential: |_, x: &[f64]| -x[0] * x[0] };
        let trace = run_smc(&model, 6, &RngStreams::from_seed(2)).unwrap();
        assert_eq!(trace.clouds[0].ancestors, (0..6).collect::<Vec<_>>());
        for n in 0..6 {
            let x = trace.clouds[0].particle(n)[0];
            assert_eq!(trace.clouds[0].log_weights[n], -x * x);
        }
    }

    #[test]
    fn single_particle_accumulates_its_path_potentials() {
        let model = Walk { horizon: 5, potential: |t, x: &[f64]| -(x[0] - t as f64).powi(2) };
        let trace = run_smc(&model, 1, &RngStreams::from_seed(3)).unwrap();
        let path = trace.trajectory(5, 0);
        let expected: f64 = (1..=5).map(|t| -(path[t - 1] - t as f64).powi(2)).sum();
        assert!((trace.log_z() - expected).abs() < 1e-12);
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let model = Walk { horizon: 10, potential: |_, x: &[f64]| -0.5 * x[0] * x[0] };
        let a = run_smc(&model, 64, &RngStreams::from_seed(11)).unwrap();
        let b = run_smc(&model, 64, &RngStreams::from_seed(11)).unwrap();
        assert_eq!(a, b);
        let c = run_smc(&model, 64, &RngStreams::from_seed(12)).unwrap();
        assert_ne!(a.log_z(), c.log_z());
    }

    #[test]
    fn degenerate_step_reports_time_index() {
        let model = Walk { horizon: 4, potential: |t, _: &[f64]| if t == 3 { f64::NEG_INFINITY } else { 0.0 } };
        let err = run_smc(&model, 10, &RngStreams::from_seed(4)).unwrap_err();
        assert_eq!(err, SmcError::DegenerateWeights { t: 3 });
    }

    #[test]
    fn genealogy_matches_brute_force_chase() {
        let model = Walk { horizon: 5, potential: |_, x: &[f64]| -x[0].abs() };
        for seed in 0..20 {
            let n = 1 + (seed as usize % 8);
            let trace = run_smc(&model, n, &RngStreams::from_seed(seed)).unwrap();
            for t in 1..=5 {
                for i in 0..n {
                    let path = trace.trajectory(t, i);
                    assert_eq!(path.len(), t);
                    let mut idx = i;
                    let mut s = t;
                    loop {
                        assert_eq!(path[s - 1], trace.clouds[s - 1].particle(idx)[0]);
                        if s == 1 {
                            break;
                        }
                        idx = trace.clouds[s - 1].ancestors[idx];
                        s -= 1;
                    }
                }
            }
        }
    }

    #[test]
    fn weighted_expectation_normalization_and_atom() {
        let model = Walk { horizon: 3, potential: |_, x: &[f64]| -x[0] * x[0] };
        let trace = run_smc(&model, 20, &RngStreams::from_seed(5)).unwrap();
        assert!((weighted_expectation(&trace, 3, |_| 1.0) - 1.0).abs() < 1e-15);

        let mut atom = trace.clone();
        let last = atom.clouds.len() - 1;
        atom.clouds[last].log_weights = vec![f64::NEG_INFINITY; 20];
        atom.clouds[last].log_weights[0] = 0.0;
        let first = atom.trajectory(3, 0);
        let value = weighted_expectation(&atom, 3, |path| if path == first.as_slice() { 1.0 } else { 0.0 });
        assert_eq!(value, 1.0);
    }

    #[test]
    fn relative_weight_variance_examples() {
        let c = 3.7f64;
        assert!((relative_weight_variance_of(&[(2.0 * c).ln(), f64::NEG_INFINITY]) - 1.0).abs() < 1e-12);
        let lw = [0.3, -1.2, 2.0, 0.0];
        let scaled: Vec<f64> = lw.iter().map(|v| v + 5.5).collect();
        assert!((relative_weight_variance_of(&lw) - relative_weight_variance_of(&scaled)).abs() < 1e-12);
        // direct formula
        let w: Vec<f64> = lw.iter().map(|v: &f64| v.exp()).collect();
        let m1 = w.iter().sum::<f64>() / 4.0;
        let m2 = w.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!((relative_weight_variance_of(&lw) - (m2 - m1 * m1) / (m1 * m1)).abs() < 1e-12);
    }
}
