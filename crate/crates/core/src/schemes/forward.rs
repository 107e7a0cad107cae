use std::collections::BTreeSet;

use crate::error::{Result, SmcError};
use crate::fk::{ess, propagate_cloud, relative_weight_variance_of, resample_with, smc_step, FeynmanKacModel, ParticleCloud, SmcTrace};
use crate::learning::{fit_log_quadratic, temper_exponent, RegressionFit, RegressionProblem};
use crate::rng::{purpose, RngStreams};
use crate::twist::{default_epsilon, GaussianReference, LogQuadraticTwist, TwistPolicy, TwistedModel};

use super::run::{FailureEvent, FailureKind, IterationSummary, Recovery, TrainingRun};
use super::{iteration_streams, Scheme, SchemeConfig};

const TEMPER_TOLERANCE: f64 = 0.5;

/// Regression at one time step with optional tempering and projection against
/// the kernel covariance.
pub(super) struct FitRequest<'r> {
    pub t: usize,
    pub states: &'r [f64],
    pub log_targets: &'r [f64],
    pub log_weights: Option<&'r [f64]>,
}

pub(super) struct FitResult {
    pub fit: Result<RegressionFit>,
    pub tempered: bool,
}

pub(super) fn fit_step<R: GaussianReference + ?Sized>(
    reference: &R,
    config: &SchemeConfig,
    req: FitRequest<'_>,
) -> FitResult {
    let d = reference.dim();
    let cov = reference.kernel_cov(req.t);
    let epsilon = config.psd_epsilon.unwrap_or_else(|| default_epsilon(&cov));
    let mut tempered = false;
    let tempered_weights;
    let weights = match req.log_weights {
        Some(lw) if config.tempering => match temper_exponent(lw, config.target_ess_for(d), TEMPER_TOLERANCE) {
            Ok(r) => {
                tempered = r.alpha < 1.0;
                tempered_weights = r.tempered_log_weights;
                Some(tempered_weights.as_slice())
            }
            Err(e) => return FitResult { fit: Err(e.at_time(req.t)), tempered },
        },
        other => other,
    };
    let mut problem = RegressionProblem::new(req.states, d, req.log_targets, config.mode).with_projection(&cov, epsilon);
    problem.log_weights = weights;
    problem.ridge = config.ridge;
    problem.refit_after_projection = config.refit_after_projection;
    let fit = fit_log_quadratic(&problem).map_err(|e| e.at_time(req.t));
    FitResult { fit, tempered }
}

/// A particle system advanced one step at a time with the streams of `run_smc`.
struct SamplingLevel<'a, R: GaussianReference + ?Sized> {
    streams: RngStreams,
    model: TwistedModel<'a, R>,
    n: usize,
    keep_clouds: bool,
    keep_ancestors: bool,
    clouds: Vec<ParticleCloud>,
    latest: Option<ParticleCloud>,
    /// States selected as ancestors of `latest` (time `latest.t - 1`).
    ancestor_states: Option<Vec<f64>>,
    log_z_increments: Vec<f64>,
    ess_path: Vec<f64>,
    weight_variance_sum: f64,
    samples: u64,
}

impl<'a, R: GaussianReference + ?Sized> SamplingLevel<'a, R> {
    fn new(streams: RngStreams, model: TwistedModel<'a, R>, n: usize, keep_clouds: bool, keep_ancestors: bool) -> Self {
        SamplingLevel {
            streams,
            model,
            n,
            keep_clouds,
            keep_ancestors,
            clouds: Vec::new(),
            latest: None,
            ancestor_states: None,
            log_z_increments: Vec::new(),
            ess_path: Vec::new(),
            weight_variance_sum: 0.0,
            samples: 0,
        }
    }

    fn next_t(&self) -> usize {
        self.latest.as_ref().map_or(1, |c| c.t + 1)
    }

    fn advance(&mut self, t: usize, config: &SchemeConfig) -> Result<()> {
        assert_eq!(t, self.next_t(), "levels advance one step at a time");
        let mut rng = self.streams.stream(t as u64);
        let cloud = smc_step(self.latest.as_ref(), &self.model, t, self.n, config.resampling, &mut rng)?;
        if self.keep_ancestors {
            self.ancestor_states = self.latest.as_ref().map(|prev| prev.gather(&cloud.ancestors));
        }
        self.log_z_increments.push(cloud.log_mean_weight());
        self.ess_path.push(ess(&cloud.log_weights).map_err(|e| e.at_time(t))?);
        self.weight_variance_sum += relative_weight_variance_of(&cloud.log_weights);
        self.samples += self.n as u64;
        if let Some(prev) = self.latest.replace(cloud) {
            if self.keep_clouds {
                self.clouds.push(prev);
            }
        }
        Ok(())
    }

    fn summary(&self, iteration: usize) -> IterationSummary {
        IterationSummary {
            iteration,
            log_z: self.log_z_increments.iter().sum(),
            ess_min: self.ess_path.iter().copied().fold(f64::INFINITY, f64::min),
            weight_variance: self.weight_variance_sum / self.log_z_increments.len() as f64,
            failures: 0,
            sample_count: self.samples,
            regressions: 0,
            tempered: 0,
            projected: 0,
        }
    }

    fn into_trace(mut self, config: &SchemeConfig) -> Result<SmcTrace> {
        let last = self.latest.take().expect("at least one step");
        let horizon = last.t;
        let mut rng = self.streams.stream(horizon as u64 + 1);
        let final_ancestors =
            resample_with(config.resampling, &last.log_weights, self.n, &mut rng).map_err(|e| e.at_time(horizon))?;
        self.clouds.push(last);
        Ok(SmcTrace {
            clouds: self.clouds,
            log_z_increments: self.log_z_increments,
            ess_path: self.ess_path,
            kernel_sample_count: self.samples,
            final_ancestors,
        })
    }
}

/// Shared state of the forward schemes. Level `l` samples with proposal
/// `phi^(l)` and auxiliary weights from `phi^(l-1)`; level 0 is the reference.
struct ForwardEngine<'a, R: GaussianReference + ?Sized> {
    reference: &'a R,
    config: &'a SchemeConfig,
    twists: Vec<Vec<LogQuadraticTwist>>,
    /// `linked[l]` uses `phi^(l)` for both proposal and auxiliary weights.
    linked: Vec<TwistedModel<'a, R>>,
    levels: Vec<SamplingLevel<'a, R>>,
    failures: Vec<FailureEvent>,
    stats: Vec<IterationSummary>,
    max_slices: usize,
}

impl<'a, R: GaussianReference + ?Sized> ForwardEngine<'a, R> {
    fn new(
        reference: &'a R,
        config: &'a SchemeConfig,
        streams: &RngStreams,
        keep_clouds: bool,
        keep_ancestors: bool,
    ) -> Result<Self> {
        config.validate()?;
        let horizon = reference.horizon();
        let d = reference.dim();
        let depth = config.iterations;
        let identity = TwistPolicy::identity(horizon, d, config.mode);
        let mut unlinked = identity.clone();
        unlinked.auxiliary = Some(identity.twists.clone());
        let mut levels = Vec::with_capacity(depth + 1);
        for l in 0..=depth {
            let policy = if l == 0 { &identity } else { &unlinked };
            let model = TwistedModel::new(reference, policy)?;
            levels.push(SamplingLevel::new(
                iteration_streams(streams, l),
                model,
                config.n_sample,
                keep_clouds,
                // recycled clouds need their ancestors; the deepest level is never recycled
                keep_ancestors && l < depth,
            ));
        }
        let linked = (0..depth).map(|_| TwistedModel::new(reference, &identity)).collect::<Result<Vec<_>>>()?;
        Ok(ForwardEngine {
            reference,
            config,
            twists: vec![identity.twists.clone(); depth + 1],
            linked,
            levels,
            failures: Vec::new(),
            stats: (0..=depth).map(|l| empty_summary(l)).collect(),
            max_slices: 0,
        })
    }

    /// Record `phi^(level)_t` in every model that uses it.
    fn install(&mut self, level: usize, t: usize, twist: LogQuadraticTwist) -> Result<()> {
        self.levels[level].model.set_twist(t, twist.clone())?;
        if level < self.linked.len() {
            self.linked[level].set_twist(t, twist.clone())?;
        }
        if level + 1 < self.levels.len() {
            self.levels[level + 1].model.set_auxiliary(t, twist.clone())?;
        }
        self.twists[level][t - 1] = twist;
        Ok(())
    }

    fn note_slices(&mut self) {
        let mut times = BTreeSet::new();
        for level in &self.levels {
            if let Some(c) = &level.latest {
                times.insert(c.t);
                if level.ancestor_states.is_some() {
                    times.insert(c.t - 1);
                }
            }
        }
        self.max_slices = self.max_slices.max(times.len());
    }

    /// Fit `phi^(level)_t` and install it, keeping `phi^(level-1)_t` on failure.
    fn fit_and_install(
        &mut self,
        level: usize,
        t: usize,
        states: &[f64],
        log_targets: &[f64],
        log_weights: &[f64],
    ) -> Result<()> {
        let result = fit_step(
            self.reference,
            self.config,
            FitRequest { t, states, log_targets, log_weights: Some(log_weights) },
        );
        let stats = &mut self.stats[level];
        stats.regressions += 1;
        stats.tempered += usize::from(result.tempered);
        let fallback = self.twists[level - 1][t - 1].clone();
        let twist = match result.fit {
            Ok(fit) => {
                stats.projected += usize::from(fit.projected);
                fit.twist
            }
            Err(e) => {
                self.record_failure(level, t, &e);
                fallback.clone()
            }
        };
        match self.install(level, t, twist) {
            Ok(()) => Ok(()),
            Err(e) => {
                self.record_failure(level, t, &e);
                self.install(level, t, fallback)
            }
        }
    }

    fn record_failure(&mut self, level: usize, t: usize, err: &SmcError) {
        self.stats[level].failures += 1;
        self.failures.push(FailureEvent {
            iteration: level,
            t,
            kind: FailureKind::from_error(err),
            recovery: Recovery::KeptPreviousTwist,
            detail: err.to_string(),
        });
    }

    /// Training targets `log G_t + log eta^(level)_t` at `states` with ancestors `prev`.
    fn targets(&self, level: usize, t: usize, states: &[f64], prev: Option<&[f64]>) -> Vec<f64> {
        let d = self.reference.dim();
        let model = &self.linked[level];
        states
            .chunks(d)
            .enumerate()
            .map(|(i, x)| {
                let p = prev.map(|p| &p[i * d..(i + 1) * d]);
                self.reference.log_potential(t, p, x) + model.log_eta(t, x)
            })
            .collect()
    }

    /// Forward step at `(l, t)`: fit `phi^(l+1)_t` from a fresh training cloud drawn
    /// under the linked `phi^(l)` model from the level `l + 1` particles at `t - 1`,
    /// then advance level `l + 1` to `t`.
    fn forward_step(&mut self, l: usize, t: usize) -> Result<()> {
        let level = l + 1;
        let n_train = self.config.n_train;
        let mut rng = self.levels[level].streams.stream(purpose::TRAIN | t as u64);
        let (prev_states, ancestors) = match &self.levels[level].latest {
            None => (None, (0..n_train).collect()),
            Some(prev) => {
                let a = resample_with(self.config.resampling, &prev.log_weights, n_train, &mut rng)
                    .map_err(|e| e.at_time(prev.t))?;
                (Some(prev.gather(&a)), a)
            }
        };
        let training = propagate_cloud(&self.linked[l], t, prev_states.as_deref(), ancestors, &mut rng);
        self.stats[level].sample_count += n_train as u64;
        match training {
            Ok(cloud) => {
                let targets = self.targets(l, t, &cloud.particles, prev_states.as_deref());
                self.fit_and_install(level, t, &cloud.particles, &targets, &cloud.log_weights)?;
            }
            Err(e) => {
                let fallback = self.twists[l][t - 1].clone();
                self.record_failure(level, t, &e);
                self.install(level, t, fallback)?;
            }
        }
        self.levels[level].advance(t, self.config)?;
        self.note_slices();
        Ok(())
    }

    /// Fast step: fit `phi^(l+1)_t` from level `l`'s own particles at `t`,
    /// reweighted to the linked `phi^(l)` model.
    fn recycle_step(&mut self, l: usize, t: usize) -> Result<()> {
        let d = self.reference.dim();
        let source = &self.levels[l];
        let cloud = source.latest.as_ref().expect("source level has reached t");
        assert_eq!(cloud.t, t);
        let prev = source.ancestor_states.as_deref();
        let log_weights: Vec<f64> = cloud
            .particles
            .chunks(d)
            .enumerate()
            .map(|(i, x)| self.linked[l].log_potential(t, prev.map(|p| &p[i * d..(i + 1) * d]), x))
            .collect();
        let targets = self.targets(l, t, &cloud.particles, prev);
        let states = cloud.particles.clone();
        if log_weights.iter().all(|w| *w == f64::NEG_INFINITY) {
            let err = SmcError::DegenerateWeights { t };
            let fallback = self.twists[l][t - 1].clone();
            self.record_failure(l + 1, t, &err);
            return self.install(l + 1, t, fallback);
        }
        self.fit_and_install(l + 1, t, &states, &targets, &log_weights)
    }

    fn advance_level(&mut self, level: usize, t: usize) -> Result<()> {
        self.levels[level].advance(t, self.config)?;
        self.note_slices();
        Ok(())
    }

    fn finish(self, scheme: Scheme, keep_traces: bool, streaming: bool) -> Result<TrainingRun> {
        let d = self.reference.dim();
        let mut policies = Vec::with_capacity(self.twists.len());
        for (l, twists) in self.twists.iter().enumerate() {
            let mut policy = TwistPolicy::linked(twists.clone(), self.config.mode);
            policy.dim = d;
            if l > 0 {
                policy.auxiliary = Some(self.twists[l - 1].clone());
            }
            policies.push(policy);
        }
        let mut iterations = Vec::with_capacity(self.levels.len());
        let mut traces = Vec::new();
        for (l, level) in self.levels.into_iter().enumerate() {
            let mut s = level.summary(l);
            let extra = &self.stats[l];
            s.failures = extra.failures;
            s.sample_count += extra.sample_count;
            s.regressions = extra.regressions;
            s.tempered = extra.tempered;
            s.projected = extra.projected;
            iterations.push(s);
            if keep_traces {
                traces.push(level.into_trace(self.config)?);
            }
        }
        Ok(TrainingRun {
            scheme,
            policies,
            traces,
            iterations,
            failures: self.failures,
            max_retained_slices: streaming.then_some(self.max_slices),
        })
    }
}

fn empty_summary(iteration: usize) -> IterationSummary {
    IterationSummary {
        iteration,
        log_z: 0.0,
        ess_min: f64::INFINITY,
        weight_variance: 0.0,
        failures: 0,
        sample_count: 0,
        regressions: 0,
        tempered: 0,
        projected: 0,
    }
}

/// Forward iterated training. Iteration 0 is the reference filter; iteration
/// `L + 1` costs `n_sample * T` sampling plus `n_train * T` training draws.
pub fn forward_train<R: GaussianReference + ?Sized>(
    reference: &R,
    config: &SchemeConfig,
    streams: &RngStreams,
) -> Result<TrainingRun> {
    let horizon = reference.horizon();
    let mut engine = ForwardEngine::new(reference, config, streams, true, false)?;
    for t in 1..=horizon {
        engine.advance_level(0, t)?;
    }
    for l in 0..config.iterations {
        for t in 1..=horizon {
            engine.forward_step(l, t)?;
        }
    }
    engine.finish(Scheme::Forward, true, false)
}

/// Same computations as [`forward_train`] in streaming order: when observation
/// `t_end` arrives, the steps `(L, t)` with `t + L = t_end` run from the newest
/// time backwards. Only summaries are kept.
pub fn online_forward<R: GaussianReference + ?Sized>(
    reference: &R,
    config: &SchemeConfig,
    streams: &RngStreams,
) -> Result<TrainingRun> {
    let horizon = reference.horizon();
    let depth = config.iterations;
    let mut engine = ForwardEngine::new(reference, config, streams, false, false)?;
    let last = horizon + depth.saturating_sub(1);
    for t_end in 1..=last {
        if depth > 0 {
            let lo = t_end.saturating_sub(depth - 1).max(1);
            let hi = t_end.min(horizon);
            for t in (lo..=hi).rev() {
                engine.forward_step(t_end - t, t)?;
            }
        }
        // the reference pass only feeds the iteration-0 summary
        if t_end <= horizon {
            engine.advance_level(0, t_end)?;
        }
    }
    engine.finish(Scheme::Online, false, true)
}

/// Streaming variant in which the sampling particles of level `l` double as
/// the training particles of `phi^(l+1)`, so each level costs `n_sample * T`.
pub fn fast_online_forward<R: GaussianReference + ?Sized>(
    reference: &R,
    config: &SchemeConfig,
    streams: &RngStreams,
) -> Result<TrainingRun> {
    let horizon = reference.horizon();
    let depth = config.iterations;
    let mut engine = ForwardEngine::new(reference, config, streams, false, true)?;
    let last = horizon + depth.saturating_sub(1);
    // phi^(l+1)_s with s = t_end - l needs phi^(l)_{s+1}, fitted just before in the same round
    let step_time = |t_end: usize, l: usize| t_end.checked_sub(l).filter(|s| (1..=horizon).contains(s));
    for t_end in 1..=last {
        if t_end <= horizon {
            engine.advance_level(0, t_end)?;
        }
        for l in 0..depth {
            if let Some(s) = step_time(t_end, l) {
                engine.recycle_step(l, s)?;
            }
        }
        for l in 0..depth {
            if let Some(s) = step_time(t_end, l) {
                engine.advance_level(l + 1, s)?;
            }
        }
    }
    engine.finish(Scheme::FastOnline, false, true)
}
