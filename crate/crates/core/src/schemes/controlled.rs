use crate::error::Result;
use crate::fk::{ess, relative_weight_variance_of, run_smc_with, SmcOptions, SmcTrace};
use crate::rng::RngStreams;
use crate::twist::{GaussianReference, TwistPolicy, TwistedModel};

use super::forward::{fit_step, FitRequest};
use super::run::{FailureEvent, FailureKind, IterationSummary, Recovery, TrainingRun};
use super::{iteration_streams, Scheme, SchemeConfig};

fn summarize(trace: &SmcTrace, iteration: usize) -> IterationSummary {
    let horizon = trace.clouds.len();
    IterationSummary {
        iteration,
        log_z: trace.log_z(),
        ess_min: trace.ess_min(),
        weight_variance: trace.clouds.iter().map(|c| relative_weight_variance_of(&c.log_weights)).sum::<f64>()
            / horizon as f64,
        failures: 0,
        sample_count: trace.kernel_sample_count,
        regressions: 0,
        tempered: 0,
        projected: 0,
    }
}

/// Controlled SMC: each iteration refits every twist by a backward sweep of
/// unweighted regressions over the previous pass's particles, then runs one
/// filter under the new policy (cost `n_sample * T` per iteration).
pub fn controlled_smc_train<R: GaussianReference + ?Sized>(
    reference: &R,
    config: &SchemeConfig,
    streams: &RngStreams,
) -> Result<TrainingRun> {
    config.validate()?;
    let horizon = reference.horizon();
    let d = reference.dim();
    let options = SmcOptions { resampling: config.resampling };
    let mut policies = vec![TwistPolicy::identity(horizon, d, config.mode)];
    let bootstrap = TwistedModel::new(reference, &policies[0])?;
    let mut traces = vec![run_smc_with(&bootstrap, config.n_sample, options, &iteration_streams(streams, 0))?];
    let mut iterations = vec![summarize(&traces[0], 0)];
    let mut failures = Vec::new();
    let target_ess = config.target_ess_for(d);

    for iteration in 1..=config.iterations {
        let previous = &policies[iteration - 1];
        let prev_trace = traces.last().expect("previous pass");
        let mut model = TwistedModel::new(reference, &TwistPolicy::identity(horizon, d, config.mode))?;
        let mut twists = previous.twists.clone();
        let (mut regressions, mut projected, mut failed) = (0, 0, 0);
        for t in (1..=horizon).rev() {
            let cloud = &prev_trace.clouds[t - 1];
            let prev_states = (t > 1).then(|| prev_trace.clouds[t - 2].gather(&cloud.ancestors));
            let weight_ess = ess(&cloud.log_weights)?;
            if weight_ess < target_ess {
                failures.push(FailureEvent {
                    iteration,
                    t,
                    kind: FailureKind::DegenerateTrainingCloud,
                    recovery: Recovery::ContinuedWithCloud,
                    detail: format!("previous pass ESS {weight_ess:.2} below {target_ess}"),
                });
                failed += 1;
            }
            let targets: Vec<f64> = cloud
                .particles
                .chunks(d)
                .enumerate()
                .map(|(i, x)| {
                    let p = prev_states.as_ref().map(|p| &p[i * d..(i + 1) * d]);
                    reference.log_potential(t, p, x) + model.log_eta(t, x)
                })
                .collect();
            let result = fit_step(
                reference,
                config,
                FitRequest { t, states: &cloud.particles, log_targets: &targets, log_weights: None },
            );
            regressions += 1;
            let fitted = result.fit.and_then(|fit| {
                projected += usize::from(fit.projected);
                model.set_twist(t, fit.twist.clone())?;
                Ok(fit.twist)
            });
            match fitted {
                Ok(tw) => twists[t - 1] = tw,
                Err(e) => {
                    failures.push(FailureEvent {
                        iteration,
                        t,
                        kind: FailureKind::from_error(&e),
                        recovery: Recovery::KeptPreviousTwist,
                        detail: e.to_string(),
                    });
                    failed += 1;
                    model.set_twist(t, twists[t - 1].clone())?;
                }
            }
        }
        let policy = TwistPolicy::linked(twists, config.mode);
        let trace = run_smc_with(&model, config.n_sample, options, &iteration_streams(streams, iteration))?;
        let pass = summarize(&trace, iteration);
        iterations.push(IterationSummary { regressions, projected, failures: failed, ..pass });
        policies.push(policy);
        traces.push(trace);
    }
    Ok(TrainingRun { scheme: Scheme::Backward, policies, traces, iterations, failures, max_retained_slices: None })
}
