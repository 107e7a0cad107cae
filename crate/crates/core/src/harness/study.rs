use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::single::simulate_dataset;
use super::{io_error, tag, write_file, EstimatorEntry, ExperimentConfig, HarnessError, ModelConfig};
use crate::models::{load_fx_returns, FxOptions, LgssmParams};
use crate::pmmh::{
    ecdf_csv, msv_initial_theta, pilot_scale, windows_csv, Estimator, LgssmLikelihood, LogLikelihood, MsvLikelihood,
    ParamTransform, PmmhChain, PmmhConfig, Prior, PriorSpec, Sampler,
};
use crate::rng::RngStreams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub label: String,
    pub estimator: String,
    pub acceptance_rate: f64,
    pub failed_proposals: usize,
    pub windows: usize,
    #[serde(skip)]
    pub chain: Option<PmmhChain>,
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub proposal_sd: Vec<f64>,
    /// Pilot multiplier and acceptance when the scales were tuned.
    pub pilot: Option<(f64, f64)>,
    pub chains: Vec<ChainReport>,
}

/// Parameter space, data and per-estimator likelihoods of a study.
struct Problem {
    prior: PriorSpec,
    transform: ParamTransform,
    theta0: Vec<f64>,
    likelihoods: Vec<Box<dyn LogLikelihood>>,
}

fn parse_date(field: &str, value: &Option<String>) -> Result<Option<NaiveDate>, HarnessError> {
    value
        .as_deref()
        .map(|s| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map_err(|_| HarnessError::Config(format!("pmmh.model.fx.{field}: {s:?} is not a YYYY-MM-DD date")))
        })
        .transpose()
}

fn problem(config: &ExperimentConfig) -> Result<Problem, HarnessError> {
    let study = &config.pmmh;
    match &study.model {
        ModelConfig::Msv { fx, .. } => {
            let observations = match fx {
                Some(fx) => {
                    if fx.path.as_os_str().is_empty() {
                        return Err(HarnessError::Config("set pmmh.model.fx.path to the exchange-rate CSV".into()));
                    }
                    let options = FxOptions {
                        columns: fx.columns.clone(),
                        from: parse_date("from", &fx.from)?,
                        to: parse_date("to", &fx.to)?,
                        drop_missing: fx.drop_missing,
                    };
                    let mut returns = load_fx_returns(&fx.path, &options)?;
                    if let Some(c) = &fx.drop_currency {
                        returns = returns.without(c);
                    }
                    returns.returns
                }
                None => simulate_dataset(&study.model, config.seed)?.observations,
            };
            let d = observations.first().map_or(0, Vec::len);
            let prior = PriorSpec::msv(d);
            let transform = prior.transform()?;
            let theta0 = msv_initial_theta(&observations, study.m_init);
            let likelihoods = study
                .estimators
                .iter()
                .map(|e| -> Result<Box<dyn LogLikelihood>, HarnessError> {
                    if e.spec.estimator == Estimator::Kalman {
                        return Err(HarnessError::Config(format!("estimator {:?}: kalman needs an lgssm model", e.label)));
                    }
                    Ok(Box::new(MsvLikelihood { observations: observations.clone(), spec: e.spec.clone() }))
                })
                .collect::<Result<_, _>>()?;
            Ok(Problem { prior, transform, theta0, likelihoods })
        }
        // stand-in with a single unknown, the autoregression coefficient
        ModelConfig::Lgssm { a, q, r, p1, .. } => {
            let observations = simulate_dataset(&study.model, config.seed)?.observations;
            let prior = PriorSpec::new(vec![Prior::Uniform { lo: 0.0, hi: 1.0 }]);
            let transform = prior.transform()?;
            let (q, r, p1) = (*q, *r, *p1);
            let likelihoods = study
                .estimators
                .iter()
                .map(|e| -> Box<dyn LogLikelihood> {
                    Box::new(LgssmLikelihood {
                        params_of: move |t: &[f64]| -> crate::Result<LgssmParams> { Ok(LgssmParams::scalar(t[0], q, r, p1)) },
                        observations: observations.clone(),
                        spec: e.spec.clone(),
                    })
                })
                .collect();
            Ok(Problem { prior, transform, theta0: vec![a.clamp(0.01, 0.99)], likelihoods })
        }
        ModelConfig::Nlobs { .. } => Err(HarnessError::Config("msv-pmmh needs an msv or lgssm model block".into())),
    }
}

fn chain_config(config: &ExperimentConfig, proposal_sd: Vec<f64>) -> PmmhConfig {
    let s = &config.pmmh;
    PmmhConfig {
        steps: s.steps,
        proposal_sd,
        window_every: s.window_every,
        window_replicates: s.window_replicates,
        checkpoint_every: s.checkpoint_every,
    }
}

fn file_label(entry: &EstimatorEntry) -> String {
    entry.label.replace(char::is_whitespace, "_")
}

/// One PMMH chain per estimator with shared random-walk scales. With `out`,
/// chains checkpoint there and resume from existing checkpoints.
pub fn run_msv_pmmh(config: &ExperimentConfig, out: Option<&Path>) -> Result<StudyOutcome, HarnessError> {
    let study = &config.pmmh;
    if study.estimators.is_empty() {
        return Err(HarnessError::Config("pmmh.estimators is empty".into()));
    }
    let p = problem(config)?;
    let dim = p.transform.dim();
    let master = RngStreams::from_seed(config.seed);
    let (proposal_sd, pilot) = match &study.proposal_sd {
        Some(sd) if sd.len() == dim => (sd.clone(), None),
        Some(sd) => {
            return Err(HarnessError::Config(format!("pmmh.proposal_sd has {} entries, the model has {dim}", sd.len())))
        }
        None => {
            let k = match &study.pilot_estimator {
                Some(label) => study.estimators.iter().position(|e| &e.label == label).ok_or_else(|| {
                    HarnessError::Config(format!("pilot estimator {label:?} is not among pmmh.estimators"))
                })?,
                None => 0,
            };
            let base = PmmhConfig {
                steps: study.pilot_steps,
                window_every: 0,
                ..chain_config(config, vec![study.base_sd; dim])
            };
            let (mult, rate) = pilot_scale(
                p.likelihoods[k].as_ref(),
                &p.prior,
                &p.transform,
                &p.theta0,
                &base,
                &study.pilot_multipliers,
                study.target_acceptance,
                &master.derive(tag::PILOT),
            )?;
            (vec![study.base_sd * mult; dim], Some((mult, rate)))
        }
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(io_error(dir))?;
    }
    let pmmh_config = chain_config(config, proposal_sd.clone());
    let chains = study
        .estimators
        .par_iter()
        .zip(&p.likelihoods)
        .enumerate()
        .map(|(k, (entry, likelihood))| -> Result<ChainReport, HarnessError> {
            let sampler = Sampler {
                likelihood: likelihood.as_ref(),
                prior: &p.prior,
                transform: &p.transform,
                config: &pmmh_config,
                streams: master.derive(tag::PMMH).derive(k as u64),
            };
            let checkpoint = out.map(|d| d.join(format!("chain-{}.checkpoint.json", file_label(entry))));
            let chain = sampler.run(&p.theta0, checkpoint.as_deref())?;
            if let Some(dir) = out {
                write_file(&dir.join(format!("chain-{}.jsonl", file_label(entry))), chain.chain_jsonl())?;
            }
            Ok(ChainReport {
                label: entry.label.clone(),
                estimator: entry.spec.estimator.name().to_string(),
                acceptance_rate: chain.acceptance_rate(),
                failed_proposals: chain.failed_proposals,
                windows: chain.windows.iter().filter(|w| w.variance.is_some()).count(),
                chain: Some(chain),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(dir) = out {
        let runs: Vec<_> = chains
            .iter()
            .map(|c| (c.label.as_str(), c.chain.as_ref().expect("kept").windows.as_slice()))
            .collect();
        write_file(&dir.join("windows.csv"), windows_csv(runs.iter().copied()))?;
        write_file(&dir.join("ecdf.csv"), ecdf_csv(runs.iter().copied()))?;
        let summary = json!({
            "seed": config.seed,
            "config_hash": config.hash(),
            "proposal_sd": proposal_sd,
            "pilot": pilot.map(|(m, r)| json!({ "multiplier": m, "acceptance": r })),
            "chains": chains,
        });
        write_file(&dir.join("pmmh.json"), serde_json::to_string_pretty(&summary).expect("serializable"))?;
    }
    Ok(StudyOutcome { proposal_sd, pilot, chains })
}
