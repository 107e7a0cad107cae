use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{io_error, tag, write_file, ExperimentConfig, HarnessError, ModelConfig};
use crate::fk::run_smc;
use crate::models::{
    simulate_lgssm, simulate_msv, simulate_nlobs, write_sidecar, Dataset, LgssmModel, LgssmParams, MsvModel,
    NlObsModel, NlObsParams,
};
use crate::rng::RngStreams;
use crate::schemes::{train, TrainingRun};
use crate::twist::{GaussianReference, TwistPolicy, TwistedModel};

/// Dataset of a single-model block, simulated with `ChaCha8Rng::seed_from_u64(seed)`.
pub(crate) fn simulate_dataset(model: &ModelConfig, seed: u64) -> Result<Dataset, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match model {
        ModelConfig::Nlobs { alpha, sigma_x2, sigma_y2, horizon, observation } => {
            let params = NlObsParams { alpha: *alpha, sigma_x2: *sigma_x2, sigma_y2: *sigma_y2, horizon: *horizon };
            params.validate()?;
            let (xs, ys) = simulate_nlobs(&params, *observation, None, &mut rng);
            Ok(Dataset {
                latent: Some(xs.into_iter().map(|x| vec![x]).collect()),
                observations: ys.into_iter().map(|y| vec![y]).collect(),
            })
        }
        ModelConfig::Lgssm { a, q, r, p1, horizon } => {
            let (xs, ys) = simulate_lgssm(&LgssmParams::scalar(*a, *q, *r, *p1), *horizon, &mut rng)?;
            Ok(Dataset { latent: Some(xs), observations: ys })
        }
        ModelConfig::Msv { fx: Some(_), .. } => {
            Err(HarnessError::Config("an exchange-rate model block cannot be simulated; drop `fx`".into()))
        }
        ModelConfig::Msv { truth, horizon, fx: None } => {
            let (xs, ys) = simulate_msv(truth, *horizon, &mut rng)?;
            Ok(Dataset { latent: Some(xs), observations: ys })
        }
    }
}

/// Reference model for `observations`, using the parameters of the block.
pub(crate) fn build_reference(
    model: &ModelConfig,
    observations: Vec<Vec<f64>>,
) -> Result<Box<dyn GaussianReference>, HarnessError> {
    Ok(match model {
        ModelConfig::Nlobs { alpha, sigma_x2, sigma_y2, horizon, observation } => {
            if observations.iter().any(|y| y.len() != 1) {
                return Err(HarnessError::Config("the nonlinear observation model needs one y column".into()));
            }
            let params = NlObsParams { alpha: *alpha, sigma_x2: *sigma_x2, sigma_y2: *sigma_y2, horizon: *horizon };
            Box::new(NlObsModel::new(params, *observation, observations.into_iter().map(|y| y[0]).collect())?)
        }
        ModelConfig::Lgssm { a, q, r, p1, .. } => {
            Box::new(LgssmModel::new(LgssmParams::scalar(*a, *q, *r, *p1), observations)?)
        }
        ModelConfig::Msv { truth, .. } => Box::new(MsvModel::new(truth.clone(), observations)?),
    })
}

fn observations(config: &ExperimentConfig) -> Result<Vec<Vec<f64>>, HarnessError> {
    match &config.data {
        Some(path) => Ok(Dataset::read_csv(path).map_err(|e| HarnessError::Config(e.to_string()))?.observations),
        None => Ok(simulate_dataset(&config.model, config.seed)?.observations),
    }
}

/// Writes `dataset.csv` and its sidecar `dataset.meta.json` into the output directory.
pub fn cmd_simulate(config: &ExperimentConfig) -> Result<PathBuf, HarnessError> {
    let dataset = simulate_dataset(&config.model, config.seed)?;
    let dir = &config.output.dir;
    std::fs::create_dir_all(dir).map_err(io_error(dir))?;
    let path = dir.join("dataset.csv");
    write_file(&path, dataset.to_csv_string())?;
    let meta = json!({ "model": config.model, "config_hash": config.hash() });
    write_sidecar(&dir.join("dataset.meta.json"), &meta, config.seed).map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(path)
}

/// One evaluation filter run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub run: usize,
    #[serde(rename = "logZ")]
    pub log_z: Option<f64>,
    pub ess_min: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// `replication.runs` filters under `policy` with `training.n_sample` particles,
/// on the evaluation streams of the seed.
fn evaluate(
    config: &ExperimentConfig,
    reference: &dyn GaussianReference,
    policy: Option<&TwistPolicy>,
) -> Result<Vec<EvalRecord>, HarnessError> {
    let model = match policy {
        Some(p) => TwistedModel::new(reference, p)?,
        None => TwistedModel::bootstrap(reference),
    };
    let streams = RngStreams::from_seed(config.seed).derive(tag::EVAL);
    let hash = config.hash();
    let records: Vec<EvalRecord> = (0..config.replication.runs)
        .into_par_iter()
        .map(|run| {
            let base = EvalRecord { run, log_z: None, ess_min: None, seed: config.seed, config_hash: hash.clone(), error: None };
            match run_smc(&model, config.training.n_sample, &streams.derive(run as u64)) {
                Ok(trace) => EvalRecord { log_z: Some(trace.log_z()), ess_min: Some(trace.ess_min()), ..base },
                Err(e) => EvalRecord { error: Some(e.to_string()), ..base },
            }
        })
        .collect();
    if let Some(err) = records.iter().all(|r| r.error.is_some()).then(|| records[0].error.clone()).flatten() {
        return Err(HarnessError::Numerical(crate::SmcError::Numerical(format!("every evaluation run failed: {err}"))));
    }
    Ok(records)
}

fn jsonl<T: Serialize>(rows: &[T]) -> String {
    rows.iter().map(|r| serde_json::to_string(r).expect("serializable") + "\n").collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub run: TrainingRun,
    pub eval: Vec<EvalRecord>,
}

/// Train `scheme`, then evaluate the final policy. Writes `policy.json`,
/// `train.jsonl`, `failures.jsonl` and `eval.jsonl`.
pub fn cmd_train(config: &ExperimentConfig) -> Result<TrainOutcome, HarnessError> {
    let reference = build_reference(&config.model, observations(config)?)?;
    let streams = RngStreams::from_seed(config.seed).derive(tag::TRAIN);
    let run = train(config.scheme, reference.as_ref(), &config.training, &streams)?;
    let eval = evaluate(config, reference.as_ref(), Some(run.final_policy()))?;
    let dir = &config.output.dir;
    let hash = config.hash();
    write_file(&dir.join("policy.json"), run.final_policy().to_json_string())?;
    let summaries: Vec<_> = run
        .iterations
        .iter()
        .map(|s| {
            let mut v = serde_json::to_value(s).expect("serializable");
            v["scheme"] = json!(config.scheme.name());
            v["seed"] = json!(config.seed);
            v["config_hash"] = json!(hash);
            v
        })
        .collect();
    write_file(&dir.join("train.jsonl"), jsonl(&summaries))?;
    write_file(&dir.join("failures.jsonl"), jsonl(&run.failures))?;
    write_file(&dir.join("eval.jsonl"), jsonl(&eval))?;
    Ok(TrainOutcome { run, eval })
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub records: Vec<EvalRecord>,
}

/// Filter with the policy file of the config (bootstrap when absent); writes `filter.jsonl`.
pub fn cmd_filter(config: &ExperimentConfig) -> Result<FilterOutcome, HarnessError> {
    let reference = build_reference(&config.model, observations(config)?)?;
    let policy = match &config.policy {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_error(path))?;
            Some(TwistPolicy::from_json_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    let records = evaluate(config, reference.as_ref(), policy.as_ref())?;
    write_file(&config.output.dir.join("filter.jsonl"), jsonl(&records))?;
    Ok(FilterOutcome { records })
}
