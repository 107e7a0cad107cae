use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::summary::{summarize, GridSummary};
use super::{io_error, tag, write_file, ExperimentConfig, HarnessError};
use crate::models::{simulate_nlobs, NlObsModel, NlObsParams};
use crate::rng::RngStreams;
use crate::schemes::{train, Scheme, SchemeConfig};

/// One `(dataset, scheme, iteration, run)` measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub dataset: usize,
    pub alpha: f64,
    pub sigma_x2: f64,
    pub sigma_y2: f64,
    pub dataset_seed: u64,
    pub scheme: String,
    pub iteration: usize,
    pub run: usize,
    #[serde(rename = "logZ")]
    pub log_z: Option<f64>,
    pub weight_variance: Option<f64>,
    pub ess_min: Option<f64>,
    pub failures: usize,
    pub sample_count: u64,
    pub wall_clock_s: f64,
    pub seed: u64,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDataset {
    pub dataset: usize,
    pub alpha: f64,
    pub sigma_x2: f64,
    pub sigma_y2: f64,
    /// Seed of the simulation; `simulate --seed` with the same parameters regenerates it.
    pub dataset_seed: u64,
    #[serde(skip)]
    pub observations: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub datasets: Vec<GridDataset>,
    pub records: Vec<ResultRecord>,
    pub summary: GridSummary,
}

const SCHEME_CODES: [Scheme; 5] = [Scheme::Bootstrap, Scheme::Forward, Scheme::Backward, Scheme::Online, Scheme::FastOnline];

fn scheme_code(s: Scheme) -> u64 {
    SCHEME_CODES.iter().position(|c| *c == s).expect("listed") as u64
}

/// Simulate every grid dataset. Cells are ordered by `alpha`, then
/// `sigma_x2`, then `sigma_y2`.
pub fn grid_datasets(config: &ExperimentConfig) -> Vec<GridDataset> {
    let g = &config.grid;
    let master = RngStreams::from_seed(config.seed);
    let mut out = Vec::new();
    for &alpha in &g.alpha {
        for &sigma_x2 in &g.sigma_x2 {
            for &sigma_y2 in &g.sigma_y2 {
                for _ in 0..g.datasets_per_cell {
                    let dataset = out.len();
                    let dataset_seed = master.derive2(tag::DATA, dataset as u64).stream(0).next_u64();
                    let params = NlObsParams { alpha, sigma_x2, sigma_y2, horizon: g.horizon };
                    let mut rng = ChaCha8Rng::seed_from_u64(dataset_seed);
                    let (_, observations) = simulate_nlobs(&params, g.observation, None, &mut rng);
                    out.push(GridDataset { dataset, alpha, sigma_x2, sigma_y2, dataset_seed, observations });
                }
            }
        }
    }
    out
}

fn run_task(
    config: &ExperimentConfig,
    hash: &str,
    ds: &GridDataset,
    model: &NlObsModel,
    scheme: Scheme,
    run: usize,
) -> Vec<ResultRecord> {
    let training = match scheme {
        Scheme::Bootstrap => SchemeConfig { n_sample: config.replication.n_bootstrap, ..config.training.clone() },
        _ => config.training.clone(),
    };
    let streams = RngStreams::from_seed(config.seed).derive(tag::GRID).derive2(ds.dataset as u64, scheme_code(scheme)).derive(run as u64);
    let start = Instant::now();
    let result = train(scheme, model, &training, &streams);
    let wall_clock_s = start.elapsed().as_secs_f64();
    let record = |iteration: usize| ResultRecord {
        dataset: ds.dataset,
        alpha: ds.alpha,
        sigma_x2: ds.sigma_x2,
        sigma_y2: ds.sigma_y2,
        dataset_seed: ds.dataset_seed,
        scheme: scheme.name().to_string(),
        iteration,
        run,
        log_z: None,
        weight_variance: None,
        ess_min: None,
        failures: 0,
        sample_count: 0,
        wall_clock_s,
        seed: config.seed,
        config_hash: hash.to_string(),
        error: None,
    };
    let finite = |v: f64| Some(v).filter(|x| x.is_finite());
    match result {
        Ok(run) => run
            .iterations
            .iter()
            .map(|s| ResultRecord {
                log_z: finite(s.log_z),
                weight_variance: finite(s.weight_variance),
                ess_min: finite(s.ess_min),
                failures: s.failures,
                sample_count: s.sample_count,
                ..record(s.iteration)
            })
            .collect(),
        // a failed run still yields one record per iteration it would have produced
        Err(e) => {
            let last = if scheme == Scheme::Bootstrap { 0 } else { training.iterations };
            (0..=last).map(|l| ResultRecord { error: Some(e.to_string()), ..record(l) }).collect()
        }
    }
}

/// Run every scheme `runs` times on every grid dataset. With `out`, records
/// are appended to `records.jsonl` as tasks finish and the summary files are
/// written at the end; one failing run never stops the grid.
pub fn run_grid(config: &ExperimentConfig, out: Option<&Path>) -> Result<GridOutcome, HarnessError> {
    let hash = config.hash();
    let datasets = grid_datasets(config);
    let models = datasets
        .iter()
        .map(|ds| {
            let params = NlObsParams { alpha: ds.alpha, sigma_x2: ds.sigma_x2, sigma_y2: ds.sigma_y2, horizon: config.grid.horizon };
            NlObsModel::new(params, config.grid.observation, ds.observations.clone())
        })
        .collect::<crate::Result<Vec<_>>>()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let sink = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(io_error(dir))?;
            let meta: String = datasets.iter().map(|d| serde_json::to_string(d).expect("serializable") + "\n").collect();
            write_file(&dir.join("datasets.jsonl"), meta)?;
            let path = dir.join("records.jsonl");
            let file = std::fs::File::create(&path).map_err(io_error(&path))?;
            Some((path, Mutex::new(std::io::BufWriter::new(file))))
        }
        None => None,
    };
    let mut tasks = Vec::new();
    for ds in 0..datasets.len() {
        for &scheme in &config.grid.schemes {
            for run in 0..config.replication.runs {
                tasks.push((ds, scheme, run));
            }
        }
    }
    let per_task: Vec<Vec<ResultRecord>> = tasks
        .par_iter()
        .map(|&(ds, scheme, run)| {
            let records = run_task(config, &hash, &datasets[ds], &models[ds], scheme, run);
            if let Some((path, writer)) = &sink {
                let mut w = writer.lock().expect("writer lock");
                for r in &records {
                    let line = serde_json::to_string(r).expect("serializable");
                    writeln!(w, "{line}").map_err(io_error(path))?;
                }
            }
            Ok(records)
        })
        .collect::<Result<_, HarnessError>>()?;
    if let Some((path, writer)) = sink {
        writer.into_inner().expect("writer lock").flush().map_err(io_error(&path))?;
    }
    let mut records: Vec<ResultRecord> = per_task.into_iter().flatten().collect();
    records.sort_by(|a, b| (a.dataset, &a.scheme, a.iteration, a.run).cmp(&(b.dataset, &b.scheme, b.iteration, b.run)));
    let summary = summarize(&records);
    if let Some(dir) = out {
        write_summary(dir, &summary)?;
    }
    Ok(GridOutcome { datasets, records, summary })
}

/// `summary.json`, `summary_datasets.csv` and `proportions.csv` in `dir`.
pub fn write_summary(dir: &Path, summary: &GridSummary) -> Result<(), HarnessError> {
    write_file(&dir.join("summary.json"), serde_json::to_string_pretty(summary).expect("serializable"))?;
    write_file(&dir.join("summary_datasets.csv"), summary.datasets_csv())?;
    write_file(&dir.join("proportions.csv"), summary.proportions_csv())
}
