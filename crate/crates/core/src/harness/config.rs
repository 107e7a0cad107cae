use std::path::PathBuf;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::models::{MsvParams, NlObsParams, ObservationFn};
use crate::pmmh::{Estimator, EstimatorSpec, MInit};
use crate::schemes::{Scheme, SchemeConfig};

/// Everything a run needs. Unknown keys are rejected at every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Model of the single-shot commands.
    pub model: ModelConfig,
    /// Dataset CSV for `train` and `filter`; simulated from `model` when absent.
    pub data: Option<PathBuf>,
    /// Policy file for `filter`; the identity policy when absent.
    pub policy: Option<PathBuf>,
    pub scheme: Scheme,
    pub training: SchemeConfig,
    pub replication: Replication,
    pub grid: GridConfig,
    pub pmmh: PmmhStudy,
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Nlobs {
        alpha: f64,
        sigma_x2: f64,
        sigma_y2: f64,
        horizon: usize,
        #[serde(default)]
        observation: ObservationFn,
    },
    /// Scalar linear-Gaussian model `x_t = a x_{t-1} + N(0, q)`, `y_t = x_t + N(0, r)`, `x_1 ~ N(0, p1)`.
    Lgssm { a: f64, q: f64, r: f64, p1: f64, horizon: usize },
    /// Stochastic volatility, simulated from `truth` or read from an exchange-rate file.
    Msv {
        truth: MsvParams,
        horizon: usize,
        #[serde(default)]
        fx: Option<FxConfig>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct FxConfig {
    pub path: PathBuf,
    pub columns: Vec<String>,
    /// ISO dates bounding the rates used.
    pub from: Option<String>,
    pub to: Option<String>,
    pub drop_missing: bool,
    pub drop_currency: Option<String>,
}

impl Default for FxConfig {
    fn default() -> Self {
        FxConfig { path: PathBuf::new(), columns: Vec::new(), from: None, to: None, drop_missing: true, drop_currency: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct Replication {
    /// Independent runs per (dataset, scheme) and evaluation runs of `train`/`filter`.
    pub runs: usize,
    /// Bootstrap particles in the grid study.
    pub n_bootstrap: usize,
}

impl Default for Replication {
    fn default() -> Self {
        Replication { runs: 16, n_bootstrap: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub alpha: Vec<f64>,
    pub sigma_x2: Vec<f64>,
    pub sigma_y2: Vec<f64>,
    pub datasets_per_cell: usize,
    pub horizon: usize,
    pub observation: ObservationFn,
    pub schemes: Vec<Scheme>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            alpha: vec![0.95, 0.99],
            sigma_x2: vec![0.05, 0.10, 0.15],
            sigma_y2: vec![0.005, 0.055],
            datasets_per_cell: 5,
            horizon: 100,
            observation: ObservationFn::ExpPlusLinear,
            schemes: vec![Scheme::Bootstrap, Scheme::Forward, Scheme::Backward],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct EstimatorEntry {
    pub label: String,
    pub spec: EstimatorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct PmmhStudy {
    pub model: ModelConfig,
    pub estimators: Vec<EstimatorEntry>,
    pub steps: usize,
    pub window_every: usize,
    pub window_replicates: usize,
    pub checkpoint_every: usize,
    /// Random-walk scales on the transformed parameters; tuned by a pilot run when absent.
    pub proposal_sd: Option<Vec<f64>>,
    pub base_sd: f64,
    pub pilot_steps: usize,
    pub pilot_multipliers: Vec<f64>,
    pub target_acceptance: f64,
    /// Label of the estimator driving the pilot run; the first entry when absent.
    pub pilot_estimator: Option<String>,
    pub m_init: MInit,
}

fn smc_entry(label: &str, estimator: Estimator, n_sample: usize, iterations: usize, n_train: usize) -> EstimatorEntry {
    let scheme = SchemeConfig { n_sample, n_train, iterations, ..SchemeConfig::default() };
    EstimatorEntry { label: label.into(), spec: EstimatorSpec { estimator, n_bootstrap: n_sample, scheme } }
}

impl Default for PmmhStudy {
    fn default() -> Self {
        PmmhStudy {
            model: ModelConfig::Msv { truth: desk_msv_truth(), horizon: 60, fx: None },
            estimators: vec![
                smc_entry("bootstrap", Estimator::Bootstrap, 600, 0, 0),
                smc_entry("forward", Estimator::Forward, 100, 2, 100),
                smc_entry("backward", Estimator::Backward, 100, 2, 100),
            ],
            steps: 2000,
            window_every: 100,
            window_replicates: 10,
            checkpoint_every: 500,
            proposal_sd: None,
            base_sd: 0.05,
            pilot_steps: 200,
            pilot_multipliers: vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
            target_acceptance: 0.25,
            pilot_estimator: Some("forward".into()),
            m_init: MInit::LogVariance,
        }
    }
}

fn desk_msv_truth() -> MsvParams {
    MsvParams { m: vec![-1.0, -0.5, 0.0], alpha: vec![0.9; 3], sigma2: vec![0.1; 3], rho: vec![0.3, 0.3] }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub dir: PathBuf,
}

impl Default for Output {
    fn default() -> Self {
        Output { dir: PathBuf::from("out") }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            model: ModelConfig::Nlobs {
                alpha: 0.95,
                sigma_x2: 0.1,
                sigma_y2: 0.005,
                horizon: 100,
                observation: ObservationFn::ExpPlusLinear,
            },
            data: None,
            policy: None,
            scheme: Scheme::Forward,
            training: SchemeConfig::default(),
            replication: Replication::default(),
            grid: GridConfig::default(),
            pmmh: PmmhStudy::default(),
            output: Output::default(),
        }
    }
}

impl ModelConfig {
    pub fn nlobs_params(&self) -> Option<(NlObsParams, ObservationFn)> {
        match *self {
            ModelConfig::Nlobs { alpha, sigma_x2, sigma_y2, horizon, observation } => {
                Some((NlObsParams { alpha, sigma_x2, sigma_y2, horizon }, observation))
            }
            _ => None,
        }
    }
}

/// A named bundle of overrides. Paper-scale presets need an explicit opt-in.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub patch: Value,
    pub paper_scale: bool,
}

pub const PRESET_NAMES: [&str; 4] = ["desk", "nlobs-paper", "msv-d8", "msv-d7"];

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Forward and backward estimators for each `(L, N_train)` pair plus the bootstrap filter.
fn msv_estimators(n_bootstrap: usize, n_sample: usize, pairs: &[(usize, usize)]) -> Vec<EstimatorEntry> {
    let mut out = vec![smc_entry("bootstrap", Estimator::Bootstrap, n_bootstrap, 0, 0)];
    for (estimator, tag) in [(Estimator::Forward, "forward"), (Estimator::Backward, "backward")] {
        for &(l, n_train) in pairs {
            out.push(smc_entry(&format!("{tag}-L{l}"), estimator, n_sample, l, n_train));
        }
    }
    out
}

fn msv_paper_patch(d: usize, drop: Option<&str>, estimators: Vec<EstimatorEntry>) -> Value {
    let truth = MsvParams { m: vec![0.0; d], alpha: vec![0.9; d], sigma2: vec![0.2; d], rho: vec![0.25; d - 1] };
    json!({
        "pmmh": {
            "model": {
                "kind": "msv",
                "truth": truth,
                "horizon": 102,
                "fx": { "from": "2000-02-01", "to": "2008-08-31", "drop_currency": drop },
            },
            "estimators": estimators,
            "steps": 120_000,
            "pilot_estimator": "forward-L4",
        }
    })
}

pub fn preset(name: &str) -> Result<Preset, HarnessError> {
    let (patch, paper_scale) = match name {
        "desk" => (json!({}), false),
        "nlobs-paper" => (
            json!({
                "grid": {
                    "alpha": [0.9, 0.95, 0.98, 0.99, 0.995],
                    "sigma_x2": linspace(0.05, 0.15, 11),
                    "sigma_y2": linspace(0.005, 0.055, 6),
                    "datasets_per_cell": 10,
                    "horizon": 100,
                },
                "replication": { "runs": 64, "n_bootstrap": 1024 },
                "training": { "n_sample": 1024, "n_train": 1024, "iterations": 10 },
            }),
            true,
        ),
        "msv-d8" => (msv_paper_patch(8, None, msv_estimators(4500, 600, &[(8, 100), (4, 200), (2, 400)])), true),
        "msv-d7" => (msv_paper_patch(7, Some("INR"), msv_estimators(3000, 800, &[(8, 50), (4, 100), (2, 200)])), true),
        other => {
            return Err(HarnessError::Config(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(Preset { name: PRESET_NAMES.iter().find(|n| **n == name).expect("listed"), patch, paper_scale })
}

/// Recursive merge of `patch` into `base`. Objects merge key by key, except
/// that a tagged object whose `kind` changes is replaced wholesale.
pub fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            let kind_changes = matches!((b.get("kind"), p.get("kind")), (Some(x), Some(y)) if x != y);
            if kind_changes {
                *b = p.clone();
                return;
            }
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) if v.is_object() && slot.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// Set the dotted `path` in `value`, creating objects along the way.
pub fn set_path(value: &mut Value, path: &str, new: Value) -> Result<(), HarnessError> {
    let mut patch = new;
    for key in path.rsplit('.') {
        if key.is_empty() {
            return Err(HarnessError::Config(format!("bad key path {path:?}")));
        }
        patch = json!({ key: patch });
    }
    merge(value, &patch);
    Ok(())
}

/// Layers applied in order: defaults, preset, file, then individual overrides.
pub fn resolve(
    preset: Option<&Preset>,
    file: Option<&Value>,
    overrides: &[(String, Value)],
) -> Result<ExperimentConfig, HarnessError> {
    let mut value = serde_json::to_value(ExperimentConfig::default()).expect("serializable");
    if let Some(p) = preset {
        merge(&mut value, &p.patch);
    }
    if let Some(f) = file {
        if !f.is_object() {
            return Err(HarnessError::Config("the config file must hold a JSON object".into()));
        }
        merge(&mut value, f);
    }
    for (path, v) in overrides {
        set_path(&mut value, path, v.clone())?;
    }
    let config: ExperimentConfig = serde_json::from_value(value).map_err(|e| HarnessError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.training.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let g = &self.grid;
        if g.alpha.is_empty() || g.sigma_x2.is_empty() || g.sigma_y2.is_empty() || g.datasets_per_cell == 0 {
            return Err(HarnessError::Config("grid axes and datasets_per_cell must be nonempty".into()));
        }
        if self.replication.runs == 0 || self.replication.n_bootstrap == 0 {
            return Err(HarnessError::Config("replication.runs and n_bootstrap must be positive".into()));
        }
        let p = &self.pmmh;
        if p.window_every > 0 && p.window_replicates < 2 {
            return Err(HarnessError::Config("pmmh.window_replicates must be at least 2".into()));
        }
        let mut labels: Vec<&str> = p.estimators.iter().map(|e| e.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) || labels.iter().any(|l| l.is_empty() || l.contains(['/', ','])) {
            return Err(HarnessError::Config("estimator labels must be unique, nonempty, without '/' or ','".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("serializable");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// JSON schema of the config file, as published in `schema/experiment-config.schema.json`.
pub fn config_schema() -> Value {
    serde_json::to_value(schemars::schema_for!(ExperimentConfig)).expect("serializable")
}
