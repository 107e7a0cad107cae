//! Experiment plumbing behind the command-line tool: configuration, single-shot
//! commands, the nonlinear-observation grid study and the stochastic
//! volatility PMMH study.

mod config;
mod grid;
mod single;
mod study;
mod summary;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::models::IngestError;
use crate::pmmh::PmmhError;
use crate::SmcError;

pub use config::{
    config_schema, merge, preset, resolve, set_path, EstimatorEntry, ExperimentConfig, FxConfig, GridConfig, ModelConfig, Output,
    PmmhStudy, Preset, Replication, PRESET_NAMES,
};
pub use grid::{grid_datasets, run_grid, write_summary, GridDataset, GridOutcome, ResultRecord};
pub use single::{cmd_filter, cmd_simulate, cmd_train, EvalRecord, FilterOutcome, TrainOutcome};
pub use study::{run_msv_pmmh, ChainReport, StudyOutcome};
pub use summary::{read_records, summarize, CellStatus, DatasetSummary, GridSummary, ProportionSummary};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("numerical failure: {0}")]
    Numerical(#[from] SmcError),
    #[error(transparent)]
    Pmmh(#[from] PmmhError),
}

impl HarnessError {
    /// 2 for configuration and input problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Numerical(_) | HarnessError::Pmmh(PmmhError::InitialEstimate(_)) => 3,
            _ => 2,
        }
    }
}

pub(crate) fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_error(dir))?;
    }
    std::fs::write(path, contents).map_err(io_error(path))
}

/// Stream tags under the run seed.
pub(crate) mod tag {
    pub const DATA: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const EVAL: u64 = 3;
    pub const GRID: u64 = 4;
    pub const PMMH: u64 = 5;
    pub const PILOT: u64 = 6;
}
