//! Benchmark state-space models, simulators, the Kalman oracle and data loading.

mod dataset;
mod fx;
mod lgssm;
mod msv;
mod nlobs;

pub use dataset::{write_sidecar, Dataset};
pub use fx::{load_fx_returns, read_fx_returns, FxOptions, FxReturns, IngestError};
pub use lgssm::{kalman, simulate_lgssm, KalmanOutput, LgssmModel, LgssmParams};
pub use msv::{simulate_msv, MsvModel, MsvParams};
pub use nlobs::{simulate_nlobs, NlObsModel, NlObsParams, ObservationFn};
