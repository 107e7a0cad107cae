pub mod error;
pub mod fk;
pub mod harness;
pub mod learning;
pub mod linalg;
pub mod models;
pub mod pmmh;
pub mod rng;
pub mod schemes;
pub mod twist;

pub use error::{Result, SmcError};
