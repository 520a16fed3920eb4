pub mod config;
pub mod data;
pub mod divergence;
pub mod error;
pub mod forecaster;
pub mod kv;
pub mod netsim;
pub mod pipeline;
pub mod projections;
pub mod report;
pub mod rng;
pub mod stats;
pub mod tensor;
pub mod transfer;

pub use config::RunConfig;
pub use error::{Error, Result};
