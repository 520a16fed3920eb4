//! Multi-head 1-D convolutional sales forecaster with hand-written
//! backpropagation, Adam, and MAPE/RMSE evaluation.

mod adam;
pub mod checkpoint;
mod config;
mod gradcheck;
mod net;
mod params;
mod train;

pub use adam::AdamState;
pub use config::{AdamConfig, ModelConfig};
pub use gradcheck::{finite_difference_check, random_batch, GradCheck};
pub use net::{ForecastModel, HeadTrace, Trace};
pub use params::{ParamSet, Tensor};
pub use train::{evaluate, mape, rmse, train, EvalResult};

/// Model inputs, each fed to its own convolutional head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Sales,
    Month,
    Weekday,
    Year,
}

pub const HEADS: [Head; 4] = [Head::Sales, Head::Month, Head::Weekday, Head::Year];

impl Head {
    pub fn label(self) -> &'static str {
        match self {
            Head::Sales => "sales",
            Head::Month => "month",
            Head::Weekday => "weekday",
            Head::Year => "year",
        }
    }
}
