pub mod augment;
pub mod backtest;
pub mod config;
pub mod dataset;
pub mod error;
pub mod fracdiff;
pub mod labeling;
pub mod market_data;
pub mod metrics;
pub mod pipeline;
pub mod sae;
pub mod seeds;
pub mod synthetic;
pub mod walkforward;

pub use error::{Error, ErrorKind, Result};
