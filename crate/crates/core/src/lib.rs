//! Time-of-arrival estimation for impulse-radio UWB receivers: pulse and
//! channel simulation, matched-filter and energy detectors, their analytic
//! statistics, and Kalman fusion of several low-rate energy detectors.

pub mod channel;
pub mod config;
pub mod detectors;
pub mod error;
pub mod experiments;
pub mod fusion;
pub mod report;
pub mod rng;
pub mod signal;
pub mod stats;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
