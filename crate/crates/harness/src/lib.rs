//! Experiment harness for defocus phase retrieval: configuration,
//! single runs, intensity and defocus-distance sweeps, and retrieval from
//! recorded event streams.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;

pub use config::{ExperimentConfig, Method, MethodSet, Target};
pub use error::{HarnessError, Result};
pub use pipeline::{
    run_delta_sweep, run_from_events, run_intensity_sweep, run_single, simulate_events, Scene,
    ACCEPTABLE_RMSE,
};
