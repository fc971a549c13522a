//! Experiment orchestration: configs, tuning runs, baselines, noise sweeps
//! and reports.

pub mod cli;
mod config;
mod report;
mod run;

use thiserror::Error;

use crate::data::DataError;

pub use config::{default_noise_grid, DatasetRef, RunConfig};
pub use report::{load_run, markdown, report, SummaryRow};
pub use run::{
    curves_csv, mean_std, noise_sweep, run_method, run_method_on, write_run, write_sweep, Method, RepeatResult, RunReport,
    Summary, SweepDelta, SweepReport, SweepRow,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dataset error: {0}")]
    Dataset(#[from] DataError),
    #[error("I/O error: {0}")]
    Io(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Dataset(_) => 3,
            HarnessError::Io(_) => 1,
        }
    }
}
