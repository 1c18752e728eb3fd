//! Experiment orchestration and evaluation: error statistics, CDFs, ablation tables.

mod compare;
mod experiment;
pub mod presets;
mod report;

pub use compare::{compare, compare_experiments, ComparisonRow, ComparisonTable, Winner};
pub use experiment::{
    apply_env_overrides, load_config, read_positions_csv, run_experiment, ExperimentConfig,
    ExperimentOutcome, ImuPreset, SeedResult, run_seed, ENV_PREFIX,
};
pub use report::{compute_error_report, EpochError, ErrorReport, Stamped, THRESHOLDS};

use std::path::PathBuf;

use thiserror::Error;

use crate::fusion::FusionError;
use crate::geo::GeoError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("empty series")]
    EmptySeries,
    #[error("series is not strictly increasing in time at t = {t}")]
    Unsorted { t: f64 },
    #[error("no truth sample within half a sampling interval of t = {t}")]
    Unaligned { t: f64 },
    #[error("error at t = {t} is negative or not finite")]
    InvalidError { t: f64 },
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }
}
