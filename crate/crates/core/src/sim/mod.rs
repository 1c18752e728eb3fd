//! Measurement generator: 2.5D urban scenes, ground-truth drives, geometric ray
//! tracing and sensor corruption, with the truth labels kept alongside.

mod noise;
pub mod presets;
mod scenario;
pub mod scene;
pub mod trace;
pub mod trajectory;

pub use noise::{corrupt_channel, ChannelNoise};
pub use scenario::{trace_trajectory, CleanRun, EpochPaths, Measurements, Scenario, ServingPolicy};
pub use scene::{place_base_stations, Building, Facade, PlacementConfig, Scene, SceneOrigin, StationSite};
pub use trace::{trace_paths, PathRecord, TraceConfig};
pub use trajectory::{generate_trajectory, read_truth_csv, write_truth_csv, StopSpec, TrajectorySpec, TruthSample, TruthTrajectory};

use thiserror::Error;

use crate::geo::GeoError;
use crate::ins::InsError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("base-station placement failed: {0}")]
    Placement(String),
    #[error("lateral acceleration {lateral_accel:.2} m/s^2 exceeds the {cap:.2} m/s^2 cap")]
    InfeasibleDynamics { lateral_accel: f64, cap: f64 },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ins(#[from] InsError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
