//! Loosely coupled fusion of INS prediction with 5G position fixes and odometer
//! velocity: unscented filter, EKF benchmark, measurement exclusion and assessment.

mod exclusion;
mod predict;
mod runner;
mod state;
mod transition;
mod update;

pub use exclusion::{
    assess_sbr_fix, exclude_measurements, motion_bounds, Assessment, AssessmentConfig,
    BoundKind, ExclusionContext, ExclusionOutcome, PathRouting,
};
pub use predict::{
    ekf_predict, ekf_predict_vector, input, predict, sigma_point_count, transition_jacobians,
    ukf_predict_vector, SigmaWeights, UkfParams,
};
pub use runner::{
    run_filter, source, write_output_csv, ClassifierKind, FilterEpoch, FilterKind,
    FixCovariance, FusionConfig, FusionInputs, FusionRun, FusionStats, SbrDecision,
};
pub use state::{
    condition_covariance, covariance_sqrt, nees, state_to_vector, vector_to_state,
    wrapped_difference, FilterState, InitialUncertainty, InputVector, ProcessNoise,
    StateMatrix, StateVector, ANGLE_STATES, PSD_TOLERANCE,
};
pub use transition::{imu_to_input, InsTransition, LinearTransition, TransitionModel};
pub use update::{innovation_statistic, update, MeasurementBundle, MeasurementMatrix, MeasurementVector};

use thiserror::Error;

use crate::geo::GeoError;
use crate::ins::InsError;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("covariance is not positive semidefinite (eigenvalue {0})")]
    CovarianceNotPsd(f64),
    #[error("innovation covariance is singular")]
    SingularInnovationCovariance,
    #[error("innovation is not finite")]
    NonFiniteInnovation,
    #[error("stream timestamps out of order at t = {t}")]
    StreamOrdering { t: f64 },
    #[error("observation refers to unknown base station {0}")]
    UnknownStation(u32),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Ins(#[from] InsError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
