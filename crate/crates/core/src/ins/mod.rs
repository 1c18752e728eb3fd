//! Strapdown inertial navigation in the local-level frame and odometer frame handling.

mod mechanization;
mod sensors;

pub use mechanization::{
    body_to_local, earth_rate_l, gravity_l, mechanize_increment, mechanize_step, odometer_velocity_l,
    transport_rate, NavIncrement, NavState, MAX_STEP,
};
pub(crate) use mechanization::{coriolis, local_rate_in_body};
pub use sensors::{
    corrupt_imu, corrupt_odometer, read_imu_csv, read_odometer_csv, write_imu_csv,
    write_odometer_csv, AxisErrors, ImuErrorModel, ImuSample, OdometerErrorModel,
    OdometerSample, DEFAULT_DRIFT_TAU,
};

use thiserror::Error;

use crate::geo::GeoError;

#[derive(Debug, Error)]
pub enum InsError {
    #[error("latitude {0} rad is too close to a pole for the transport rate")]
    LatitudeSingularity(f64),
    #[error("integration step {0} s outside (0, 0.1]")]
    InvalidStep(f64),
    #[error("timestamps not strictly increasing at row {index} (t = {t})")]
    StreamOrdering { index: usize, t: f64 },
    #[error("IMU error model has negative sigmas or non-positive correlation times")]
    InvalidErrorModel,
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
