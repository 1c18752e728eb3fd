//! Geodetic and frame mathematics shared by the rest of the crate.

mod earth;
mod frames;
mod rotation;

pub use earth::{
    curvature_radii, EarthModel, GravityModel, WGS84_ECC_SQ, WGS84_ROTATION_RATE,
    WGS84_SEMI_MAJOR,
};
pub use frames::{enu_to_geodetic, geodetic_to_enu, GeodeticPosition, LocalFrame};
pub use rotation::{
    attitude_from_quaternion, attitude_from_rotation, normalize_quaternion, omega_matrix,
    propagate_quaternion, quaternion_from_attitude, quaternion_from_rotation,
    rotation_from_attitude, rotation_from_quaternion, skew, wrap_pi, wrap_two_pi, Attitude,
    Quaternion, RotationMatrix,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("rotation matrix has no well-defined quaternion")]
    DegenerateRotation,
    #[error("pitch too close to +/-90 degrees to separate roll and azimuth")]
    GimbalProximity,
    #[error("quaternion norm is zero")]
    ZeroQuaternion,
    #[error("invalid geodetic position (lat {lat}, lon {lon}, alt {alt})")]
    InvalidPosition { lat: f64, lon: f64, alt: f64 },
}
