//! Local-level frame strapdown mechanization.
//!
//! One step advances the navigation state over `dt` using the IMU sample that closes
//! the interval. Attitude is integrated first (first-order quaternion update), then
//! velocity (specific force rotated with the mean of the old and new attitude,
//! Coriolis and transport terms from the old state), then position (trapezoid on the
//! velocity with curvature radii from the old state).

use nalgebra::{Matrix3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::{ImuSample, InsError};
use crate::geo::{
    attitude_from_quaternion, omega_matrix, propagate_quaternion, quaternion_from_attitude,
    rotation_from_attitude, rotation_from_quaternion, skew, Attitude, EarthModel,
    GeodeticPosition, GeoError, Quaternion,
};

/// Latitude margin from the poles below which `tan(lat)` is rejected.
const POLE_MARGIN: f64 = 1e-6;
/// Largest accepted step, seconds.
pub const MAX_STEP: f64 = 0.1;

/// Position, ENU velocity and attitude with the quaternion kept in step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavState {
    pub position: GeodeticPosition,
    /// East, north, up, m/s.
    pub velocity: Vector3<f64>,
    pub attitude: Attitude,
    pub quaternion: Quaternion,
}

impl NavState {
    /// Builds a state whose quaternion is derived from `attitude`.
    pub fn new(
        position: GeodeticPosition,
        velocity: Vector3<f64>,
        attitude: Attitude,
    ) -> Result<Self, GeoError> {
        Ok(Self {
            position,
            velocity,
            attitude,
            quaternion: quaternion_from_attitude(&attitude)?,
        })
    }

    /// Builds a state from a quaternion, deriving the Euler angles.
    pub fn from_quaternion(
        position: GeodeticPosition,
        velocity: Vector3<f64>,
        quaternion: Quaternion,
    ) -> Result<Self, GeoError> {
        Ok(Self {
            position,
            velocity,
            attitude: attitude_from_quaternion(&quaternion)?,
            quaternion,
        })
    }
}

/// Earth rotation rate resolved in the local-level frame.
pub fn earth_rate_l(lat: f64, earth: &EarthModel) -> Vector3<f64> {
    Vector3::new(
        0.0,
        earth.rotation_rate * lat.cos(),
        earth.rotation_rate * lat.sin(),
    )
}

/// Rotation rate of the local-level frame relative to the Earth.
pub fn transport_rate(
    velocity: &Vector3<f64>,
    lat: f64,
    h: f64,
    earth: &EarthModel,
) -> Result<Vector3<f64>, InsError> {
    if lat.abs() > std::f64::consts::FRAC_PI_2 - POLE_MARGIN {
        return Err(InsError::LatitudeSingularity(lat));
    }
    let (rn, rm) = earth.curvature_radii(lat);
    Ok(Vector3::new(
        -velocity[1] / (rm + h),
        velocity[0] / (rn + h),
        velocity[0] * lat.tan() / (rn + h),
    ))
}

/// Gravity vector in the local-level frame, `(0, 0, -g)`.
pub fn gravity_l(lat: f64, h: f64, earth: &EarthModel) -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -earth.gravity(lat, h))
}

/// Rotates a body-frame vector into the local-level frame.
pub fn body_to_local(vec_b: &Vector3<f64>, att: &Attitude) -> Vector3<f64> {
    rotation_from_attitude(att).apply(vec_b)
}

/// Local-level velocity implied by a forward wheel speed: the second column of the
/// body-to-local rotation scaled by the speed.
pub fn odometer_velocity_l(v_odo: f64, att: &Attitude) -> Vector3<f64> {
    let (sp, cp) = att.pitch.sin_cos();
    let (sa, ca) = att.azimuth.sin_cos();
    Vector3::new(sa * cp, ca * cp, sp) * v_odo
}

/// Body rate of the local-level frame relative to inertial space, resolved in b.
pub(crate) fn local_rate_in_body(
    state: &NavState,
    earth: &EarthModel,
) -> Result<Vector3<f64>, InsError> {
    let lat = state.position.lat;
    let w_ie = earth_rate_l(lat, earth);
    let w_el = transport_rate(&state.velocity, lat, state.position.alt, earth)?;
    let r_bl = rotation_from_quaternion(&state.quaternion);
    Ok(r_bl.matrix().transpose() * (w_ie + w_el))
}

/// Coriolis and transport acceleration `(2 Omega_ie + Omega_el) v`.
pub(crate) fn coriolis(state: &NavState, earth: &EarthModel) -> Result<Vector3<f64>, InsError> {
    let lat = state.position.lat;
    let w_ie = earth_rate_l(lat, earth);
    let w_el = transport_rate(&state.velocity, lat, state.position.alt, earth)?;
    Ok(skew(&(2.0 * w_ie + w_el)) * state.velocity)
}

/// Trapezoidal position update from the old and new local-level velocities.
pub(crate) fn integrate_position(
    pos: &GeodeticPosition,
    v_old: &Vector3<f64>,
    v_new: &Vector3<f64>,
    dt: f64,
    earth: &EarthModel,
) -> GeodeticPosition {
    let (rn, rm) = earth.curvature_radii(pos.lat);
    let v = 0.5 * (v_old + v_new);
    GeodeticPosition {
        lat: pos.lat + v[1] * dt / (rm + pos.alt),
        lon: crate::geo::wrap_pi(pos.lon + v[0] * dt / ((rn + pos.alt) * pos.lat.cos())),
        alt: pos.alt + v[2] * dt,
    }
}

/// Advances `state` by `dt` seconds with the specific force and angular rate in `imu`.
pub fn mechanize_step(
    state: &NavState,
    imu: &ImuSample,
    dt: f64,
    earth: &EarthModel,
) -> Result<NavState, InsError> {
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(InsError::InvalidStep(dt));
    }
    let lat = state.position.lat;
    let h = state.position.alt;

    let w_lb = imu.gyro - local_rate_in_body(state, earth)?;
    let q_new = propagate_quaternion(&state.quaternion, &w_lb, dt)?;

    let r_old = rotation_from_quaternion(&state.quaternion);
    let r_new = rotation_from_quaternion(&q_new);
    let f_l = 0.5 * (r_old.matrix() + r_new.matrix()) * imu.accel;
    let v_dot = f_l - coriolis(state, earth)? + gravity_l(lat, h, earth);
    let v_new = state.velocity + v_dot * dt;

    let position = integrate_position(&state.position, &state.velocity, &v_new, dt, earth);
    Ok(NavState {
        position,
        velocity: v_new,
        attitude: attitude_from_quaternion(&q_new)?,
        quaternion: q_new,
    })
}

/// Change of the navigation state over one step: `(dlat, dlon, dh)`, the velocity
/// change and `(dpitch, droll, dazimuth)`.
///
/// Equal to the difference of consecutive [`mechanize_step`] states, but formed
/// without subtracting nearly equal absolute values, so nearby trajectories can be
/// differenced to far below the rounding level of the states themselves. The input
/// quaternion is taken as exactly unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavIncrement {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: Vector3<f64>,
}

/// Bilinear form `B` with `B(q, q)` the direction-cosine matrix of `q`.
fn rotation_bilinear(p: &Vector4<f64>, r: &Vector4<f64>) -> Matrix3<f64> {
    let s = |i: usize, j: usize| p[i] * r[j] + p[j] * r[i];
    Matrix3::new(
        p[0] * r[0] - p[1] * r[1] - p[2] * r[2] + p[3] * r[3],
        s(0, 1) - s(2, 3),
        s(0, 2) + s(1, 3),
        s(0, 1) + s(2, 3),
        -p[0] * r[0] + p[1] * r[1] - p[2] * r[2] + p[3] * r[3],
        s(1, 2) - s(0, 3),
        s(0, 2) - s(1, 3),
        s(1, 2) + s(0, 3),
        -p[0] * r[0] - p[1] * r[1] + p[2] * r[2] + p[3] * r[3],
    )
}

/// `atan2(y0 + dy, x0 + dx) - atan2(y0, x0)` from the increments.
fn atan2_change(y0: f64, x0: f64, dy: f64, dx: f64) -> f64 {
    (x0 * dy - y0 * dx).atan2(x0 * (x0 + dx) + y0 * (y0 + dy))
}

/// Increment form of [`mechanize_step`].
pub fn mechanize_increment(
    state: &NavState,
    imu: &ImuSample,
    dt: f64,
    earth: &EarthModel,
) -> Result<NavIncrement, InsError> {
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(InsError::InvalidStep(dt));
    }
    let lat = state.position.lat;
    let h = state.position.alt;

    let w_lb = imu.gyro - local_rate_in_body(state, earth)?;
    let q = state.quaternion.as_vector();
    let raw = omega_matrix(&w_lb) * q * (0.5 * dt);
    // (q + raw) / |q + raw| - q with |q| = 1
    let s = 2.0 * q.dot(&raw) + raw.norm_squared();
    let n = (1.0 + s).sqrt();
    let dq = raw / n - q * (s / (n * (1.0 + n)));

    let r = rotation_from_quaternion(&state.quaternion);
    let r = r.matrix();
    let dr = 2.0 * rotation_bilinear(&q, &dq) + rotation_bilinear(&dq, &dq);

    let h0 = r[(0, 1)].hypot(r[(1, 1)]);
    let h1 = (r[(0, 1)] + dr[(0, 1)]).hypot(r[(1, 1)] + dr[(1, 1)]);
    if h1 < 1e-9 {
        return Err(InsError::Geo(GeoError::GimbalProximity));
    }
    let dh0 = (dr[(0, 1)] * (2.0 * r[(0, 1)] + dr[(0, 1)]) + dr[(1, 1)] * (2.0 * r[(1, 1)] + dr[(1, 1)]))
        / (h0 + h1);
    let attitude = Vector3::new(
        atan2_change(r[(2, 1)], h0, dr[(2, 1)], dh0),
        -atan2_change(r[(2, 0)], r[(2, 2)], dr[(2, 0)], dr[(2, 2)]),
        atan2_change(r[(0, 1)], r[(1, 1)], dr[(0, 1)], dr[(1, 1)]),
    );

    let f_l = (r + 0.5 * dr) * imu.accel;
    let v_dot = f_l - coriolis(state, earth)? + gravity_l(lat, h, earth);
    let dv = v_dot * dt;

    let (rn, rm) = earth.curvature_radii(lat);
    let v = state.velocity + 0.5 * dv;
    let position = Vector3::new(
        v[1] * dt / (rm + h),
        v[0] * dt / ((rn + h) * lat.cos()),
        v[2] * dt,
    );
    Ok(NavIncrement {
        position,
        velocity: dv,
        attitude,
    })
}
