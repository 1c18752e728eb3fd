//! State transition models driven by IMU inputs.

use nalgebra::{SMatrix, Vector3};

use super::state::{vector_to_state, InputVector, StateVector, ANGLE_STATES};
use super::FusionError;
use crate::geo::EarthModel;
use crate::ins::{mechanize_increment, ImuSample};

/// `x_{k+1} = f(x_k, u_k)` with `u = [gyro; accel]`.
///
/// Models provide the increment `f(x, u) - x` so that differences between nearby
/// trajectories are formed on small numbers.
pub trait TransitionModel {
    /// `f(x, u) - x`, angle components wrapped to `(-pi, pi]`.
    fn increment(&self, x: &StateVector, u: &InputVector, dt: f64) -> Result<StateVector, FusionError>;

    /// State components that are angles and must be wrapped when differenced.
    fn angle_states(&self) -> &[usize];

    fn propagate(&self, x: &StateVector, u: &InputVector, dt: f64) -> Result<StateVector, FusionError> {
        Ok(x + self.increment(x, u, dt)?)
    }
}

/// Strapdown mechanization as the transition.
#[derive(Debug, Clone, Copy)]
pub struct InsTransition {
    pub earth: EarthModel,
}

impl InsTransition {
    pub fn new(earth: EarthModel) -> Self {
        Self { earth }
    }
}

pub fn imu_to_input(imu: &ImuSample) -> InputVector {
    InputVector::from_column_slice(&[
        imu.gyro[0],
        imu.gyro[1],
        imu.gyro[2],
        imu.accel[0],
        imu.accel[1],
        imu.accel[2],
    ])
}

impl TransitionModel for InsTransition {
    fn increment(&self, x: &StateVector, u: &InputVector, dt: f64) -> Result<StateVector, FusionError> {
        let nav = vector_to_state(x)?;
        let imu = ImuSample::new(
            0.0,
            Vector3::new(u[3], u[4], u[5]),
            Vector3::new(u[0], u[1], u[2]),
        );
        let inc = mechanize_increment(&nav, &imu, dt, &self.earth)?;
        let mut d = StateVector::zeros();
        d.fixed_rows_mut::<3>(0).copy_from(&inc.position);
        d.fixed_rows_mut::<3>(3).copy_from(&inc.velocity);
        d.fixed_rows_mut::<3>(6).copy_from(&inc.attitude);
        Ok(d)
    }

    fn angle_states(&self) -> &[usize] {
        &ANGLE_STATES
    }
}

/// `x_{k+1} = x_k + dt (A x_k + B u_k)`; used to check the filters against the closed
/// form Kalman filter.
#[derive(Debug, Clone, Copy)]
pub struct LinearTransition {
    pub a: SMatrix<f64, 9, 9>,
    pub b: SMatrix<f64, 9, 6>,
}

impl LinearTransition {
    pub fn state_jacobian(&self, dt: f64) -> SMatrix<f64, 9, 9> {
        SMatrix::<f64, 9, 9>::identity() + self.a * dt
    }

    pub fn input_jacobian(&self, dt: f64) -> SMatrix<f64, 9, 6> {
        self.b * dt
    }
}

impl TransitionModel for LinearTransition {
    fn increment(&self, x: &StateVector, u: &InputVector, dt: f64) -> Result<StateVector, FusionError> {
        Ok((self.a * x + self.b * u) * dt)
    }

    fn angle_states(&self) -> &[usize] {
        &[]
    }
}
