//! Filter state, covariance conditioning and the 9-element PVA vector layout.

use nalgebra::{DMatrix, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::FusionError;
use crate::geo::{wrap_pi, Attitude, GeodeticPosition};
use crate::ins::NavState;

pub type StateVector = SVector<f64, 9>;
pub type StateMatrix = SMatrix<f64, 9, 9>;
pub type InputVector = SVector<f64, 6>;

/// Indices of the attitude components in the state vector.
pub const ANGLE_STATES: [usize; 3] = [6, 7, 8];
/// Tolerance on the smallest eigenvalue of the correlation matrix.
pub const PSD_TOLERANCE: f64 = 1e-9;

/// Flattens a navigation state to `[lat, lon, h, ve, vn, vu, pitch, roll, azimuth]`.
pub fn state_to_vector(nav: &NavState) -> StateVector {
    let p = &nav.position;
    let a = &nav.attitude;
    StateVector::from_column_slice(&[
        p.lat,
        p.lon,
        p.alt,
        nav.velocity[0],
        nav.velocity[1],
        nav.velocity[2],
        a.pitch,
        a.roll,
        a.azimuth,
    ])
}

/// Inverse of [`state_to_vector`]; the quaternion is rebuilt from the Euler angles.
pub fn vector_to_state(x: &StateVector) -> Result<NavState, FusionError> {
    let position = GeodeticPosition::new(x[0], x[1], x[2])?;
    let velocity = x.fixed_rows::<3>(3).into_owned();
    let attitude = Attitude::new(x[6], x[7], x[8]);
    Ok(NavState::new(position, velocity, attitude)?)
}

/// Difference `a - b` with the listed components wrapped to `(-pi, pi]`.
pub fn wrapped_difference<const N: usize>(
    a: &SVector<f64, N>,
    b: &SVector<f64, N>,
    angles: &[usize],
) -> SVector<f64, N> {
    let mut d = a - b;
    for &i in angles {
        d[i] = wrap_pi(d[i]);
    }
    d
}

/// Navigation state, its covariance and the time it refers to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub nav: NavState,
    pub covariance: StateMatrix,
    pub epoch: f64,
}

impl FilterState {
    pub fn new(nav: NavState, covariance: StateMatrix, epoch: f64) -> Result<Self, FusionError> {
        Ok(Self {
            nav,
            covariance: condition_covariance(&covariance)?,
            epoch,
        })
    }

    pub fn vector(&self) -> StateVector {
        state_to_vector(&self.nav)
    }
}

/// Symmetrizes `p`, rejects it when clearly indefinite and clamps small negative
/// eigenvalues to zero. The test runs on the correlation matrix so that the mix of
/// radians and meters in the state does not distort the tolerance.
pub fn condition_covariance<const N: usize>(
    p: &SMatrix<f64, N, N>,
) -> Result<SMatrix<f64, N, N>, FusionError> {
    let sym = 0.5 * (p + p.transpose());
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(FusionError::CovarianceNotPsd(f64::NAN));
    }
    let mut scale = SVector::<f64, N>::zeros();
    for i in 0..N {
        let d = sym[(i, i)];
        if d < 0.0 {
            // a negative variance is indefinite by any measure, but tiny rounding
            // artefacts of an exactly-zero variance are tolerated
            let max_diag = sym.diagonal().max();
            if d < -PSD_TOLERANCE * max_diag.max(f64::MIN_POSITIVE) {
                return Err(FusionError::CovarianceNotPsd(d));
            }
        }
        scale[i] = if d > 0.0 { d.sqrt() } else { 1.0 };
    }
    let inv = scale.map(|s| 1.0 / s);
    let corr = SMatrix::<f64, N, N>::from_fn(|i, j| sym[(i, j)] * inv[i] * inv[j]);
    let eig = DMatrix::from_column_slice(N, N, corr.as_slice()).symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -PSD_TOLERANCE {
        return Err(FusionError::CovarianceNotPsd(min));
    }
    if min >= 0.0 {
        return Ok(sym);
    }
    let clamped = eig.eigenvalues.map(|v| v.max(0.0));
    let corr = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    let out = SMatrix::<f64, N, N>::from_fn(|i, j| corr[(i, j)] * scale[i] * scale[j]);
    Ok(0.5 * (out + out.transpose()))
}

/// Square root `S` with `S S^T = p`: Cholesky when possible, otherwise from the
/// eigen-decomposition with negative eigenvalues clamped.
pub fn covariance_sqrt<const N: usize>(p: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    if let Some(ch) = p.cholesky() {
        return ch.l();
    }
    let eig = DMatrix::from_column_slice(N, N, p.as_slice()).symmetric_eigen();
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let s = &eig.eigenvectors * DMatrix::from_diagonal(&root);
    SMatrix::from_column_slice(s.as_slice())
}

/// Diagonal input-noise covariance: gyro then accelerometer variances per sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessNoise {
    /// Per-sample standard deviations, rad/s.
    pub gyro_sigma: [f64; 3],
    /// Per-sample standard deviations, m/s^2.
    pub accel_sigma: [f64; 3],
}

impl ProcessNoise {
    pub fn new(gyro_sigma: [f64; 3], accel_sigma: [f64; 3]) -> Result<Self, FusionError> {
        if gyro_sigma.iter().chain(&accel_sigma).any(|s| !(*s >= 0.0)) {
            return Err(FusionError::InvalidConfig("process noise sigmas must be nonnegative"));
        }
        Ok(Self { gyro_sigma, accel_sigma })
    }

    pub fn matrix(&self) -> SMatrix<f64, 6, 6> {
        let d = SVector::<f64, 6>::from_iterator(
            self.gyro_sigma.iter().chain(&self.accel_sigma).map(|s| s * s),
        );
        SMatrix::from_diagonal(&d)
    }

    pub fn sigmas(&self) -> InputVector {
        InputVector::from_iterator(self.gyro_sigma.iter().chain(&self.accel_sigma).copied())
    }
}

/// Initial one-sigma uncertainties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialUncertainty {
    /// Horizontal and vertical position, meters.
    pub position_m: f64,
    pub velocity_mps: f64,
    pub attitude_rad: f64,
}

impl Default for InitialUncertainty {
    fn default() -> Self {
        Self {
            position_m: 10.0,
            velocity_mps: 1.0,
            attitude_rad: 5f64.to_radians(),
        }
    }
}

impl InitialUncertainty {
    /// Diagonal covariance in state units at `position`.
    pub fn covariance(&self, position: &GeodeticPosition, earth: &crate::geo::EarthModel) -> StateMatrix {
        let (rn, rm) = earth.curvature_radii(position.lat);
        let lat_sigma = self.position_m / (rm + position.alt);
        let lon_sigma = self.position_m / ((rn + position.alt) * position.lat.cos());
        let sig = [
            lat_sigma,
            lon_sigma,
            self.position_m,
            self.velocity_mps,
            self.velocity_mps,
            self.velocity_mps,
            self.attitude_rad,
            self.attitude_rad,
            self.attitude_rad,
        ];
        StateMatrix::from_diagonal(&StateVector::from_iterator(sig.iter().map(|s| s * s)))
    }
}

/// Normalized estimation error squared of `est` against `truth`.
pub fn nees(est: &FilterState, truth: &NavState) -> Result<f64, FusionError> {
    let e = wrapped_difference(&est.vector(), &state_to_vector(truth), &ANGLE_STATES);
    let p = &est.covariance;
    let scale = p.diagonal().map(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 });
    let corr = StateMatrix::from_fn(|i, j| p[(i, j)] * scale[i] * scale[j]);
    let en = e.component_mul(&scale);
    let ch = corr.cholesky().ok_or(FusionError::CovarianceNotPsd(0.0))?;
    Ok(en.dot(&ch.solve(&en)))
}

/// Horizontal angular wrap for longitude differences.
pub(crate) fn lon_wrapped(d: f64) -> f64 {
    wrap_pi(d)
}
