//! Measurement update for position and velocity rows.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use super::state::{
    condition_covariance, lon_wrapped, state_to_vector, vector_to_state, FilterState,
    StateMatrix,
};
use super::FusionError;
use crate::fiveg::PositionFix;
use crate::geo::{Attitude, LocalFrame};
use crate::ins::odometer_velocity_l;

pub type MeasurementVector = SVector<f64, 6>;
pub type MeasurementMatrix = SMatrix<f64, 6, 6>;

/// Rows `[lat, lon, h, ve, vn, vu]`; each row observes the state component with the
/// same index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementBundle {
    pub z: MeasurementVector,
    pub mask: [bool; 6],
    /// Only the entries on available rows are read.
    pub r: MeasurementMatrix,
    /// Wheel speed behind the velocity rows, if they come from the odometer. The rows
    /// then also depend on pitch and azimuth through the body-to-local rotation.
    #[serde(default)]
    pub odometer_speed: Option<f64>,
}

impl MeasurementBundle {
    pub fn empty() -> Self {
        Self {
            z: MeasurementVector::zeros(),
            mask: [false; 6],
            r: MeasurementMatrix::zeros(),
            odometer_speed: None,
        }
    }

    /// Position rows from a 5G fix, its ENU covariance mapped to geodetic units and
    /// scaled by `inflation`.
    pub fn from_fix(fix: &PositionFix, frame: &LocalFrame, inflation: f64) -> Self {
        let (m_lat, m_lon) = frame.meters_per_radian();
        // ENU (e, n, u) to (lat, lon, h)
        let j = Matrix3::new(
            0.0, 1.0 / m_lat, 0.0,
            1.0 / m_lon, 0.0, 0.0,
            0.0, 0.0, 1.0,
        );
        let mut b = Self::empty();
        b.set_position(
            Vector3::new(fix.position.lat, fix.position.lon, fix.position.alt),
            j * fix.covariance * j.transpose() * inflation,
        );
        b
    }

    /// Velocity rows from a forward wheel speed resolved with `attitude`.
    pub fn from_odometer(speed: f64, attitude: &Attitude, sigma: f64) -> Self {
        let mut b = Self::empty();
        b.set_velocity(
            odometer_velocity_l(speed, attitude),
            Matrix3::from_diagonal_element(sigma * sigma),
        );
        b.odometer_speed = Some(speed);
        b
    }

    /// As [`Self::from_odometer`], but `sigma` only along the heading and
    /// `lateral_sigma` across it, for a vehicle that does not slip sideways.
    pub fn from_odometer_along_track(speed: f64, attitude: &Attitude, sigma: f64, lateral_sigma: f64) -> Self {
        let u = odometer_velocity_l(1.0, attitude);
        let uu = u * u.transpose();
        let r = uu * (sigma * sigma) + (Matrix3::identity() - uu) * (lateral_sigma * lateral_sigma);
        let mut b = Self::from_odometer(speed, attitude, sigma);
        b.r.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        b
    }

    pub fn set_position(&mut self, z: Vector3<f64>, r: Matrix3<f64>) {
        self.z.fixed_rows_mut::<3>(0).copy_from(&z);
        self.r.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        self.mask[..3].fill(true);
    }

    pub fn set_velocity(&mut self, z: Vector3<f64>, r: Matrix3<f64>) {
        self.z.fixed_rows_mut::<3>(3).copy_from(&z);
        self.r.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        self.mask[3..].fill(true);
        self.odometer_speed = None;
    }

    /// Rows of `other` replace the corresponding rows of `self`.
    pub fn merge(&self, other: &Self) -> Self {
        let mut out = *self;
        if other.mask[0] {
            out.set_position(
                other.z.fixed_rows::<3>(0).into_owned(),
                other.r.fixed_view::<3, 3>(0, 0).into_owned(),
            );
        }
        if other.mask[3] {
            out.set_velocity(
                other.z.fixed_rows::<3>(3).into_owned(),
                other.r.fixed_view::<3, 3>(3, 3).into_owned(),
            );
            out.odometer_speed = other.odometer_speed;
        }
        out
    }

    pub fn rows(&self) -> Vec<usize> {
        (0..6).filter(|&i| self.mask[i]).collect()
    }
}

/// Innovation, its covariance and the gain for the available rows.
struct Innovation {
    rows: Vec<usize>,
    y: DVector<f64>,
    h: DMatrix<f64>,
    s: DMatrix<f64>,
    r: DMatrix<f64>,
}

/// Observation matrix for the available rows. Odometer velocity rows are
/// `v - v_odo R(att) e_y`, linearized at the current attitude.
fn observation_matrix(state: &FilterState, bundle: &MeasurementBundle, rows: &[usize]) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(rows.len(), 9);
    let att = &state.nav.attitude;
    let (sp, cp) = att.pitch.sin_cos();
    let (sa, ca) = att.azimuth.sin_cos();
    for (a, &i) in rows.iter().enumerate() {
        h[(a, i)] = 1.0;
        if let (Some(v), 3..=5) = (bundle.odometer_speed, i) {
            let (d_pitch, d_az) = match i {
                3 => (-sa * sp, ca * cp),
                4 => (-ca * sp, -sa * cp),
                _ => (cp, 0.0),
            };
            h[(a, 6)] = -v * d_pitch;
            h[(a, 8)] = -v * d_az;
        }
    }
    h
}

fn innovation(state: &FilterState, bundle: &MeasurementBundle) -> Result<Innovation, FusionError> {
    let rows = bundle.rows();
    let m = rows.len();
    let x = state_to_vector(&state.nav);
    let p = DMatrix::from_column_slice(9, 9, state.covariance.as_slice());
    let mut y = DVector::zeros(m);
    let mut r = DMatrix::zeros(m, m);
    for (a, &i) in rows.iter().enumerate() {
        y[a] = bundle.z[i] - x[i];
        if i == 1 {
            y[a] = lon_wrapped(y[a]);
        }
        for (b, &j) in rows.iter().enumerate() {
            r[(a, b)] = 0.5 * (bundle.r[(i, j)] + bundle.r[(j, i)]);
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(FusionError::NonFiniteInnovation);
    }
    let h = observation_matrix(state, bundle, &rows);
    let mut s = &h * &p * h.transpose() + &r;
    s = 0.5 * (&s + s.transpose());
    Ok(Innovation { rows, y, h, s, r })
}

/// Normalized innovation squared `y^T S^-1 y` and the number of rows.
pub fn innovation_statistic(
    state: &FilterState,
    bundle: &MeasurementBundle,
) -> Result<(f64, usize), FusionError> {
    let inn = innovation(state, bundle)?;
    if inn.rows.is_empty() {
        return Ok((0.0, 0));
    }
    let (s, y) = scaled(&inn.s, &inn.y);
    let ch = s.cholesky().ok_or(FusionError::SingularInnovationCovariance)?;
    Ok((y.dot(&ch.solve(&y)), inn.rows.len()))
}

/// Rescales a covariance and vector to unit diagonal, for conditioning.
fn scaled(s: &DMatrix<f64>, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let d = s.diagonal().map(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 });
    let sn = DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| s[(i, j)] * d[i] * d[j]);
    (sn, y.component_mul(&d))
}

/// Kalman update with the rows selected by `bundle.mask`, Joseph-form covariance.
pub fn update(state: &FilterState, bundle: &MeasurementBundle) -> Result<FilterState, FusionError> {
    let inn = innovation(state, bundle)?;
    if inn.rows.is_empty() {
        return Ok(*state);
    }
    let p = DMatrix::from_column_slice(9, 9, state.covariance.as_slice());
    let h = &inn.h;
    // K = P H^T S^-1, solved on the unit-diagonal form of S
    let d = inn.s.diagonal().map(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 });
    let (sn, _) = scaled(&inn.s, &inn.y);
    let ch = sn.cholesky().ok_or(FusionError::SingularInnovationCovariance)?;
    let pht = &p * h.transpose();
    let dmat = DMatrix::from_diagonal(&d);
    let k = (ch.solve(&(&dmat * pht.transpose())).transpose()) * &dmat;

    let dx = &k * &inn.y;
    let mut x = state_to_vector(&state.nav);
    for i in 0..9 {
        x[i] += dx[i];
    }
    let ikh = DMatrix::identity(9, 9) - &k * h;
    let pj = &ikh * &p * ikh.transpose() + &k * &inn.r * k.transpose();
    let pn = StateMatrix::from_column_slice(pj.as_slice());
    Ok(FilterState {
        nav: vector_to_state(&x)?,
        covariance: condition_covariance(&pn)?,
        epoch: state.epoch,
    })
}
