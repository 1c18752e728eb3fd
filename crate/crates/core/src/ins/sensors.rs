//! Inertial and odometer samples, their stochastic error models and CSV ingestion.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use super::InsError;

/// One IMU epoch. Body axes: x right, y forward, z up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    /// Seconds.
    pub t: f64,
    /// Specific force, m/s^2.
    pub accel: Vector3<f64>,
    /// Angular rate relative to inertial space, rad/s.
    pub gyro: Vector3<f64>,
}

impl ImuSample {
    pub fn new(t: f64, accel: Vector3<f64>, gyro: Vector3<f64>) -> Self {
        Self { t, accel, gyro }
    }
}

/// One wheel-odometer epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdometerSample {
    pub t: f64,
    /// Signed forward speed, m/s. Negative while reversing.
    pub speed: f64,
}

/// Per-axis triad of accelerometer or gyro error parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AxisErrors {
    /// White-noise density (units/sqrt(Hz)).
    pub noise_density: [f64; 3],
    /// Constant turn-on bias.
    pub bias: [f64; 3],
    /// Steady-state standard deviation of the Gauss-Markov bias drift.
    pub drift_sigma: [f64; 3],
    /// Correlation time of the drift, seconds.
    pub drift_tau: [f64; 3],
}

/// Additive IMU error model: bias + first-order Gauss-Markov drift + white noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImuErrorModel {
    pub accel: AxisErrors,
    pub gyro: AxisErrors,
}

/// Default Gauss-Markov correlation time, seconds.
pub const DEFAULT_DRIFT_TAU: f64 = 3600.0;

impl AxisErrors {
    pub fn isotropic(noise_density: f64, bias: f64, drift_sigma: f64) -> Self {
        Self {
            noise_density: [noise_density; 3],
            bias: [bias; 3],
            drift_sigma: [drift_sigma; 3],
            drift_tau: [DEFAULT_DRIFT_TAU; 3],
        }
    }

    fn validate(&self) -> Result<(), InsError> {
        let ok = (0..3).all(|i| {
            self.noise_density[i] >= 0.0
                && self.drift_sigma[i] >= 0.0
                && self.bias[i].is_finite()
                && (self.drift_sigma[i] == 0.0 || self.drift_tau[i] > 0.0)
        });
        if ok {
            Ok(())
        } else {
            Err(InsError::InvalidErrorModel)
        }
    }
}

impl ImuErrorModel {
    pub fn perfect() -> Self {
        Self::default()
    }

    /// White noise only; what the fusion filter's process noise describes exactly.
    pub fn white_only(&self) -> Self {
        Self {
            accel: AxisErrors {
                noise_density: self.accel.noise_density,
                ..AxisErrors::default()
            },
            gyro: AxisErrors {
                noise_density: self.gyro.noise_density,
                ..AxisErrors::default()
            },
        }
    }

    /// A MEMS-class unit of the kind found in consumer vehicles, after the usual
    /// start-up calibration: the turn-on bias is removed and a residual of a few
    /// deg/h and a few mg remains.
    pub fn consumer_mems() -> Self {
        Self {
            accel: AxisErrors::isotropic(1.5e-3, 3.0e-3, 1.0e-3),
            gyro: AxisErrors::isotropic(2.0e-4, 3.0e-5, 1.0e-5),
        }
    }

    /// A tactical-grade unit.
    pub fn tactical() -> Self {
        Self {
            accel: AxisErrors::isotropic(1.0e-4, 1.0e-3, 2.0e-4),
            gyro: AxisErrors::isotropic(5.0e-6, 5.0e-6, 1.0e-6),
        }
    }

    /// Per-sample white-noise standard deviations `(accel, gyro)` at `rate_hz`.
    pub fn sample_sigmas(&self, rate_hz: f64) -> ([f64; 3], [f64; 3]) {
        let s = rate_hz.sqrt();
        (
            self.accel.noise_density.map(|d| d * s),
            self.gyro.noise_density.map(|d| d * s),
        )
    }
}

struct AxisState {
    drift: [f64; 3],
}

impl AxisState {
    fn start(p: &AxisErrors, rng: &mut ChaCha8Rng) -> Self {
        let drift = std::array::from_fn(|i| {
            let z: f64 = StandardNormal.sample(rng);
            p.drift_sigma[i] * z
        });
        Self { drift }
    }

    fn next(&mut self, p: &AxisErrors, dt: f64, rate: f64, rng: &mut ChaCha8Rng) -> Vector3<f64> {
        let mut err = Vector3::zeros();
        for i in 0..3 {
            if p.drift_sigma[i] > 0.0 && dt > 0.0 {
                let phi = (-dt / p.drift_tau[i]).exp();
                let z: f64 = StandardNormal.sample(rng);
                self.drift[i] = phi * self.drift[i] + p.drift_sigma[i] * (1.0 - phi * phi).sqrt() * z;
            }
            let z: f64 = StandardNormal.sample(rng);
            err[i] = p.bias[i] + self.drift[i] + p.noise_density[i] * rate.sqrt() * z;
        }
        err
    }
}

/// Adds the modeled errors to a clean IMU stream. The same seed replays bit-identically.
pub fn corrupt_imu(
    truth: &[ImuSample],
    model: &ImuErrorModel,
    seed: u64,
) -> Result<Vec<ImuSample>, InsError> {
    model.accel.validate()?;
    model.gyro.validate()?;
    if *model == ImuErrorModel::perfect() {
        return Ok(truth.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = AxisState::start(&model.accel, &mut rng);
    let mut gyr = AxisState::start(&model.gyro, &mut rng);
    let mut out = Vec::with_capacity(truth.len());
    let mut prev_t: Option<f64> = None;
    for (k, s) in truth.iter().enumerate() {
        let dt = match prev_t {
            Some(p) => s.t - p,
            None => truth.get(1).map(|n| n.t - s.t).unwrap_or(0.0),
        };
        if k > 0 && dt <= 0.0 {
            return Err(InsError::StreamOrdering { index: k, t: s.t });
        }
        let rate = if dt > 0.0 { 1.0 / dt } else { 0.0 };
        let ea = acc.next(&model.accel, dt, rate, &mut rng);
        let eg = gyr.next(&model.gyro, dt, rate, &mut rng);
        out.push(ImuSample::new(s.t, s.accel + ea, s.gyro + eg));
        prev_t = Some(s.t);
    }
    Ok(out)
}

/// Odometer error model: scale-factor error plus white speed noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OdometerErrorModel {
    pub noise_sigma: f64,
    pub scale_error: f64,
}

pub fn corrupt_odometer(
    truth: &[OdometerSample],
    model: &OdometerErrorModel,
    seed: u64,
) -> Vec<OdometerSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    truth
        .iter()
        .map(|s| {
            let z: f64 = StandardNormal.sample(&mut rng);
            OdometerSample {
                t: s.t,
                speed: s.speed * (1.0 + model.scale_error) + model.noise_sigma * z,
            }
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ImuRow {
    t: f64,
    fx: f64,
    fy: f64,
    fz: f64,
    wx: f64,
    wy: f64,
    wz: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct OdoRow {
    t: f64,
    v_odo: f64,
}

/// Reads `t,fx,fy,fz,wx,wy,wz` rows (header required).
pub fn read_imu_csv<R: Read>(reader: R) -> Result<Vec<ImuSample>, InsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out: Vec<ImuSample> = Vec::new();
    for (index, row) in rdr.deserialize::<ImuRow>().enumerate() {
        let r = row?;
        if out.last().is_some_and(|p| r.t <= p.t) {
            return Err(InsError::StreamOrdering { index, t: r.t });
        }
        out.push(ImuSample::new(
            r.t,
            Vector3::new(r.fx, r.fy, r.fz),
            Vector3::new(r.wx, r.wy, r.wz),
        ));
    }
    Ok(out)
}

pub fn write_imu_csv<W: Write>(writer: W, samples: &[ImuSample]) -> Result<(), InsError> {
    let mut w = csv::Writer::from_writer(writer);
    for s in samples {
        w.serialize(ImuRow {
            t: s.t,
            fx: s.accel[0],
            fy: s.accel[1],
            fz: s.accel[2],
            wx: s.gyro[0],
            wy: s.gyro[1],
            wz: s.gyro[2],
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `t,v_odo` rows (header required).
pub fn read_odometer_csv<R: Read>(reader: R) -> Result<Vec<OdometerSample>, InsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out: Vec<OdometerSample> = Vec::new();
    for (index, row) in rdr.deserialize::<OdoRow>().enumerate() {
        let r = row?;
        if out.last().is_some_and(|p| r.t <= p.t) {
            return Err(InsError::StreamOrdering { index, t: r.t });
        }
        out.push(OdometerSample { t: r.t, speed: r.v_odo });
    }
    Ok(out)
}

pub fn write_odometer_csv<W: Write>(writer: W, samples: &[OdometerSample]) -> Result<(), InsError> {
    let mut w = csv::Writer::from_writer(writer);
    for s in samples {
        w.serialize(OdoRow { t: s.t, v_odo: s.speed })?;
    }
    w.flush()?;
    Ok(())
}
