//! Ground-truth vehicle trajectories and the perfect IMU and odometer streams that
//! reproduce them under the strapdown mechanization.
//!
//! The path is a polyline with circular fillets at the corners, driven level with a
//! speed profile limited by cruise and cornering speeds, longitudinal acceleration and
//! braking, and optional stops. Each IMU sample is found by inverting one mechanization
//! step so that the integrated state lands on the commanded velocity and heading.

use nalgebra::{Matrix4, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use std::io::Write;

use super::SimError;
use crate::geo::{
    omega_matrix, propagate_quaternion, quaternion_from_attitude, rotation_from_quaternion,
    wrap_two_pi, Attitude, GeodeticPosition, LocalFrame, Quaternion,
};
use crate::ins::{coriolis, gravity_l, local_rate_in_body, mechanize_step, ImuSample, NavState, OdometerSample};

/// Spacing of the speed-profile grid, meters.
const PROFILE_STEP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopSpec {
    /// Arc length along the path, meters.
    pub at_m: f64,
    pub dwell_s: f64,
}

/// Route and dynamics of a drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySpec {
    /// Corner points of the route in scene meters.
    pub waypoints: Vec<[f64; 2]>,
    pub fillet_radius_m: f64,
    pub cruise_speed: f64,
    /// Speed through the corner fillets.
    pub turn_speed: f64,
    pub accel: f64,
    pub decel: f64,
    pub lateral_accel_cap: f64,
    pub stops: Vec<StopSpec>,
    pub start_dwell_s: f64,
    pub end_dwell_s: f64,
    pub imu_rate_hz: f64,
    pub odometer_rate_hz: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            waypoints: Vec::new(),
            fillet_radius_m: 25.0,
            cruise_speed: 8.0,
            turn_speed: 5.0,
            accel: 2.0,
            decel: 3.0,
            lateral_accel_cap: 3.0,
            stops: Vec::new(),
            start_dwell_s: 5.0,
            end_dwell_s: 2.0,
            imu_rate_hz: 100.0,
            odometer_rate_hz: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Element {
    Line {
        start: Vector2<f64>,
        dir: Vector2<f64>,
        len: f64,
    },
    Arc {
        center: Vector2<f64>,
        /// Start point minus center.
        radial: Vector2<f64>,
        dir0: Vector2<f64>,
        radius: f64,
        /// +1 for a left (counter-clockwise) turn.
        sign: f64,
        len: f64,
    },
}

fn rotate(v: &Vector2<f64>, angle: f64) -> Vector2<f64> {
    let (s, c) = angle.sin_cos();
    Vector2::new(c * v[0] - s * v[1], s * v[0] + c * v[1])
}

impl Element {
    fn len(&self) -> f64 {
        match self {
            Element::Line { len, .. } | Element::Arc { len, .. } => *len,
        }
    }

    /// Position, unit direction of travel and curvature at arc length `s`.
    fn eval(&self, s: f64) -> (Vector2<f64>, Vector2<f64>, f64) {
        match *self {
            Element::Line { start, dir, .. } => (start + dir * s, dir, 0.0),
            Element::Arc { center, radial, dir0, radius, sign, .. } => {
                let phi = sign * s / radius;
                (center + rotate(&radial, phi), rotate(&dir0, phi), 1.0 / radius)
            }
        }
    }
}

/// A route with filleted corners, parameterized by arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    elements: Vec<Element>,
    starts: Vec<f64>,
    length: f64,
}

impl Path {
    pub fn new(waypoints: &[[f64; 2]], radius: f64) -> Result<Self, SimError> {
        if waypoints.len() < 2 {
            return Err(SimError::InvalidTrajectory("at least two waypoints are required".into()));
        }
        let pts: Vec<Vector2<f64>> = waypoints.iter().map(|p| Vector2::from(*p)).collect();
        let n = pts.len();
        let mut tangent = vec![0.0; n];
        let mut turn = vec![0.0; n];
        for i in 1..n - 1 {
            let a = (pts[i] - pts[i - 1]).normalize();
            let b = (pts[i + 1] - pts[i]).normalize();
            let th = (a[0] * b[1] - a[1] * b[0]).atan2(a.dot(&b));
            if th.abs() > 1e-9 {
                if th.abs() > std::f64::consts::PI - 1e-3 {
                    return Err(SimError::InvalidTrajectory(format!("waypoint {i} reverses the route")));
                }
                turn[i] = th;
                tangent[i] = radius * (th.abs() / 2.0).tan();
            }
        }
        let mut elements = Vec::new();
        for i in 0..n - 1 {
            let seg = pts[i + 1] - pts[i];
            let len = seg.norm();
            if !(len > 0.0) {
                return Err(SimError::InvalidTrajectory(format!("waypoints {i} and {} coincide", i + 1)));
            }
            let dir = seg / len;
            let free = len - tangent[i] - tangent[i + 1];
            if free < -1e-9 {
                return Err(SimError::InvalidTrajectory(format!(
                    "fillet radius {radius} m does not fit on leg {i} ({len:.1} m)"
                )));
            }
            if free > 0.0 {
                elements.push(Element::Line { start: pts[i] + dir * tangent[i], dir, len: free });
            }
            if i + 1 < n - 1 && turn[i + 1] != 0.0 {
                let th = turn[i + 1];
                let sign = th.signum();
                let start = pts[i + 1] - dir * tangent[i + 1];
                let left = Vector2::new(-dir[1], dir[0]);
                let center = start + left * sign * radius;
                elements.push(Element::Arc {
                    center,
                    radial: start - center,
                    dir0: dir,
                    radius,
                    sign,
                    len: radius * th.abs(),
                });
            }
        }
        let mut starts = Vec::with_capacity(elements.len());
        let mut acc = 0.0;
        for e in &elements {
            starts.push(acc);
            acc += e.len();
        }
        Ok(Self { elements, starts, length: acc })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Position, direction of travel and curvature at arc length `s`.
    pub fn eval(&self, s: f64) -> (Vector2<f64>, Vector2<f64>, f64) {
        let s = s.clamp(0.0, self.length);
        let i = match self.starts.binary_search_by(|x| x.total_cmp(&s)) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        self.elements[i].eval(s - self.starts[i])
    }

    pub fn curvature(&self, s: f64) -> f64 {
        self.eval(s).2
    }
}

/// Arc length and speed as functions of time.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedProfile {
    s: Vec<f64>,
    v: Vec<f64>,
    arrive: Vec<f64>,
    depart: Vec<f64>,
}

impl SpeedProfile {
    pub fn new(path: &Path, spec: &TrajectorySpec) -> Result<Self, SimError> {
        let n = (path.length() / PROFILE_STEP).ceil().max(1.0) as usize;
        let ds = path.length() / n as f64;
        let s: Vec<f64> = (0..=n).map(|i| i as f64 * ds).collect();
        let mut vmax: Vec<f64> = s
            .iter()
            .map(|&si| if path.curvature(si) > 0.0 { spec.turn_speed.min(spec.cruise_speed) } else { spec.cruise_speed })
            .collect();
        let mut dwell = vec![0.0; n + 1];
        vmax[0] = 0.0;
        vmax[n] = 0.0;
        dwell[0] = spec.start_dwell_s;
        dwell[n] = spec.end_dwell_s;
        for st in &spec.stops {
            if !(st.at_m >= 0.0 && st.at_m <= path.length()) || !(st.dwell_s >= 0.0) {
                return Err(SimError::InvalidTrajectory(format!("stop at {} m is off the route", st.at_m)));
            }
            let i = (st.at_m / ds).round() as usize;
            vmax[i] = 0.0;
            dwell[i] += st.dwell_s;
        }
        let mut v = vmax.clone();
        for i in 0..n {
            v[i + 1] = v[i + 1].min((v[i] * v[i] + 2.0 * spec.accel * ds).sqrt());
        }
        for i in (0..n).rev() {
            v[i] = v[i].min((v[i + 1] * v[i + 1] + 2.0 * spec.decel * ds).sqrt());
        }
        let mut arrive = vec![0.0; n + 1];
        let mut depart = vec![0.0; n + 1];
        let mut t = 0.0;
        for i in 0..=n {
            arrive[i] = t;
            t += dwell[i];
            depart[i] = t;
            if i < n {
                let vs = v[i] + v[i + 1];
                if !(vs > 0.0) {
                    return Err(SimError::InvalidTrajectory("speed profile stalls".into()));
                }
                t += 2.0 * ds / vs;
            }
        }
        Ok(Self { s, v, arrive, depart })
    }

    pub fn duration(&self) -> f64 {
        *self.depart.last().unwrap()
    }

    /// Arc length, speed and longitudinal acceleration at time `t`.
    pub fn at(&self, t: f64) -> (f64, f64, f64) {
        let n = self.s.len() - 1;
        let i = match self.arrive.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        if t < self.depart[i] || i == n {
            return (self.s[i], 0.0, 0.0);
        }
        let ds = self.s[i + 1] - self.s[i];
        let a = (self.v[i + 1].powi(2) - self.v[i].powi(2)) / (2.0 * ds);
        let tau = (t - self.depart[i]).min(self.arrive[i + 1] - self.depart[i]);
        let v = (self.v[i] + a * tau).max(0.0);
        let s = (self.s[i] + self.v[i] * tau + 0.5 * a * tau * tau).clamp(self.s[i], self.s[i + 1]);
        (s, v, a)
    }
}

/// One ground-truth epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSample {
    pub t: f64,
    pub nav: NavState,
    /// Forward speed, m/s.
    pub speed: f64,
}

/// Ground truth at the IMU rate with the perfect sensor streams.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTrajectory {
    pub samples: Vec<TruthSample>,
    pub imu: Vec<ImuSample>,
    pub odometer: Vec<OdometerSample>,
    pub path: Path,
}

impl TruthTrajectory {
    /// Truth sample nearest to `t`.
    pub fn nearest(&self, t: f64) -> &TruthSample {
        let i = self.samples.partition_point(|s| s.t < t);
        if i == 0 {
            return &self.samples[0];
        }
        if i == self.samples.len() {
            return &self.samples[i - 1];
        }
        if t - self.samples[i - 1].t <= self.samples[i].t - t {
            &self.samples[i - 1]
        } else {
            &self.samples[i]
        }
    }
}

fn heading(dir: &Vector2<f64>) -> f64 {
    wrap_two_pi(dir[0].atan2(dir[1]))
}

/// Body rate that carries `q` onto `target` in one first-order quaternion step.
fn invert_quaternion_step(q: &Quaternion, target: &Quaternion, dt: f64) -> Result<Vector3<f64>, SimError> {
    let qv = q.as_vector();
    let mut tv = target.as_vector();
    if tv.dot(&qv) < 0.0 {
        tv = -tv;
    }
    // q + dt/2 Omega(w) q = c target, linear in (w, c)
    let mut a = Matrix4::zeros();
    for i in 0..3 {
        let col = omega_matrix(&Vector3::ith(i, 1.0)) * qv * (0.5 * dt);
        a.set_column(i, &col);
    }
    a.set_column(3, &(-tv));
    let sol: Vector4<f64> = a
        .lu()
        .solve(&(-qv))
        .ok_or_else(|| SimError::InvalidTrajectory("attitude step not invertible".into()))?;
    Ok(Vector3::new(sol[0], sol[1], sol[2]))
}

/// Builds the truth trajectory and its perfect IMU and odometer streams.
///
/// The truth states are the mechanization of the derived IMU stream itself, so the two
/// agree by construction; the inversion keeps them on the commanded path.
pub fn generate_trajectory(
    spec: &TrajectorySpec,
    frame: &LocalFrame,
    ue_height: f64,
) -> Result<TruthTrajectory, SimError> {
    if !(spec.imu_rate_hz >= 10.0) || !(spec.odometer_rate_hz > 0.0) {
        return Err(SimError::InvalidTrajectory("sensor rates must be positive (IMU >= 10 Hz)".into()));
    }
    if !(spec.cruise_speed > 0.0 && spec.turn_speed > 0.0 && spec.accel > 0.0 && spec.decel > 0.0) {
        return Err(SimError::InvalidTrajectory("speeds and accelerations must be positive".into()));
    }
    let path = Path::new(&spec.waypoints, spec.fillet_radius_m)?;
    let has_turns = path.elements.iter().any(|e| matches!(e, Element::Arc { .. }));
    let turn_speed = spec.turn_speed.min(spec.cruise_speed);
    if has_turns {
        let lateral = turn_speed * turn_speed / spec.fillet_radius_m;
        if lateral > spec.lateral_accel_cap {
            return Err(SimError::InfeasibleDynamics { lateral_accel: lateral, cap: spec.lateral_accel_cap });
        }
    }
    let profile = SpeedProfile::new(&path, spec)?;
    let earth = frame.earth;
    let dt = 1.0 / spec.imu_rate_hz;
    let steps = (profile.duration() * spec.imu_rate_hz).floor() as usize;

    let target = |t: f64| {
        let (s, v, _) = profile.at(t);
        let (p, dir, kappa) = path.eval(s);
        (p, dir, v, kappa)
    };

    let (p0, dir0, _, _) = target(0.0);
    let start = NavState::new(
        frame.to_geodetic(&Vector3::new(p0[0], p0[1], ue_height)),
        Vector3::zeros(),
        Attitude::level(heading(&dir0)),
    )?;
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(TruthSample { t: 0.0, nav: start, speed: 0.0 });
    let mut imu = Vec::with_capacity(steps + 1);
    let mut state = start;
    for k in 0..steps {
        let t1 = (k + 1) as f64 * dt;
        let (_, dir, v, kappa) = target(t1);
        if kappa * v * v > spec.lateral_accel_cap * (1.0 + 1e-9) {
            return Err(SimError::InfeasibleDynamics { lateral_accel: kappa * v * v, cap: spec.lateral_accel_cap });
        }
        let q_target = quaternion_from_attitude(&Attitude::level(heading(&dir)))?;
        let w_lb = invert_quaternion_step(&state.quaternion, &q_target, dt)?;
        let gyro = w_lb + local_rate_in_body(&state, &earth)?;
        let q_new = propagate_quaternion(&state.quaternion, &w_lb, dt)?;

        let v_new = Vector3::new(dir[0], dir[1], 0.0) * v;
        let lat = state.position.lat;
        let rhs = (v_new - state.velocity) / dt + coriolis(&state, &earth)? - gravity_l(lat, state.position.alt, &earth);
        let m = 0.5 * (rotation_from_quaternion(&state.quaternion).matrix() + rotation_from_quaternion(&q_new).matrix());
        let accel = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| SimError::InvalidTrajectory("velocity step not invertible".into()))?;

        let sample = ImuSample::new(t1, accel, gyro);
        state = mechanize_step(&state, &sample, dt, &earth)?;
        imu.push(sample);
        samples.push(TruthSample { t: t1, nav: state, speed: v });
    }
    // the sample at t = 0 closes no interval; repeat the first one for stream completeness
    let first = imu.first().copied().unwrap_or_else(|| ImuSample::new(0.0, Vector3::zeros(), Vector3::zeros()));
    imu.insert(0, ImuSample::new(0.0, first.accel, first.gyro));

    let t_end = samples.last().unwrap().t;
    let odo_n = (t_end * spec.odometer_rate_hz + 1e-9).floor() as usize;
    let odometer = (0..=odo_n)
        .map(|j| {
            let t = j as f64 / spec.odometer_rate_hz;
            OdometerSample { t, speed: profile.at(t).1 }
        })
        .collect();
    Ok(TruthTrajectory { samples, imu, odometer, path })
}

#[derive(Serialize, Deserialize)]
struct TruthRow {
    t: f64,
    lat_rad: f64,
    lon_rad: f64,
    alt_m: f64,
    east_m: f64,
    north_m: f64,
    up_m: f64,
    ve: f64,
    vn: f64,
    vu: f64,
    pitch_rad: f64,
    roll_rad: f64,
    azimuth_rad: f64,
    speed: f64,
}

/// Writes the truth series with geodetic and scene-ENU positions.
pub fn write_truth_csv<W: Write>(writer: W, samples: &[TruthSample], frame: &LocalFrame) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(writer);
    for s in samples {
        let enu = frame.to_enu(&s.nav.position);
        w.serialize(TruthRow {
            t: s.t,
            lat_rad: s.nav.position.lat,
            lon_rad: s.nav.position.lon,
            alt_m: s.nav.position.alt,
            east_m: enu[0],
            north_m: enu[1],
            up_m: enu[2],
            ve: s.nav.velocity[0],
            vn: s.nav.velocity[1],
            vu: s.nav.velocity[2],
            pitch_rad: s.nav.attitude.pitch,
            roll_rad: s.nav.attitude.roll,
            azimuth_rad: s.nav.attitude.azimuth,
            speed: s.speed,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_truth_csv`]; the ENU columns are ignored.
pub fn read_truth_csv<R: std::io::Read>(reader: R) -> Result<Vec<TruthSample>, SimError> {
    let mut out = Vec::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let r: TruthRow = row?;
        let nav = NavState::new(
            GeodeticPosition::new(r.lat_rad, r.lon_rad, r.alt_m)?,
            Vector3::new(r.ve, r.vn, r.vu),
            Attitude::new(r.pitch_rad, r.roll_rad, r.azimuth_rad),
        )?;
        out.push(TruthSample { t: r.t, nav, speed: r.speed });
    }
    Ok(out)
}
