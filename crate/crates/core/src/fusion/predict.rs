//! Time update: unscented prediction over the input-augmented state, and the
//! finite-difference EKF twin.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::state::{
    condition_covariance, covariance_sqrt, state_to_vector, vector_to_state,
    wrapped_difference, FilterState, InputVector, ProcessNoise, StateMatrix, StateVector,
};
use super::transition::{imu_to_input, InsTransition, TransitionModel};
use super::FusionError;
use crate::geo::EarthModel;
use crate::ins::ImuSample;

const NX: usize = 9;
const NU: usize = 6;
const NA: usize = NX + NU;

/// Sigma-point scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UkfParams {
    pub alpha: f64,
    pub kappa: f64,
    pub beta: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            kappa: 0.0,
            beta: 2.0,
        }
    }
}

/// Scaling derived from [`UkfParams`] for an `n`-dimensional augmented state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaWeights {
    pub gamma: f64,
    pub mean0: f64,
    pub cov0: f64,
    pub rest: f64,
}

impl UkfParams {
    pub fn validate(&self, n: usize) -> Result<(), FusionError> {
        let n = n as f64;
        let lambda = self.alpha * self.alpha * (n + self.kappa) - n;
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(FusionError::InvalidConfig("ukf alpha must lie in (0, 1]"));
        }
        if !(n + lambda > 0.0) || !self.beta.is_finite() {
            return Err(FusionError::InvalidConfig("ukf scaling gives a non-positive spread"));
        }
        Ok(())
    }

    pub fn weights(&self, n: usize) -> Result<SigmaWeights, FusionError> {
        self.validate(n)?;
        let nf = n as f64;
        let lambda = self.alpha * self.alpha * (nf + self.kappa) - nf;
        let mean0 = lambda / (nf + lambda);
        Ok(SigmaWeights {
            gamma: (nf + lambda).sqrt(),
            mean0,
            cov0: mean0 + 1.0 - self.alpha * self.alpha + self.beta,
            rest: 1.0 / (2.0 * (nf + lambda)),
        })
    }
}

pub fn sigma_point_count(n_aug: usize) -> usize {
    2 * n_aug + 1
}

/// Unscented prediction of `(x, p)` through `model` with input `u` carrying noise `q`.
///
/// The mean and covariance are accumulated as deviations from the propagated center
/// point, which keeps the large opposite-signed weights of a small `alpha` from
/// cancelling digits. Angle components use a circular weighted mean.
pub fn ukf_predict_vector<M: TransitionModel + ?Sized>(
    model: &M,
    x: &StateVector,
    p: &StateMatrix,
    u: &InputVector,
    q: &SMatrix<f64, NU, NU>,
    dt: f64,
    params: &UkfParams,
) -> Result<(StateVector, StateMatrix), FusionError> {
    let w = params.weights(NA)?;
    let sp = covariance_sqrt(&condition_covariance(p)?);
    let sq = covariance_sqrt(q);
    let angles = model.angle_states();

    // deviation of sigma point i from the center point: the exact input offset plus
    // the difference of increments
    let inc0 = model.increment(x, u, dt)?;
    let mut devs: Vec<StateVector> = Vec::with_capacity(2 * NA);
    for i in 0..NA {
        for sign in [1.0, -1.0] {
            let d = if i < NX {
                let dx: StateVector = sign * w.gamma * sp.column(i);
                dx + (model.increment(&(x + dx), u, dt)? - inc0)
            } else {
                let du: InputVector = sign * w.gamma * sq.column(i - NX);
                model.increment(x, &(u + du), dt)? - inc0
            };
            let mut d = d;
            for &k in angles {
                d[k] = crate::geo::wrap_pi(d[k]);
            }
            devs.push(d);
        }
    }

    let mut offset = StateVector::zeros();
    for d in &devs {
        offset += w.rest * d;
    }
    for &k in angles {
        let (mut s, mut c) = (0.0, w.mean0);
        for d in &devs {
            s += w.rest * d[k].sin();
            c += w.rest * d[k].cos();
        }
        offset[k] = s.atan2(c);
    }
    let mut cov = w.cov0 * offset * offset.transpose();
    for d in &devs {
        let e = wrapped_difference(d, &offset, angles);
        cov += w.rest * e * e.transpose();
    }
    let mean = x + (inc0 + offset);
    Ok((mean, condition_covariance(&cov)?))
}

/// Central-difference Jacobians `(df/dx, df/du)`; the step for each component is
/// `1e-6 max(|v|, 1)`.
pub fn transition_jacobians<M: TransitionModel + ?Sized>(
    model: &M,
    x: &StateVector,
    u: &InputVector,
    dt: f64,
) -> Result<(StateMatrix, SMatrix<f64, NX, NU>), FusionError> {
    let angles = model.angle_states();
    let mut f = StateMatrix::identity();
    for j in 0..NX {
        let h = 1e-6 * x[j].abs().max(1.0);
        let mut xp = *x;
        xp[j] += h;
        let mut xm = *x;
        xm[j] -= h;
        // the identity part of df/dx is exact; only the increment is differenced
        let d = wrapped_difference(&model.increment(&xp, u, dt)?, &model.increment(&xm, u, dt)?, angles);
        let col = f.column(j) + d / (xp[j] - xm[j]);
        f.set_column(j, &col);
    }
    let mut g = SMatrix::<f64, NX, NU>::zeros();
    for j in 0..NU {
        let h = 1e-6 * u[j].abs().max(1.0);
        let mut up = *u;
        up[j] += h;
        let mut um = *u;
        um[j] -= h;
        let d = wrapped_difference(&model.increment(x, &up, dt)?, &model.increment(x, &um, dt)?, angles);
        g.set_column(j, &(d / (up[j] - um[j])));
    }
    Ok((f, g))
}

/// EKF prediction with finite-difference Jacobians of `model`.
pub fn ekf_predict_vector<M: TransitionModel + ?Sized>(
    model: &M,
    x: &StateVector,
    p: &StateMatrix,
    u: &InputVector,
    q: &SMatrix<f64, NU, NU>,
    dt: f64,
) -> Result<(StateVector, StateMatrix), FusionError> {
    let (f, g) = transition_jacobians(model, x, u, dt)?;
    let mean = x + model.increment(x, u, dt)?;
    let cov = f * p * f.transpose() + g * q * g.transpose();
    Ok((mean, condition_covariance(&cov)?))
}

fn check_step(state: &FilterState, imu: &ImuSample) -> Result<f64, FusionError> {
    let dt = imu.t - state.epoch;
    if !(dt > 0.0) {
        return Err(FusionError::StreamOrdering { t: imu.t });
    }
    Ok(dt)
}

fn finish(mean: StateVector, cov: StateMatrix, epoch: f64) -> Result<FilterState, FusionError> {
    Ok(FilterState {
        nav: vector_to_state(&mean)?,
        covariance: cov,
        epoch,
    })
}

/// Unscented prediction of the navigation filter to the time of `imu`.
pub fn predict(
    state: &FilterState,
    imu: &ImuSample,
    q: &ProcessNoise,
    params: &UkfParams,
    earth: &EarthModel,
) -> Result<FilterState, FusionError> {
    let dt = check_step(state, imu)?;
    let model = InsTransition::new(*earth);
    let (m, p) = ukf_predict_vector(
        &model,
        &state_to_vector(&state.nav),
        &state.covariance,
        &imu_to_input(imu),
        &q.matrix(),
        dt,
        params,
    )?;
    finish(m, p, imu.t)
}

/// EKF prediction of the navigation filter to the time of `imu`.
pub fn ekf_predict(
    state: &FilterState,
    imu: &ImuSample,
    q: &ProcessNoise,
    earth: &EarthModel,
) -> Result<FilterState, FusionError> {
    let dt = check_step(state, imu)?;
    let model = InsTransition::new(*earth);
    let (m, p) = ekf_predict_vector(
        &model,
        &state_to_vector(&state.nav),
        &state.covariance,
        &imu_to_input(imu),
        &q.matrix(),
        dt,
    )?;
    finish(m, p, imu.t)
}

/// Input vector helper for callers working with raw arrays.
pub fn input(gyro: [f64; 3], accel: [f64; 3]) -> InputVector {
    SVector::from_column_slice(&[gyro[0], gyro[1], gyro[2], accel[0], accel[1], accel[2]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::transition::LinearTransition;
    use crate::geo::{Attitude, GeodeticPosition};
    use crate::ins::{earth_rate_l, gravity_l, NavState};
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_linear(rng: &mut ChaCha8Rng) -> LinearTransition {
        LinearTransition {
            a: SMatrix::from_fn(|_, _| rng.random_range(-0.5..0.5)),
            b: SMatrix::from_fn(|_, _| rng.random_range(-1.0..1.0)),
        }
    }

    fn random_spd(rng: &mut ChaCha8Rng) -> StateMatrix {
        let m = StateMatrix::from_fn(|_, _| rng.random_range(-1.0..1.0));
        m * m.transpose() + StateMatrix::identity() * 0.1
    }

    #[test]
    fn sigma_point_count_for_pva_with_inputs() {
        assert_eq!(sigma_point_count(NA), 31);
    }

    #[test]
    fn weights_sum_to_one() {
        for params in [
            UkfParams::default(),
            UkfParams { alpha: 1.0, kappa: 0.0, beta: 2.0 },
            UkfParams { alpha: 0.5, kappa: 3.0, beta: 0.0 },
        ] {
            let w = params.weights(NA).unwrap();
            assert_relative_eq!(w.mean0 + 2.0 * NA as f64 * w.rest, 1.0, epsilon = 1e-9);
        }
        assert!(UkfParams { alpha: 0.0, ..UkfParams::default() }.validate(NA).is_err());
        assert!(UkfParams { alpha: 1.5, ..UkfParams::default() }.validate(NA).is_err());
        assert!(UkfParams { alpha: 1.0, kappa: -15.0, beta: 2.0 }.validate(NA).is_err());
    }

    #[test]
    fn linear_model_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = random_linear(&mut rng);
        let dt = 0.01;
        let q = SMatrix::<f64, 6, 6>::from_diagonal(&SVector::from_fn(|i, _| 0.01 * (i + 1) as f64));
        let mut x = StateVector::from_fn(|_, _| rng.random_range(-2.0..2.0));
        let mut p = random_spd(&mut rng);
        let (mut xu, mut pu) = (x, p);
        let (mut xe, mut pe) = (x, p);
        let fk = model.state_jacobian(dt);
        let gk = model.input_jacobian(dt);
        for _ in 0..100 {
            let u = InputVector::from_fn(|_, _| rng.random_range(-1.0..1.0));
            x = model.propagate(&x, &u, dt).unwrap();
            p = fk * p * fk.transpose() + gk * q * gk.transpose();
            (xu, pu) = ukf_predict_vector(&model, &xu, &pu, &u, &q, dt, &UkfParams::default()).unwrap();
            (xe, pe) = ekf_predict_vector(&model, &xe, &pe, &u, &q, dt).unwrap();
        }
        assert!((xu - x).amax() < 1e-9);
        assert!((xe - x).amax() < 1e-9);
        assert!((pu - p).amax() < 1e-9, "{}", (pu - p).amax());
        assert!((pe - p).amax() < 1e-9);
    }

    #[test]
    fn zero_q_gives_image_of_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = random_linear(&mut rng);
        let x = StateVector::from_fn(|_, _| rng.random_range(-2.0..2.0));
        let p = random_spd(&mut rng);
        let u = InputVector::zeros();
        let (_, pu) =
            ukf_predict_vector(&model, &x, &p, &u, &SMatrix::zeros(), 0.05, &UkfParams::default()).unwrap();
        let f = model.state_jacobian(0.05);
        assert!((pu - f * p * f.transpose()).amax() < 1e-9);
    }

    #[test]
    fn jacobians_of_linear_model_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = random_linear(&mut rng);
        let x = StateVector::from_fn(|_, _| rng.random_range(-50.0..50.0));
        let u = InputVector::from_fn(|_, _| rng.random_range(-10.0..10.0));
        let (f, g) = transition_jacobians(&model, &x, &u, 0.01).unwrap();
        assert!((f - model.state_jacobian(0.01)).amax() < 1e-6);
        assert!((g - model.input_jacobian(0.01)).amax() < 1e-6);
    }

    fn moving_state() -> NavState {
        NavState::new(
            GeodeticPosition::from_degrees(43.65, -79.38, 90.0).unwrap(),
            Vector3::new(6.0, 8.0, 0.0),
            Attitude::new(0.01, -0.02, 0.6435),
        )
        .unwrap()
    }

    #[test]
    fn mechanization_jacobian_gradient_check() {
        // the central difference at the default step against a Richardson-extrapolated
        // reference built from much larger steps
        let e = EarthModel::wgs84();
        let model = InsTransition::new(e);
        let nav = moving_state();
        let x = state_to_vector(&nav);
        let u = input([0.01, -0.02, 0.05], [0.3, 1.2, 9.8]);
        let dt = 0.01;
        let (f, g) = transition_jacobians(&model, &x, &u, dt).unwrap();
        let reference = |j: usize, h: f64, of_input: bool| -> StateVector {
            let diff = |h: f64| {
                let (mut xp, mut xm, mut up, mut um) = (x, x, u, u);
                if of_input {
                    up[j] += h;
                    um[j] -= h;
                } else {
                    xp[j] += h;
                    xm[j] -= h;
                }
                let mut d = wrapped_difference(
                    &model.increment(&xp, &up, dt).unwrap(),
                    &model.increment(&xm, &um, dt).unwrap(),
                    &[6, 7, 8],
                ) / (2.0 * h);
                if !of_input {
                    d[j] += 1.0;
                }
                d
            };
            (4.0 * diff(h / 2.0) - diff(h)) / 3.0
        };
        for j in 0..9 {
            let h = if j < 2 { 1e-5 } else { 1e-3 };
            let r = reference(j, h, false);
            let col = f.column(j);
            for i in 0..9 {
                let scale = r[i].abs().max(col[i].abs()).max(1e-9);
                assert!((col[i] - r[i]).abs() / scale < 1e-4 || (col[i] - r[i]).abs() < 1e-9,
                    "F[{i},{j}] {} vs {}", col[i], r[i]);
            }
        }
        for j in 0..6 {
            let r = reference(j, 1e-3, true);
            let col = g.column(j);
            for i in 0..9 {
                let scale = r[i].abs().max(col[i].abs()).max(1e-9);
                assert!((col[i] - r[i]).abs() / scale < 1e-4 || (col[i] - r[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn static_vehicle_perfect_imu() {
        let e = EarthModel::wgs84();
        let pos = GeodeticPosition::from_degrees(43.65, -79.38, 90.0).unwrap();
        let nav = NavState::new(pos, Vector3::zeros(), Attitude::level(0.0)).unwrap();
        // attitude spread biases the vertical mean at second order; keep it small
        let p0 = crate::fusion::InitialUncertainty {
            position_m: 0.5,
            velocity_mps: 0.01,
            attitude_rad: 1e-4,
        }
        .covariance(&pos, &e);
        let mut st = FilterState::new(nav, p0, 0.0).unwrap();
        let accel = -gravity_l(pos.lat, pos.alt, &e);
        let gyro = earth_rate_l(pos.lat, &e);
        let q = ProcessNoise::new([1e-4; 3], [1e-3; 3]).unwrap();
        let mut trace = st.covariance.trace();
        for k in 1..=6000 {
            let imu = ImuSample::new(k as f64 * 0.01, accel, gyro);
            st = predict(&st, &imu, &q, &UkfParams::default(), &e).unwrap();
            let t = st.covariance.trace();
            assert!(t >= trace * (1.0 - 1e-12));
            trace = t;
        }
        let frame = crate::geo::LocalFrame::new(pos, e);
        assert!(frame.to_enu(&st.nav.position).norm() < 1e-3);
    }

    #[test]
    fn ukf_and_ekf_agree_for_small_uncertainty() {
        let e = EarthModel::wgs84();
        let nav = moving_state();
        let p = crate::fusion::InitialUncertainty {
            position_m: 0.1,
            velocity_mps: 0.01,
            attitude_rad: 1e-3,
        }
        .covariance(&nav.position, &e);
        let st = FilterState::new(nav, p, 0.0).unwrap();
        let imu = ImuSample::new(0.01, Vector3::new(0.1, 0.5, 9.81), Vector3::new(0.0, 0.0, 0.1));
        let q = ProcessNoise::new([2e-3; 3], [1.5e-2; 3]).unwrap();
        let a = predict(&st, &imu, &q, &UkfParams::default(), &e).unwrap();
        let b = ekf_predict(&st, &imu, &q, &e).unwrap();
        // the means differ only by the second-order attitude term, g sigma^2 dt / 2
        let da = wrapped_difference(&a.vector(), &b.vector(), &[6, 7, 8]);
        assert!(da.amax() < 1e-7, "{}", da.amax());
        let rel = (a.covariance - b.covariance).abs().component_div(
            &b.covariance.abs().map(|v| v.max(1e-30)),
        );
        let diag_rel = (0..9).map(|i| rel[(i, i)]).fold(0.0, f64::max);
        assert!(diag_rel < 1e-4, "{diag_rel}");
    }

    #[test]
    fn rejects_non_increasing_time() {
        let e = EarthModel::wgs84();
        let st = FilterState::new(moving_state(), StateMatrix::identity() * 1e-12, 1.0).unwrap();
        let imu = ImuSample::new(1.0, Vector3::zeros(), Vector3::zeros());
        let q = ProcessNoise::new([0.0; 3], [0.0; 3]).unwrap();
        assert!(matches!(
            predict(&st, &imu, &q, &UkfParams::default(), &e),
            Err(FusionError::StreamOrdering { .. })
        ));
    }
}
