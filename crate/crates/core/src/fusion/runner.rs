//! Time-ordered event loop: IMU prediction, odometer and 5G updates.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::exclusion::{
    assess_sbr_fix, exclude_measurements, motion_bounds, Assessment, AssessmentConfig,
    ExclusionContext,
};
use super::predict::{ekf_predict, predict, UkfParams};
use super::state::{FilterState, InitialUncertainty, ProcessNoise, StateMatrix};
use super::update::{innovation_statistic, update, MeasurementBundle};
use super::FusionError;
use crate::fiveg::{
    BaseStation, ChannelObservation, FixSource, HeuristicClassifier, OracleClassifier,
    PathNoise, PositionFix, PropagationModel, ReflectionClassifier,
};
use crate::geo::LocalFrame;
use crate::ins::{ImuSample, NavState, OdometerSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Ukf,
    Ekf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierKind {
    Oracle,
    Heuristic {
        #[serde(default = "default_max_bounces")]
        max_bounces: f64,
        #[serde(default)]
        max_excess_length_m: Option<f64>,
    },
}

fn default_max_bounces() -> f64 {
    HeuristicClassifier::default().max_bounces
}

impl ClassifierKind {
    pub fn build(&self) -> Box<dyn ReflectionClassifier> {
        match *self {
            ClassifierKind::Oracle => Box::new(OracleClassifier),
            ClassifierKind::Heuristic {
                max_bounces,
                max_excess_length_m,
            } => Box::new(HeuristicClassifier {
                max_bounces,
                max_excess_length_m,
            }),
        }
    }
}

/// Where the 5G measurement covariance comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixCovariance {
    /// Each fix carries the first-order propagation of its channel-parameter noise.
    Propagated { los_scale: f64, sbr_scale: f64 },
    /// A fixed diagonal from the channel noise at a nominal range.
    Nominal { range_m: f64, sbr_scale: f64 },
}

impl Default for FixCovariance {
    fn default() -> Self {
        FixCovariance::Propagated {
            los_scale: 1.0,
            sbr_scale: 1.0,
        }
    }
}

/// Everything the filter needs besides the data streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub filter: FilterKind,
    pub ukf: UkfParams,
    pub process_noise: ProcessNoise,
    pub use_odometer: bool,
    /// Wheel-speed sigma, m/s, applied to each l-frame velocity row.
    pub odometer_sigma: f64,
    /// If set, `odometer_sigma` applies along the heading only and this sigma, m/s,
    /// across it (sideslip and vertical motion).
    pub odometer_lateral_sigma: Option<f64>,
    pub use_fiveg: bool,
    pub use_sbr: bool,
    pub propagation: PropagationModel,
    pub path_noise: PathNoise,
    pub classifier: ClassifierKind,
    pub assessment: AssessmentConfig,
    pub fix_covariance: FixCovariance,
    /// Reject 5G fixes whose innovation exceeds this chi-square probability.
    pub innovation_gate: Option<f64>,
    pub initial: InitialUncertainty,
    /// Seconds between emitted epochs; zero emits every IMU epoch.
    pub output_interval: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        let path_noise = PathNoise::from_rtt_sigma(1e-9, 0.5f64.to_radians());
        Self {
            filter: FilterKind::Ukf,
            ukf: UkfParams::default(),
            process_noise: ProcessNoise {
                gyro_sigma: [2.0e-3; 3],
                accel_sigma: [1.5e-2; 3],
            },
            use_odometer: true,
            odometer_sigma: 0.05,
            odometer_lateral_sigma: None,
            use_fiveg: true,
            use_sbr: true,
            propagation: PropagationModel::default(),
            path_noise,
            classifier: ClassifierKind::Heuristic {
                max_bounces: default_max_bounces(),
                max_excess_length_m: None,
            },
            assessment: AssessmentConfig::default(),
            fix_covariance: FixCovariance::default(),
            innovation_gate: None,
            initial: InitialUncertainty::default(),
            output_interval: 0.1,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        self.ukf.validate(15)?;
        ProcessNoise::new(self.process_noise.gyro_sigma, self.process_noise.accel_sigma)?;
        if !(self.odometer_sigma > 0.0) {
            return Err(FusionError::InvalidConfig("odometer_sigma must be positive"));
        }
        if self.odometer_lateral_sigma.is_some_and(|s| !(s > 0.0)) {
            return Err(FusionError::InvalidConfig("odometer_lateral_sigma must be positive"));
        }
        if !(self.output_interval >= 0.0) {
            return Err(FusionError::InvalidConfig("output_interval must be nonnegative"));
        }
        if let Some(p) = self.innovation_gate {
            if !(p > 0.0 && p < 1.0) {
                return Err(FusionError::InvalidConfig("innovation_gate must lie in (0, 1)"));
            }
        }
        if self.assessment.epsilon < 0.0 {
            return Err(FusionError::InvalidConfig("assessment epsilon must be nonnegative"));
        }
        Ok(())
    }
}

/// Bits of [`FilterEpoch::sources`].
pub mod source {
    pub const ODOMETER: u8 = 1;
    pub const LOS: u8 = 2;
    pub const SBR: u8 = 4;
}

/// One emitted posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterEpoch {
    pub t: f64,
    pub nav: NavState,
    pub covariance: StateMatrix,
    /// Updates applied since the previous emitted epoch.
    pub sources: u8,
}

/// Record of one SBR assessment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbrDecision {
    pub t: f64,
    pub fix: PositionFix,
    /// Latitude and longitude bounds, radians.
    pub bounds: (f64, f64),
    pub reference: NavState,
    pub decision: Assessment,
    /// False when the innovation gate rejected an included fix.
    pub applied: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionStats {
    pub imu_steps: usize,
    pub odometer_updates: usize,
    pub fiveg_epochs: usize,
    pub los_fixes: usize,
    pub los_updates: usize,
    pub sbr_fixes: usize,
    pub sbr_included: usize,
    pub sbr_updates: usize,
    pub gated: usize,
}

#[derive(Debug, Clone)]
pub struct FusionRun {
    pub epochs: Vec<FilterEpoch>,
    pub stats: FusionStats,
    pub sbr_decisions: Vec<SbrDecision>,
}

/// Input streams of one run.
#[derive(Debug, Clone, Copy)]
pub struct FusionInputs<'a> {
    pub imu: &'a [ImuSample],
    pub odometer: &'a [OdometerSample],
    pub channel: &'a [ChannelObservation],
    pub stations: &'a [BaseStation],
    pub frame: &'a LocalFrame,
}

fn check_order<T>(items: &[T], time: impl Fn(&T) -> f64, strict: bool) -> Result<(), FusionError> {
    for w in items.windows(2) {
        let (a, b) = (time(&w[0]), time(&w[1]));
        if b < a || (strict && b == a) || !b.is_finite() {
            return Err(FusionError::StreamOrdering { t: b });
        }
    }
    Ok(())
}

struct Gate {
    thresholds: [f64; 7],
}

impl Gate {
    fn new(prob: Option<f64>) -> Option<Self> {
        prob.map(|p| {
            let mut thresholds = [f64::INFINITY; 7];
            for (m, t) in thresholds.iter_mut().enumerate().skip(1) {
                *t = ChiSquared::new(m as f64).expect("positive dof").inverse_cdf(p);
            }
            Self { thresholds }
        })
    }

    fn passes(&self, state: &FilterState, b: &MeasurementBundle) -> Result<bool, FusionError> {
        let (nis, m) = innovation_statistic(state, b)?;
        Ok(nis <= self.thresholds[m])
    }
}

/// Measurements stamped within this many seconds after an IMU epoch are applied at it.
pub const TIME_TOLERANCE: f64 = 1e-9;

/// Runs the filter from `initial` over the streams. The state is emitted at
/// `cfg.output_interval` after all updates due at that time.
pub fn run_filter(
    inputs: &FusionInputs<'_>,
    initial: FilterState,
    cfg: &FusionConfig,
) -> Result<FusionRun, FusionError> {
    cfg.validate()?;
    check_order(inputs.imu, |s| s.t, true)?;
    check_order(inputs.odometer, |s| s.t, false)?;
    check_order(inputs.channel, |s| s.t, false)?;

    let earth = inputs.frame.earth;
    let classifier = cfg.classifier.build();
    let stations: BTreeMap<u32, &BaseStation> = inputs.stations.iter().map(|b| (b.id, b)).collect();
    let ex_ctx = ExclusionContext {
        frame: inputs.frame,
        propagation: &cfg.propagation,
        noise: &cfg.path_noise,
        classifier: classifier.as_ref(),
        use_sbr: cfg.use_sbr,
    };
    let gate = Gate::new(cfg.innovation_gate);

    let mut state = initial;
    let mut stats = FusionStats::default();
    let mut epochs = Vec::new();
    let mut decisions = Vec::new();
    let mut pending_sources = 0u8;
    let mut next_output = state.epoch;
    let mut odo_i = 0;
    let mut ch_i = 0;
    // posterior of the previous 5G epoch and the largest wheel speed seen since
    let mut reference = state;
    let mut speed_since_ref: f64 = 0.0;

    let mut imu_iter = inputs.imu.iter().filter(|s| s.t > initial.epoch);
    loop {
        while odo_i < inputs.odometer.len() && inputs.odometer[odo_i].t <= state.epoch + TIME_TOLERANCE {
            let o = inputs.odometer[odo_i];
            odo_i += 1;
            speed_since_ref = speed_since_ref.max(o.speed.abs());
            if cfg.use_odometer {
                let att = &state.nav.attitude;
                let b = match cfg.odometer_lateral_sigma {
                    Some(lat) => MeasurementBundle::from_odometer_along_track(o.speed, att, cfg.odometer_sigma, lat),
                    None => MeasurementBundle::from_odometer(o.speed, att, cfg.odometer_sigma),
                };
                state = update(&state, &b)?;
                stats.odometer_updates += 1;
                pending_sources |= source::ODOMETER;
            }
        }
        while ch_i < inputs.channel.len() && inputs.channel[ch_i].t <= state.epoch + TIME_TOLERANCE {
            let t = inputs.channel[ch_i].t;
            let end = ch_i + inputs.channel[ch_i..].iter().take_while(|o| o.t == t).count();
            let epoch_obs = &inputs.channel[ch_i..end];
            ch_i = end;
            if !cfg.use_fiveg {
                continue;
            }
            stats.fiveg_epochs += 1;
            let mut by_bs: BTreeMap<u32, Vec<ChannelObservation>> = BTreeMap::new();
            for o in epoch_obs {
                by_bs.entry(o.bs_id).or_default().push(*o);
            }
            let dt_ref = state.epoch - reference.epoch;
            for (bs_id, paths) in by_bs {
                let bs = stations.get(&bs_id).ok_or(FusionError::UnknownStation(bs_id))?;
                let out = exclude_measurements(
                    t,
                    &paths,
                    bs,
                    &ex_ctx,
                );
                if let Some(fix) = out.los_fix {
                    stats.los_fixes += 1;
                    let b = fix_bundle(&fix, inputs.frame, cfg);
                    if gate.as_ref().map_or(Ok(true), |g| g.passes(&state, &b))? {
                        state = update(&state, &b)?;
                        stats.los_updates += 1;
                        pending_sources |= source::LOS;
                    } else {
                        stats.gated += 1;
                    }
                }
                if let Some(fix) = out.sbr_fix {
                    stats.sbr_fixes += 1;
                    let decision = if dt_ref > 0.0 {
                        assess_sbr_fix(&fix, &reference, speed_since_ref, dt_ref, &cfg.assessment, &earth)
                    } else {
                        Assessment::Discard
                    };
                    let mut applied = false;
                    if decision == Assessment::Include {
                        stats.sbr_included += 1;
                        let b = fix_bundle(&fix, inputs.frame, cfg);
                        if gate.as_ref().map_or(Ok(true), |g| g.passes(&state, &b))? {
                            state = update(&state, &b)?;
                            stats.sbr_updates += 1;
                            pending_sources |= source::SBR;
                            applied = true;
                        } else {
                            stats.gated += 1;
                        }
                    }
                    decisions.push(SbrDecision {
                        t,
                        fix,
                        bounds: motion_bounds(&reference, speed_since_ref, dt_ref, &cfg.assessment, &earth),
                        reference: reference.nav,
                        decision,
                        applied,
                    });
                }
            }
            reference = state;
            speed_since_ref = inputs.odometer[..odo_i].last().map_or(0.0, |o| o.speed.abs());
        }
        if state.epoch >= next_output - TIME_TOLERANCE {
            epochs.push(FilterEpoch {
                t: state.epoch,
                nav: state.nav,
                covariance: state.covariance,
                sources: pending_sources,
            });
            pending_sources = 0;
            next_output = if cfg.output_interval > 0.0 {
                // stay on the grid anchored at the start time
                let n = ((state.epoch - initial.epoch) / cfg.output_interval + 1e-9).floor() + 1.0;
                initial.epoch + n * cfg.output_interval
            } else {
                state.epoch
            };
        }
        let Some(imu) = imu_iter.next() else { break };
        state = match cfg.filter {
            FilterKind::Ukf => predict(&state, imu, &cfg.process_noise, &cfg.ukf, &earth)?,
            FilterKind::Ekf => ekf_predict(&state, imu, &cfg.process_noise, &earth)?,
        };
        stats.imu_steps += 1;
    }
    Ok(FusionRun {
        epochs,
        stats,
        sbr_decisions: decisions,
    })
}

fn fix_bundle(fix: &PositionFix, frame: &LocalFrame, cfg: &FusionConfig) -> MeasurementBundle {
    match cfg.fix_covariance {
        FixCovariance::Propagated { los_scale, sbr_scale } => {
            let scale = if fix.source == FixSource::Los { los_scale } else { sbr_scale };
            MeasurementBundle::from_fix(fix, frame, scale)
        }
        FixCovariance::Nominal { range_m, sbr_scale } => {
            let h = range_m * cfg.path_noise.aod_azimuth.max(cfg.path_noise.range_m / range_m);
            let v = range_m * cfg.path_noise.aod_elevation;
            let mut nominal = *fix;
            nominal.covariance = Matrix3::from_diagonal(&nalgebra::Vector3::new(h * h, h * h, v * v));
            if fix.source == FixSource::Sbr {
                // keep the pseudo-measured altitude variance of the fix itself
                nominal.covariance[(2, 2)] = fix.covariance[(2, 2)];
                let s = sbr_scale;
                nominal.covariance[(0, 0)] *= s;
                nominal.covariance[(1, 1)] *= s;
            }
            MeasurementBundle::from_fix(&nominal, frame, 1.0)
        }
    }
}

/// Writes `t, lat, lon, h, ve, vn, vu, pitch, roll, azimuth, source_mask, P00..P88`.
pub fn write_output_csv<W: Write>(writer: W, epochs: &[FilterEpoch]) -> Result<(), FusionError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = [
        "t", "lat", "lon", "h", "ve", "vn", "vu", "pitch", "roll", "azimuth", "source_mask",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..9).map(|i| format!("p{i}{i}")));
    w.write_record(&header)?;
    for e in epochs {
        let x = super::state::state_to_vector(&e.nav);
        let mut row = vec![e.t.to_string()];
        row.extend(x.iter().map(|v| v.to_string()));
        row.push(e.sources.to_string());
        row.extend((0..9).map(|i| e.covariance[(i, i)].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
