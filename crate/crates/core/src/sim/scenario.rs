//! A complete simulated drive: scene, trajectory, tracing at the 5G epoch rate and the
//! corrupted sensor streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::noise::{corrupt_channel, ChannelNoise};
use super::scene::Scene;
use super::trace::{trace_paths, PathRecord, TraceConfig};
use super::trajectory::{generate_trajectory, TrajectorySpec, TruthTrajectory};
use super::SimError;
use crate::fiveg::{BaseStation, ChannelObservation};
use crate::ins::{corrupt_imu, corrupt_odometer, ImuErrorModel, ImuSample, OdometerErrorModel, OdometerSample};

/// Scene, drive and sensor models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub scene: Scene,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub trace: TraceConfig,
    /// 5G measurement epochs per second.
    #[serde(default = "default_fiveg_rate")]
    pub fiveg_rate_hz: f64,
    #[serde(default)]
    pub channel_noise: ChannelNoise,
    #[serde(default)]
    pub imu_errors: ImuErrorModel,
    #[serde(default)]
    pub odometer_errors: OdometerErrorModel,
    #[serde(default)]
    pub serving: ServingPolicy,
}

/// Which cells report channel measurements at an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServingPolicy {
    /// Only the cell nearest to the UE, the one it is connected to.
    #[default]
    Nearest,
    /// Every cell within the tracer range.
    All,
}

fn default_fiveg_rate() -> f64 {
    1.0
}

/// All traced paths of one base station at one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochPaths {
    pub t: f64,
    pub bs_id: u32,
    pub paths: Vec<PathRecord>,
}

/// Noise-free outputs of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanRun {
    pub truth: TruthTrajectory,
    pub stations: Vec<BaseStation>,
    /// Epoch-major, then by base-station id; one entry per reporting cell.
    pub epochs: Vec<EpochPaths>,
}

impl CleanRun {
    pub fn records(&self) -> impl Iterator<Item = &PathRecord> {
        self.epochs.iter().flat_map(|e| e.paths.iter())
    }
}

/// Sensor streams as the navigation stack sees them.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub imu: Vec<ImuSample>,
    pub odometer: Vec<OdometerSample>,
    pub channel: Vec<ChannelObservation>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.fiveg_rate_hz > 0.0) {
            return Err(SimError::InvalidConfig("fiveg_rate_hz must be positive".into()));
        }
        if self.trace.max_bounces > 2 {
            return Err(SimError::InvalidConfig("the tracer supports at most two bounces".into()));
        }
        self.channel_noise.validate()
    }

    /// Applies the sensor and channel noise. The single `seed` is expanded into one
    /// stream per sensor.
    pub fn corrupt(&self, clean: &CleanRun, seed: u64) -> Result<Measurements, SimError> {
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let (s_imu, s_odo, s_ch): (u64, u64, u64) = (master.random(), master.random(), master.random());
        let records: Vec<PathRecord> = clean.records().cloned().collect();
        Ok(Measurements {
            imu: corrupt_imu(&clean.truth.imu, &self.imu_errors, s_imu)?,
            odometer: corrupt_odometer(&clean.truth.odometer, &self.odometer_errors, s_odo),
            channel: corrupt_channel(&records, &self.channel_noise, s_ch),
        })
    }
}

/// Generates the truth drive and traces every base station at each 5G epoch. Epochs
/// are traced in parallel; the output order does not depend on scheduling.
pub fn trace_trajectory(scenario: &Scenario) -> Result<CleanRun, SimError> {
    scenario.validate()?;
    let scene = &scenario.scene;
    let frame = scene.frame();
    let truth = generate_trajectory(&scenario.trajectory, &frame, scene.ue_height)?;
    let stations = scene.base_stations();
    let t_end = truth.samples.last().map_or(0.0, |s| s.t);
    let n = (t_end * scenario.fiveg_rate_hz + 1e-9).floor() as usize;
    let epochs: Vec<Vec<EpochPaths>> = (1..=n)
        .into_par_iter()
        .map(|j| {
            let t = j as f64 / scenario.fiveg_rate_hz;
            let ue = frame.to_enu(&truth.nearest(t).nav.position);
            let serving: Vec<&BaseStation> = match scenario.serving {
                ServingPolicy::All => stations.iter().collect(),
                ServingPolicy::Nearest => stations
                    .iter()
                    .min_by(|a, b| (a.xy() - ue.xy()).norm().total_cmp(&(b.xy() - ue.xy()).norm()))
                    .into_iter()
                    .collect(),
            };
            serving
                .into_iter()
                .map(|bs| {
                    let mut paths = trace_paths(scene, bs, &ue, &scenario.trace);
                    for p in &mut paths {
                        p.obs.t = t;
                    }
                    EpochPaths { t, bs_id: bs.id, paths }
                })
                .collect()
        })
        .collect();
    Ok(CleanRun { truth, stations, epochs: epochs.into_iter().flatten().collect() })
}
