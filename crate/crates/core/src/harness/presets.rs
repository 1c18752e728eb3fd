//! Bundled experiments on the downtown scene: fusion engine and SBR ablations.

use std::path::Path;

use super::experiment::{ExperimentConfig, ImuPreset};
use crate::fusion::{FilterKind, FusionConfig};
use crate::sim::presets::{self, Drive};

/// Chi-square probability of the innovation gate in the bundled experiments.
pub const INNOVATION_GATE: f64 = 0.9999;

/// Initial position sigma, meters. The bundled runs start from the true state.
pub const INITIAL_POSITION_SIGMA: f64 = 1.0;

/// Fusion settings matched to the bundled scenarios' channel noise.
pub fn fusion_config() -> FusionConfig {
    let mut f = FusionConfig {
        path_noise: presets::path_noise(),
        innovation_gate: Some(INNOVATION_GATE),
        ..FusionConfig::default()
    };
    f.initial.position_m = INITIAL_POSITION_SIGMA;
    f
}

pub fn drive_name(d: Drive) -> &'static str {
    match d {
        Drive::LowOutage => "low-outage",
        Drive::HighOutage => "high-outage",
    }
}

/// One bundled experiment; its output goes to `<out>/<name>`.
pub fn experiment(drive: Drive, filter: FilterKind, sbr: bool, seeds: &[u64], out: &Path) -> ExperimentConfig {
    let name = format!(
        "{}-{}-{}",
        drive_name(drive),
        match filter {
            FilterKind::Ukf => "ukf",
            FilterKind::Ekf => "ekf",
        },
        if sbr { "sbr" } else { "nosbr" }
    );
    ExperimentConfig {
        output_dir: out.join(&name),
        name,
        preset: Some(drive),
        scenario_path: None,
        scenario: None,
        scene_path: None,
        imu: Some(ImuPreset::Consumer),
        fusion: fusion_config(),
        filter: Some(filter),
        sbr: Some(sbr),
        seeds: seeds.to_vec(),
    }
}

/// UKF against EKF, both with SBR fusion.
pub fn ukf_vs_ekf(drive: Drive, seeds: &[u64], out: &Path) -> [ExperimentConfig; 2] {
    [
        experiment(drive, FilterKind::Ukf, true, seeds, out),
        experiment(drive, FilterKind::Ekf, true, seeds, out),
    ]
}

/// UKF with and without SBR fusion.
pub fn sbr_ablation(drive: Drive, seeds: &[u64], out: &Path) -> [ExperimentConfig; 2] {
    [
        experiment(drive, FilterKind::Ukf, true, seeds, out),
        experiment(drive, FilterKind::Ukf, false, seeds, out),
    ]
}
