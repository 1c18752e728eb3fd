//! Bundled downtown scene and two drives through it.
//!
//! Two parallel north-south boulevards, A (lane at x = 2 m) and B (lane at x = 202 m),
//! are separated by a row of tall blocks whose A-side frontage is a sawtooth of wall
//! segments at +/-30 degrees. Small cells stand on the west side of each boulevard,
//! 250 m apart, 6 m above ground. A 4 m construction hoarding runs along the west curb
//! of A with openings in front of some cells only, so the direct path is cut for long
//! stretches while reflections off the sawtooth frontage still clear the hoarding.
//! Drive "high outage" runs up A, drive "low outage" up B; both finish with a turn into
//! the open street north of the blocks.

use serde::{Deserialize, Serialize};

use super::noise::ChannelNoise;
use super::scenario::{Scenario, ServingPolicy};
use super::scene::{Building, Scene, SceneOrigin, StationSite};
use super::trace::TraceConfig;
use super::trajectory::{StopSpec, TrajectorySpec};
use crate::fiveg::PathNoise;
use crate::ins::{ImuErrorModel, OdometerErrorModel};

/// North extent of the hoarding along boulevard A, meters.
pub const HOARDING_SPAN: (f64, f64) = (0.0, 1650.0);
/// North coordinates of the A-side cells that face an opening in the hoarding.
pub const HOARDING_OPENINGS: [f64; 5] = [50.0, 300.0, 800.0, 1300.0, 1550.0];
const OPENING_HALF_WIDTH: f64 = 20.0;

const BLOCK_ROWS: [(f64, f64); 4] = [(-200.0, 240.0), (260.0, 740.0), (760.0, 1240.0), (1260.0, 1740.0)];
const CELL_HEIGHT: f64 = 6.0;
const TOOTH_PITCH: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Drive {
    LowOutage,
    HighOutage,
}

fn rect(id: u32, x0: f64, x1: f64, y0: f64, y1: f64, height: f64) -> Building {
    Building {
        id,
        height,
        footprint: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
    }
}

/// Block whose west face zigzags between `x0` and `x0 + depth`.
fn sawtooth_block(id: u32, x0: f64, x1: f64, y0: f64, y1: f64, height: f64) -> Building {
    let depth = 0.5 * TOOTH_PITCH * 30f64.to_radians().tan();
    let teeth = ((y1 - y0) / TOOTH_PITCH).floor() as usize;
    let mut footprint = vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]];
    let top = y0 + teeth as f64 * TOOTH_PITCH;
    if top < y1 {
        footprint.push([x0, top]);
    }
    for i in 1..2 * teeth {
        let x = if i % 2 == 1 { x0 + depth } else { x0 };
        footprint.push([x, top - i as f64 * 0.5 * TOOTH_PITCH]);
    }
    Building { id, height, footprint }
}

/// The bundled scene.
pub fn downtown_scene() -> Scene {
    let mut buildings = Vec::new();
    let mut id = 0;
    let mut next = || {
        id += 1;
        id
    };
    for (k, &(y0, y1)) in BLOCK_ROWS.iter().enumerate() {
        let h = 25.0 + 5.0 * k as f64;
        // west of A
        buildings.push(rect(next(), -120.0, -22.0, y0, y1, h + 10.0));
        // between A and B
        buildings.push(sawtooth_block(next(), 12.0, 150.0, y0, y1, h + 15.0));
        // east of B
        buildings.push(rect(next(), 214.0, 330.0, y0, y1, h));
    }
    let mut y = HOARDING_SPAN.0;
    for &o in HOARDING_OPENINGS.iter().chain(std::iter::once(&f64::INFINITY)) {
        let end = (o - OPENING_HALF_WIDTH).min(HOARDING_SPAN.1);
        if end > y {
            buildings.push(rect(next(), -5.0, -4.0, y, end, 4.0));
        }
        y = o + OPENING_HALF_WIDTH;
    }
    let mut stations = Vec::new();
    for k in 0..8 {
        stations.push(StationSite {
            id: k,
            position: [-14.0, 50.0 + 250.0 * k as f64, CELL_HEIGHT],
        });
    }
    for k in 0..8 {
        stations.push(StationSite {
            id: 100 + k,
            position: [186.0, 175.0 + 250.0 * k as f64, CELL_HEIGHT],
        });
    }
    let origin = SceneOrigin {
        lat_deg: 44.2312,
        lon_deg: -76.4860,
        alt_m: 80.0,
    };
    Scene::new(origin, buildings, stations).expect("bundled scene is valid")
}

/// Drive through the bundled scene with stop-and-go dynamics.
pub fn drive(which: Drive) -> TrajectorySpec {
    let (waypoints, stops) = match which {
        Drive::HighOutage => (
            vec![[2.0, 0.0], [2.0, 1750.0], [140.0, 1750.0]],
            vec![
                StopSpec { at_m: 430.0, dwell_s: 6.0 },
                StopSpec { at_m: 1000.0, dwell_s: 3.0 },
                StopSpec { at_m: 1400.0, dwell_s: 4.0 },
            ],
        ),
        Drive::LowOutage => (
            vec![[202.0, 0.0], [202.0, 1750.0], [60.0, 1750.0]],
            vec![
                StopSpec { at_m: 430.0, dwell_s: 6.0 },
                StopSpec { at_m: 1000.0, dwell_s: 3.0 },
            ],
        ),
    };
    TrajectorySpec {
        waypoints,
        fillet_radius_m: 15.0,
        cruise_speed: 9.0,
        turn_speed: 4.0,
        accel: 2.5,
        decel: 3.5,
        lateral_accel_cap: 3.0,
        stops,
        start_dwell_s: 5.0,
        end_dwell_s: 2.0,
        imu_rate_hz: 100.0,
        odometer_rate_hz: 10.0,
    }
}

/// Channel noise of the bundled scenarios: ray-tracer grade timing and angles, with the
/// RSS spread left wide enough that NLoS detection still errs now and then.
pub fn channel_noise() -> ChannelNoise {
    let angle = 0.1f64.to_radians();
    ChannelNoise {
        rtt_sigma: 0.2e-9,
        aod_azimuth_sigma: angle,
        aod_elevation_sigma: angle,
        aoa_azimuth_sigma: angle,
        rss_sigma_db: 2.0,
        ..ChannelNoise::default()
    }
}

/// Path noise matching [`channel_noise`], for the fusion side.
pub fn path_noise() -> PathNoise {
    let n = channel_noise();
    PathNoise::from_rtt_sigma(n.rtt_sigma, n.aod_azimuth_sigma)
}

/// Complete scenario for a bundled drive with the given IMU error model.
pub fn scenario(which: Drive, imu_errors: ImuErrorModel) -> Scenario {
    Scenario {
        scene: downtown_scene(),
        trajectory: drive(which),
        trace: TraceConfig::default(),
        fiveg_rate_hz: 10.0,
        channel_noise: channel_noise(),
        imu_errors,
        odometer_errors: OdometerErrorModel { noise_sigma: 0.05, scale_error: 0.0 },
        serving: ServingPolicy::Nearest,
    }
}
