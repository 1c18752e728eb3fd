//! Channel observations, base stations and position fixes.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use super::FivegError;
use crate::geo::{GeodeticPosition, LocalFrame};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// One resolved propagation path reported for a base station at one epoch.
///
/// Azimuths are clockwise from north. `aod_azimuth` is the direction the path leaves
/// the base station; `aoa_azimuth` is the direction, seen from the UE, towards the
/// last interaction point of the arriving path (the base station itself for LoS).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelObservation {
    pub t: f64,
    pub bs_id: u32,
    /// 0 is the strongest path.
    pub path_index: u32,
    /// Round-trip time, seconds.
    pub rtt: f64,
    pub aod_azimuth: f64,
    /// Positive above the horizon.
    pub aod_elevation: f64,
    pub aoa_azimuth: f64,
    pub rss_dbm: f64,
    /// Simulator ground truth, when known.
    pub truth_bounces: Option<u32>,
}

/// A base station with a known position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub id: u32,
    /// Antenna phase center in the scene ENU frame, meters.
    pub enu: Vector3<f64>,
    pub position: GeodeticPosition,
    /// Elements in the uniform linear array, metadata only.
    #[serde(default = "default_array_elements")]
    pub array_elements: u32,
}

fn default_array_elements() -> u32 {
    8
}

impl BaseStation {
    pub fn new(id: u32, enu: Vector3<f64>, frame: &LocalFrame) -> Self {
        Self {
            id,
            enu,
            position: frame.to_geodetic(&enu),
            array_elements: default_array_elements(),
        }
    }

    pub fn xy(&self) -> Vector2<f64> {
        self.enu.xy()
    }
}

/// Which positioning method produced a fix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FixSource {
    Los,
    Sbr,
}

/// A 5G position solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionFix {
    pub epoch: f64,
    pub position: GeodeticPosition,
    /// Same point in the scene ENU frame.
    pub enu: Vector3<f64>,
    /// ENU covariance, m^2.
    pub covariance: Matrix3<f64>,
    pub source: FixSource,
    pub path_count: usize,
}

/// Measurement noise of the channel-parameter estimates, used to attach covariances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathNoise {
    /// One-way range sigma, meters.
    pub range_m: f64,
    pub aod_azimuth: f64,
    pub aod_elevation: f64,
    pub aoa_azimuth: f64,
}

impl PathNoise {
    /// From an RTT sigma in seconds and a common angle sigma in radians.
    pub fn from_rtt_sigma(rtt_sigma: f64, angle_sigma: f64) -> Self {
        Self {
            range_m: SPEED_OF_LIGHT * rtt_sigma / 2.0,
            aod_azimuth: angle_sigma,
            aod_elevation: angle_sigma,
            aoa_azimuth: angle_sigma,
        }
    }
}

/// One-way range from a round-trip time.
pub fn rtt_to_distance(rtt: f64) -> f64 {
    SPEED_OF_LIGHT * rtt / 2.0
}

pub fn distance_to_rtt(d: f64) -> f64 {
    2.0 * d / SPEED_OF_LIGHT
}

/// Unit horizontal direction of a clockwise-from-north azimuth, `(east, north)`.
pub fn azimuth_unit(azimuth: f64) -> Vector2<f64> {
    let (s, c) = azimuth.sin_cos();
    Vector2::new(s, c)
}

#[derive(Debug, Serialize, Deserialize)]
struct ObservationRow {
    t: f64,
    bs_id: u32,
    path_index: u32,
    rtt_s: f64,
    aod_az_rad: f64,
    aod_el_rad: f64,
    aoa_az_rad: f64,
    rss_dbm: f64,
    #[serde(default)]
    truth_bounce_count: Option<u32>,
}

/// Reads channel observations; the `truth_bounce_count` column may be absent or blank.
pub fn read_observations_csv<R: Read>(reader: R) -> Result<Vec<ChannelObservation>, FivegError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out: Vec<ChannelObservation> = Vec::new();
    for (index, row) in rdr.deserialize::<ObservationRow>().enumerate() {
        let r = row?;
        if out.last().is_some_and(|p| r.t < p.t) {
            return Err(FivegError::StreamOrdering { index, t: r.t });
        }
        if !(r.rtt_s > 0.0) {
            return Err(FivegError::InvalidObservation { index, reason: "rtt must be positive" });
        }
        out.push(ChannelObservation {
            t: r.t,
            bs_id: r.bs_id,
            path_index: r.path_index,
            rtt: r.rtt_s,
            aod_azimuth: r.aod_az_rad,
            aod_elevation: r.aod_el_rad,
            aoa_azimuth: r.aoa_az_rad,
            rss_dbm: r.rss_dbm,
            truth_bounces: r.truth_bounce_count,
        });
    }
    Ok(out)
}

pub fn write_observations_csv<W: Write>(
    writer: W,
    obs: &[ChannelObservation],
    with_truth: bool,
) -> Result<(), FivegError> {
    let mut w = csv::Writer::from_writer(writer);
    if with_truth {
        for o in obs {
            w.serialize(ObservationRow {
                t: o.t,
                bs_id: o.bs_id,
                path_index: o.path_index,
                rtt_s: o.rtt,
                aod_az_rad: o.aod_azimuth,
                aod_el_rad: o.aod_elevation,
                aoa_az_rad: o.aoa_azimuth,
                rss_dbm: o.rss_dbm,
                truth_bounce_count: o.truth_bounces,
            })?;
        }
    } else {
        w.write_record([
            "t", "bs_id", "path_index", "rtt_s", "aod_az_rad", "aod_el_rad", "aoa_az_rad",
            "rss_dbm",
        ])?;
        for o in obs {
            w.write_record([
                o.t.to_string(),
                o.bs_id.to_string(),
                o.path_index.to_string(),
                o.rtt.to_string(),
                o.aod_azimuth.to_string(),
                o.aod_elevation.to_string(),
                o.aoa_azimuth.to_string(),
                o.rss_dbm.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
