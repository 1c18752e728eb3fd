//! 5G mmWave channel handling: LoS/NLoS detection, reflection-order classification and
//! LoS / single-bounce-reflection positioning.

mod channel;
mod nlos;
mod positioning;

pub use channel::{
    azimuth_unit, distance_to_rtt, read_observations_csv, rtt_to_distance,
    write_observations_csv, BaseStation, ChannelObservation, FixSource, PathNoise, PositionFix,
    SPEED_OF_LIGHT,
};
pub use nlos::{
    detect_links, detect_nlos, ClassifierContext, HeuristicClassifier, LinkClass,
    OracleClassifier, PropagationModel, ReflectionClassifier, ReflectionOrder,
};
pub use positioning::{
    line_angle, los_fix_2d, los_fix_3d, sbr_fix, sbr_line, sbr_point_for_r, FixContext, SbrLine,
    SbrSource, PARALLEL_THRESHOLD,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FivegError {
    #[error("range {0} m is not positive")]
    NonPositiveRange(f64),
    #[error("departure and arrival directions cancel; no reflection line exists")]
    DegenerateGeometry,
    #[error("scatterer distance {r} m outside (0, {d}) m")]
    ScattererOutOfRange { r: f64, d: f64 },
    #[error("need at least two reflection lines, got {0}")]
    InsufficientPaths(usize),
    #[error("reflection lines are too close to parallel")]
    IllConditioned,
    #[error("timestamps decrease at row {index} (t = {t})")]
    StreamOrdering { index: usize, t: f64 },
    #[error("invalid observation at row {index}: {reason}")]
    InvalidObservation { index: usize, reason: &'static str },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
