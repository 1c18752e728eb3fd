//! LoS/NLoS link detection and order-of-reflection classification.

use serde::{Deserialize, Serialize};

use super::channel::{rtt_to_distance, ChannelObservation, SPEED_OF_LIGHT};

/// Free-space path-loss model with a fixed loss per specular reflection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationModel {
    pub carrier_hz: f64,
    /// Effective radiated power including array gain, dBm.
    pub tx_power_dbm: f64,
    pub reflection_loss_db: f64,
    /// A path is NLoS when `|d_rss - d_rtt| > nlos_abs_m + nlos_rel * d_rtt`.
    pub nlos_abs_m: f64,
    pub nlos_rel: f64,
}

impl Default for PropagationModel {
    fn default() -> Self {
        Self {
            carrier_hz: 28e9,
            tx_power_dbm: 40.0,
            reflection_loss_db: 6.0,
            nlos_abs_m: 1.0,
            // half the single-reflection loss, as a range ratio (10^(3/20) - 1)
            nlos_rel: 0.412_537_6,
        }
    }
}

impl PropagationModel {
    /// Free-space path loss at distance `d` meters, dB.
    pub fn fspl_db(&self, d: f64) -> f64 {
        20.0 * (4.0 * std::f64::consts::PI * d * self.carrier_hz / SPEED_OF_LIGHT).log10()
    }

    /// Received power of a path of length `d` with `bounces` reflections.
    pub fn rss_dbm(&self, d: f64, bounces: u32) -> f64 {
        self.tx_power_dbm - self.fspl_db(d) - bounces as f64 * self.reflection_loss_db
    }

    /// Distance at which free-space loss alone explains `rss`.
    pub fn rss_to_distance(&self, rss_dbm: f64) -> f64 {
        let loss = self.tx_power_dbm - rss_dbm;
        10f64.powf(loss / 20.0) * SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * self.carrier_hz)
    }

    /// Excess loss of a path beyond free space, in units of one reflection.
    pub fn equivalent_bounces(&self, rtt: f64, rss_dbm: f64) -> f64 {
        let d = rtt_to_distance(rtt);
        (self.tx_power_dbm - self.fspl_db(d) - rss_dbm) / self.reflection_loss_db
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkClass {
    Los,
    Nlos,
}

/// Compares the RTT range with the range implied by the received power.
/// A discrepancy exactly at the threshold is LoS.
pub fn detect_nlos(rtt: f64, rss_dbm: f64, model: &PropagationModel) -> LinkClass {
    let d_rtt = rtt_to_distance(rtt);
    let d_rss = model.rss_to_distance(rss_dbm);
    if (d_rss - d_rtt).abs() > model.nlos_abs_m + model.nlos_rel * d_rtt {
        LinkClass::Nlos
    } else {
        LinkClass::Los
    }
}

/// Classifies every path of one base station at one epoch. Only the shortest path can
/// be the direct one, so at most one path comes back as LoS.
pub fn detect_links(paths: &[ChannelObservation], model: &PropagationModel) -> Vec<LinkClass> {
    let shortest = paths
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.rtt.total_cmp(&b.1.rtt))
        .map(|(i, _)| i);
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if Some(i) == shortest {
                detect_nlos(p.rtt, p.rss_dbm, model)
            } else {
                LinkClass::Nlos
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReflectionOrder {
    Single,
    Higher,
}

/// What a reflection-order classifier may look at besides the path itself.
#[derive(Debug, Clone, Copy)]
pub struct ClassifierContext<'a> {
    pub link: LinkClass,
    pub model: &'a PropagationModel,
    /// All paths of the same base station at the same epoch.
    pub epoch_paths: &'a [ChannelObservation],
}

/// Decides whether an NLoS path is a single-bounce reflection.
pub trait ReflectionClassifier: Send + Sync {
    fn name(&self) -> &'static str;

    /// Only defined for NLoS paths.
    fn classify(&self, obs: &ChannelObservation, ctx: &ClassifierContext<'_>) -> ReflectionOrder;
}

/// Reads the simulator's bounce count. Paths without ground truth are rejected.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleClassifier;

impl ReflectionClassifier for OracleClassifier {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn classify(&self, obs: &ChannelObservation, ctx: &ClassifierContext<'_>) -> ReflectionOrder {
        debug_assert_eq!(ctx.link, LinkClass::Nlos, "reflection order asked of a LoS path");
        match obs.truth_bounces {
            Some(1) => ReflectionOrder::Single,
            _ => ReflectionOrder::Higher,
        }
    }
}

/// Rounds the excess loss to a bounce count, optionally capping the excess length over
/// the shortest path of the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicClassifier {
    /// Largest equivalent bounce count still accepted as a single reflection.
    pub max_bounces: f64,
    /// Paths longer than the epoch's shortest by more than this are rejected.
    pub max_excess_length_m: Option<f64>,
}

impl Default for HeuristicClassifier {
    fn default() -> Self {
        Self {
            max_bounces: 1.5,
            max_excess_length_m: None,
        }
    }
}

impl ReflectionClassifier for HeuristicClassifier {
    fn name(&self) -> &'static str {
        "heuristic"
    }

    fn classify(&self, obs: &ChannelObservation, ctx: &ClassifierContext<'_>) -> ReflectionOrder {
        debug_assert_eq!(ctx.link, LinkClass::Nlos, "reflection order asked of a LoS path");
        if let Some(max_excess) = self.max_excess_length_m {
            let shortest = ctx
                .epoch_paths
                .iter()
                .map(|p| p.rtt)
                .fold(obs.rtt, f64::min);
            if rtt_to_distance(obs.rtt) - rtt_to_distance(shortest) > max_excess {
                return ReflectionOrder::Higher;
            }
        }
        if ctx.model.equivalent_bounces(obs.rtt, obs.rss_dbm) <= self.max_bounces {
            ReflectionOrder::Single
        } else {
            ReflectionOrder::Higher
        }
    }
}
