//! Additive channel-parameter noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::trace::PathRecord;
use crate::fiveg::ChannelObservation;
use crate::geo::wrap_two_pi;

/// Gaussian noise on the reported channel parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelNoise {
    /// Round-trip time sigma, seconds.
    pub rtt_sigma: f64,
    /// Radians.
    pub aod_azimuth_sigma: f64,
    pub aod_elevation_sigma: f64,
    pub aoa_azimuth_sigma: f64,
    pub rss_sigma_db: f64,
    /// Probability that a path with two or more reflections reports one reflection
    /// loss less than it suffered, so that its power looks like a single bounce.
    pub double_bounce_disguise: f64,
    pub disguise_gain_db: f64,
}

impl Default for ChannelNoise {
    fn default() -> Self {
        let angle = 0.5f64.to_radians();
        Self {
            rtt_sigma: 1e-9,
            aod_azimuth_sigma: angle,
            aod_elevation_sigma: angle,
            aoa_azimuth_sigma: angle,
            rss_sigma_db: 2.0,
            double_bounce_disguise: 0.0,
            disguise_gain_db: 6.0,
        }
    }
}

impl ChannelNoise {
    pub fn none() -> Self {
        Self {
            rtt_sigma: 0.0,
            aod_azimuth_sigma: 0.0,
            aod_elevation_sigma: 0.0,
            aoa_azimuth_sigma: 0.0,
            rss_sigma_db: 0.0,
            double_bounce_disguise: 0.0,
            disguise_gain_db: 6.0,
        }
    }

    pub fn validate(&self) -> Result<(), super::SimError> {
        let sigmas = [
            self.rtt_sigma,
            self.aod_azimuth_sigma,
            self.aod_elevation_sigma,
            self.aoa_azimuth_sigma,
            self.rss_sigma_db,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0)) || !(0.0..=1.0).contains(&self.double_bounce_disguise) {
            return Err(super::SimError::InvalidConfig(
                "channel noise sigmas must be nonnegative and the disguise probability in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Noisy observations of `records`, in order. Each record consumes the same number of
/// draws, so a seed replays bit-identically and truth labels stay attached.
pub fn corrupt_channel(records: &[PathRecord], noise: &ChannelNoise, seed: u64) -> Vec<ChannelObservation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records
        .iter()
        .map(|r| {
            let mut z = [0.0; 5];
            for v in &mut z {
                *v = StandardNormal.sample(&mut rng);
            }
            let u: f64 = rng.random();
            let mut o = r.obs;
            o.rtt = (o.rtt + noise.rtt_sigma * z[0]).max(f64::MIN_POSITIVE);
            o.aod_azimuth = wrap_two_pi(o.aod_azimuth + noise.aod_azimuth_sigma * z[1]);
            o.aod_elevation += noise.aod_elevation_sigma * z[2];
            o.aoa_azimuth = wrap_two_pi(o.aoa_azimuth + noise.aoa_azimuth_sigma * z[3]);
            o.rss_dbm += noise.rss_sigma_db * z[4];
            if r.bounces >= 2 && u < noise.double_bounce_disguise {
                o.rss_dbm += noise.disguise_gain_db;
            }
            o
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiveg::{distance_to_rtt, ChannelObservation};
    use nalgebra::Vector3;

    fn rec(i: u32, bounces: u32) -> PathRecord {
        let d = 100.0 + i as f64;
        PathRecord {
            obs: ChannelObservation {
                t: 0.1 * i as f64,
                bs_id: 1,
                path_index: 0,
                rtt: distance_to_rtt(d),
                aod_azimuth: 1.0,
                aod_elevation: -0.05,
                aoa_azimuth: 4.0,
                rss_dbm: -80.0,
                truth_bounces: Some(bounces),
            },
            bounces,
            reflectors: vec![],
            points: vec![Vector3::zeros(); bounces as usize],
            length: d,
            los: bounces == 0,
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let recs: Vec<_> = (0..20).map(|i| rec(i, i % 3)).collect();
        let out = corrupt_channel(&recs, &ChannelNoise::none(), 5);
        for (o, r) in out.iter().zip(&recs) {
            assert_eq!(*o, r.obs);
        }
    }

    #[test]
    fn angle_sigma_is_reproduced() {
        let recs: Vec<_> = (0..100_000).map(|_| rec(0, 0)).collect();
        let noise = ChannelNoise { aod_azimuth_sigma: 1f64.to_radians(), ..ChannelNoise::none() };
        let out = corrupt_channel(&recs, &noise, 11);
        let n = out.len() as f64;
        let mean = out.iter().map(|o| o.aod_azimuth).sum::<f64>() / n;
        let var = out.iter().map(|o| (o.aod_azimuth - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let ratio = var.sqrt() / 1f64.to_radians();
        assert!((ratio - 1.0).abs() < 0.03, "{ratio}");
    }

    #[test]
    fn seed_replay_is_bit_identical() {
        let recs: Vec<_> = (0..200).map(|i| rec(i, i % 3)).collect();
        let noise = ChannelNoise { double_bounce_disguise: 0.5, ..ChannelNoise::default() };
        let a = corrupt_channel(&recs, &noise, 3);
        let b = corrupt_channel(&recs, &noise, 3);
        assert_eq!(a, b);
        assert_ne!(a, corrupt_channel(&recs, &noise, 4));
    }

    #[test]
    fn disguise_only_touches_multi_bounce_paths() {
        let recs: Vec<_> = (0..300).map(|i| rec(i, i % 3)).collect();
        let noise = ChannelNoise { double_bounce_disguise: 1.0, ..ChannelNoise::none() };
        let out = corrupt_channel(&recs, &noise, 0);
        for (o, r) in out.iter().zip(&recs) {
            let gain = o.rss_dbm - r.obs.rss_dbm;
            assert_eq!(gain, if r.bounces >= 2 { 6.0 } else { 0.0 });
        }
    }
}
