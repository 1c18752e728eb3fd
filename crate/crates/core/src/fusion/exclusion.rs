//! Per-epoch routing of channel paths to the LoS and SBR positioning branches, and the
//! odometer-based plausibility gate for SBR fixes.

use serde::{Deserialize, Serialize};

use super::state::FilterState;
use crate::fiveg::{
    detect_links, los_fix_3d, rtt_to_distance, sbr_fix, sbr_line, BaseStation,
    ChannelObservation, ClassifierContext, FixContext, LinkClass, PathNoise,
    PositionFix, PropagationModel, ReflectionClassifier, ReflectionOrder, SbrLine,
};
use crate::geo::{EarthModel, LocalFrame};

/// How one path was routed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathRouting {
    pub path_index: u32,
    pub link: LinkClass,
    /// Only set for NLoS paths.
    pub order: Option<ReflectionOrder>,
}

/// Result of processing one base station's paths at one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct ExclusionOutcome {
    pub bs_id: u32,
    pub routing: Vec<PathRouting>,
    pub los_fix: Option<PositionFix>,
    pub sbr_lines: Vec<SbrLine>,
    pub sbr_fix: Option<PositionFix>,
}

/// Inputs shared by every epoch.
#[derive(Clone, Copy)]
pub struct ExclusionContext<'a> {
    pub frame: &'a LocalFrame,
    pub propagation: &'a PropagationModel,
    pub noise: &'a PathNoise,
    pub classifier: &'a dyn ReflectionClassifier,
    /// When false the SBR branch is skipped entirely.
    pub use_sbr: bool,
}

/// Routes the paths of one base station at one epoch: LoS paths to the direct fix,
/// NLoS paths through the reflection-order classifier, single-bounce paths to the
/// line intersection.
pub fn exclude_measurements(
    epoch: f64,
    paths: &[ChannelObservation],
    bs: &BaseStation,
    ctx: &ExclusionContext<'_>,
) -> ExclusionOutcome {
    let links = detect_links(paths, ctx.propagation);
    let fix_ctx = FixContext {
        frame: ctx.frame,
        epoch,
        noise: ctx.noise,
    };
    let mut routing = Vec::with_capacity(paths.len());
    let mut los_fix = None;
    let mut sbr_lines = Vec::new();
    // inverse-variance sums of the per-path UE heights
    let (mut w_sum, mut wz_sum) = (0.0, 0.0);
    for (p, &link) in paths.iter().zip(&links) {
        let mut order = None;
        match link {
            LinkClass::Los => {
                los_fix = los_fix_3d(bs, rtt_to_distance(p.rtt), p.aod_azimuth, p.aod_elevation, &fix_ctx).ok();
            }
            LinkClass::Nlos => {
                let cctx = ClassifierContext {
                    link,
                    model: ctx.propagation,
                    epoch_paths: paths,
                };
                let o = ctx.classifier.classify(p, &cctx);
                order = Some(o);
                if ctx.use_sbr && o == ReflectionOrder::Single {
                    let d = rtt_to_distance(p.rtt);
                    let (se, ce) = p.aod_elevation.sin_cos();
                    if let Ok(line) = sbr_line(bs, p.aod_azimuth, p.aoa_azimuth, d * ce, p.path_index) {
                        sbr_lines.push(line);
                        // vertical walls keep the elevation angle across the bounce
                        let var = (se * ctx.noise.range_m).powi(2) + (d * ce * ctx.noise.aod_elevation).powi(2);
                        let w = 1.0 / var.max(f64::MIN_POSITIVE);
                        w_sum += w;
                        wz_sum += w * (bs.enu[2] + d * se);
                    }
                }
            }
        }
        routing.push(PathRouting {
            path_index: p.path_index,
            link,
            order,
        });
    }
    let sbr = if sbr_lines.len() >= 2 {
        // near-parallel or otherwise unusable line sets simply yield no fix
        sbr_fix(&sbr_lines, wz_sum / w_sum, w_sum.recip().sqrt(), &fix_ctx).ok()
    } else {
        None
    };
    ExclusionOutcome {
        bs_id: bs.id,
        routing,
        los_fix,
        sbr_lines,
        sbr_fix: sbr,
    }
}

/// Which displacement bound the SBR gate uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Per-axis reach `(|v| + eps) dt` in each horizontal direction.
    SpeedReach,
    /// `cos r cos A` and `sin r cos A` projections of the reach.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssessmentConfig {
    pub bound: BoundKind,
    /// Odometer quantization allowance, m/s.
    pub epsilon: f64,
}

impl Default for AssessmentConfig {
    fn default() -> Self {
        Self {
            bound: BoundKind::SpeedReach,
            epsilon: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Assessment {
    Include,
    Discard,
}

/// Largest plausible latitude and longitude change since `prev`, radians.
pub fn motion_bounds(
    prev: &FilterState,
    speed: f64,
    dt: f64,
    cfg: &AssessmentConfig,
    earth: &EarthModel,
) -> (f64, f64) {
    let pos = &prev.nav.position;
    let (rn, rm) = earth.curvature_radii(pos.lat);
    let reach = (speed.abs() + cfg.epsilon) * dt;
    let (lat_factor, lon_factor) = match cfg.bound {
        BoundKind::SpeedReach => (1.0, 1.0),
        BoundKind::Printed => {
            let a = &prev.nav.attitude;
            (a.roll.cos() * a.azimuth.cos(), a.roll.sin() * a.azimuth.cos())
        }
    };
    (
        (lat_factor * reach / (rm + pos.alt)).abs(),
        (lon_factor * reach / ((rn + pos.alt) * pos.lat.cos())).abs(),
    )
}

/// Accepts an SBR fix only when its displacement from the previous posterior is within
/// the motion bound on both axes.
pub fn assess_sbr_fix(
    fix: &PositionFix,
    prev: &FilterState,
    speed: f64,
    dt: f64,
    cfg: &AssessmentConfig,
    earth: &EarthModel,
) -> Assessment {
    let (b_lat, b_lon) = motion_bounds(prev, speed, dt, cfg, earth);
    let d_lat = prev.nav.position.lat - fix.position.lat;
    let d_lon = crate::geo::wrap_pi(prev.nav.position.lon - fix.position.lon);
    if d_lat.abs() < b_lat && d_lon.abs() < b_lon {
        Assessment::Include
    } else {
        Assessment::Discard
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiveg::{distance_to_rtt, FixSource, HeuristicClassifier, OracleClassifier};
    use crate::fusion::InitialUncertainty;
    use crate::geo::{Attitude, GeodeticPosition};
    use crate::ins::NavState;
    use nalgebra::{Matrix3, Vector2, Vector3};

    fn frame() -> LocalFrame {
        LocalFrame::new(
            GeodeticPosition::from_degrees(43.65, -79.38, 80.0).unwrap(),
            EarthModel::wgs84(),
        )
    }

    fn prev_at(enu: Vector3<f64>, azimuth: f64) -> FilterState {
        let f = frame();
        let nav = NavState::new(f.to_geodetic(&enu), Vector3::zeros(), Attitude::level(azimuth)).unwrap();
        let p = InitialUncertainty::default().covariance(&nav.position, &f.earth);
        FilterState::new(nav, p, 0.0).unwrap()
    }

    fn fix_at(enu: Vector3<f64>) -> PositionFix {
        let f = frame();
        PositionFix {
            epoch: 1.0,
            position: f.to_geodetic(&enu),
            enu,
            covariance: Matrix3::identity(),
            source: FixSource::Sbr,
            path_count: 2,
        }
    }

    #[test]
    fn identical_fix_is_included() {
        let e = EarthModel::wgs84();
        let prev = prev_at(Vector3::new(10.0, 20.0, 0.0), 0.3);
        let fix = fix_at(Vector3::new(10.0, 20.0, 0.0));
        for bound in [BoundKind::SpeedReach, BoundKind::Printed] {
            let cfg = AssessmentConfig { bound, epsilon: 0.1 };
            // the printed lon bound is zero for zero roll, so identical fixes only pass
            // the reach form
            let expect = if bound == BoundKind::SpeedReach {
                Assessment::Include
            } else {
                Assessment::Discard
            };
            assert_eq!(assess_sbr_fix(&fix, &prev, 10.0, 1.0, &cfg, &e), expect);
        }
    }

    #[test]
    fn hundred_meter_jump_is_discarded() {
        let e = EarthModel::wgs84();
        let prev = prev_at(Vector3::new(0.0, 0.0, 0.0), 0.0);
        let cfg = AssessmentConfig::default();
        let far = fix_at(Vector3::new(0.0, 100.0, 0.0));
        assert_eq!(assess_sbr_fix(&far, &prev, 10.0, 1.0, &cfg, &e), Assessment::Discard);
        let near = fix_at(Vector3::new(3.0, 9.0, 0.0));
        assert_eq!(assess_sbr_fix(&near, &prev, 10.0, 1.0, &cfg, &e), Assessment::Include);
    }

    #[test]
    fn stationary_bound_is_epsilon_dt() {
        let e = EarthModel::wgs84();
        let prev = prev_at(Vector3::zeros(), 0.0);
        let cfg = AssessmentConfig { bound: BoundKind::SpeedReach, epsilon: 0.2 };
        let (b_lat, b_lon) = motion_bounds(&prev, 0.0, 1.0, &cfg, &e);
        let (m_lat, m_lon) = frame().meters_per_radian();
        assert!((b_lat * m_lat - 0.2).abs() < 1e-6);
        assert!((b_lon * m_lon - 0.2).abs() < 1e-6);
        let inside = fix_at(Vector3::new(0.15, -0.15, 0.0));
        let outside = fix_at(Vector3::new(0.0, 0.25, 0.0));
        assert_eq!(assess_sbr_fix(&inside, &prev, 0.0, 1.0, &cfg, &e), Assessment::Include);
        assert_eq!(assess_sbr_fix(&outside, &prev, 0.0, 1.0, &cfg, &e), Assessment::Discard);
    }

    #[test]
    fn printed_bound_by_hand() {
        let e = EarthModel::wgs84();
        let mut prev = prev_at(Vector3::zeros(), 0.0);
        prev.nav.attitude = Attitude::new(0.0, 0.3, 0.4);
        let cfg = AssessmentConfig { bound: BoundKind::Printed, epsilon: 0.5 };
        let (b_lat, b_lon) = motion_bounds(&prev, 9.5, 0.5, &cfg, &e);
        let pos = prev.nav.position;
        let (rn, rm) = e.curvature_radii(pos.lat);
        let lat = 0.3f64.cos() * 0.4f64.cos() * 10.0 * 0.5 / (rm + pos.alt);
        let lon = 0.3f64.sin() * 0.4f64.cos() * 10.0 * 0.5 / ((rn + pos.alt) * pos.lat.cos());
        assert!((b_lat - lat).abs() < 1e-15);
        assert!((b_lon - lon).abs() < 1e-15);
    }

    #[test]
    fn decision_ignores_longitude_datum() {
        let e = EarthModel::wgs84();
        let cfg = AssessmentConfig::default();
        let prev = prev_at(Vector3::zeros(), 0.0);
        let fix = fix_at(Vector3::new(5.0, -3.0, 0.0));
        let base = assess_sbr_fix(&fix, &prev, 6.0, 1.0, &cfg, &e);
        for shift in [0.1, -1.0, 2.5] {
            let mut p2 = prev;
            p2.nav.position.lon += shift;
            let mut f2 = fix;
            f2.position.lon += shift;
            assert_eq!(assess_sbr_fix(&f2, &p2, 6.0, 1.0, &cfg, &e), base);
        }
    }

    fn path(bs: &Vector2<f64>, ue: &Vector2<f64>, image: Option<Vector2<f64>>, bounces: u32, m: &PropagationModel, idx: u32) -> ChannelObservation {
        let az = |v: Vector2<f64>| crate::geo::wrap_two_pi(v[0].atan2(v[1]));
        let (aod, aoa, d) = match image {
            None => (az(ue - bs), az(bs - ue), (ue - bs).norm()),
            Some(img) => {
                // wall x = const for the tests below: the hit point is where the segment
                // image-ue crosses the wall
                let wall_x = 0.5 * (img[0] + bs[0]);
                let t = (wall_x - img[0]) / (ue[0] - img[0]);
                let hit = img + t * (ue - img);
                (az(hit - bs), az(hit - ue), (ue - img).norm())
            }
        };
        ChannelObservation {
            t: 0.0,
            bs_id: 0,
            path_index: idx,
            rtt: distance_to_rtt(d),
            aod_azimuth: aod,
            aod_elevation: 0.0,
            aoa_azimuth: aoa,
            rss_dbm: m.rss_dbm(d, bounces),
            truth_bounces: Some(bounces),
        }
    }

    #[test]
    fn all_los_epoch_has_empty_sbr_branch() {
        let f = frame();
        let m = PropagationModel::default();
        let noise = PathNoise::from_rtt_sigma(1e-9, 0.01);
        let bs = BaseStation::new(0, Vector3::zeros(), &f);
        let ue = Vector2::new(30.0, 40.0);
        let paths = [path(&Vector2::zeros(), &ue, None, 0, &m, 0)];
        let ctx = ExclusionContext {
            frame: &f,
            propagation: &m,
            noise: &noise,
            classifier: &OracleClassifier,
            use_sbr: true,
        };
        let out = exclude_measurements(0.0, &paths, &bs, &ctx);
        let fix = out.los_fix.unwrap();
        assert!((fix.enu.xy() - ue).norm() < 1e-9);
        assert!(out.sbr_lines.is_empty() && out.sbr_fix.is_none());
    }

    #[test]
    fn higher_order_only_epoch_gives_no_fix() {
        let f = frame();
        let m = PropagationModel::default();
        let noise = PathNoise::from_rtt_sigma(1e-9, 0.01);
        let bs = BaseStation::new(0, Vector3::zeros(), &f);
        let ue = Vector2::new(30.0, 40.0);
        let mut a = path(&Vector2::zeros(), &ue, Some(Vector2::new(-20.0, 0.0)), 2, &m, 0);
        a.rtt *= 1.3;
        let mut b = path(&Vector2::zeros(), &ue, Some(Vector2::new(90.0, 0.0)), 3, &m, 1);
        b.rtt *= 1.5;
        for classifier in [&OracleClassifier as &dyn ReflectionClassifier, &HeuristicClassifier::default()] {
            let ctx = ExclusionContext {
                frame: &f,
                propagation: &m,
                noise: &noise,
                classifier,
                use_sbr: true,
            };
            let out = exclude_measurements(0.0, &[a, b], &bs, &ctx);
            assert!(out.los_fix.is_none() && out.sbr_fix.is_none());
            assert!(out.routing.iter().all(|r| r.order == Some(ReflectionOrder::Higher)));
        }
    }
}
