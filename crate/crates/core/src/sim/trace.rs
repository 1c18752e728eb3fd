//! Geometric ray tracing in a 2.5D scene: the direct path plus specular reflections
//! off building walls found with the image method.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::scene::{segment_params, Facade, Scene};
use crate::fiveg::{azimuth_unit, distance_to_rtt, BaseStation, ChannelObservation, PropagationModel};

/// Reflection points closer than this to a wall end are discarded, meters.
const EDGE_MARGIN: f64 = 1e-6;

/// Tracer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceConfig {
    pub max_bounces: u32,
    pub propagation: PropagationModel,
    /// Paths weaker than this are not reported, dBm.
    pub sensitivity_dbm: f64,
    /// Strongest paths kept per base station and epoch.
    pub max_paths: usize,
    /// Cells farther than this from the UE are not measured, and walls farther than
    /// this are ignored, meters.
    pub max_range_m: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            max_bounces: 2,
            propagation: PropagationModel::default(),
            sensitivity_dbm: -110.0,
            max_paths: 8,
            max_range_m: 300.0,
        }
    }
}

/// One traced path with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    /// Noiseless observation; `t` is left for the caller to fill.
    pub obs: ChannelObservation,
    pub bounces: u32,
    /// Facade ids in the order the path meets them.
    pub reflectors: Vec<u32>,
    /// Interaction points, meters, in path order.
    pub points: Vec<Vector3<f64>>,
    /// Geometric 3D length, meters.
    pub length: f64,
    pub los: bool,
}

/// Clockwise-from-north azimuth of a horizontal vector.
pub fn azimuth_of(v: &Vector2<f64>) -> f64 {
    crate::geo::wrap_two_pi(v[0].atan2(v[1]))
}

fn on_wall(f: &Facade, p: &Vector2<f64>, q: &Vector2<f64>) -> Option<(f64, Vector2<f64>)> {
    let (t, u) = segment_params(p, q, &f.a, &f.b)?;
    let margin = EDGE_MARGIN / f.length();
    if t <= 0.0 || t >= 1.0 || u <= margin || u >= 1.0 - margin {
        return None;
    }
    Some((t, f.a + u * (f.b - f.a)))
}

fn record(
    bs: &BaseStation,
    ue: &Vector3<f64>,
    reflectors: Vec<u32>,
    corners: Vec<Vector2<f64>>,
    model: &PropagationModel,
) -> PathRecord {
    let tx = bs.enu;
    // unfolded horizontal length
    let mut chain = vec![tx.xy()];
    chain.extend(corners.iter().copied());
    chain.push(ue.xy());
    let legs: Vec<f64> = chain.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let horiz: f64 = legs.iter().sum();
    let dz = ue[2] - tx[2];
    let length = horiz.hypot(dz);
    let mut run = 0.0;
    let points = corners
        .iter()
        .zip(&legs)
        .map(|(c, leg)| {
            run += leg;
            Vector3::new(c[0], c[1], tx[2] + dz * run / horiz)
        })
        .collect();
    let bounces = reflectors.len() as u32;
    let aod = azimuth_of(&(chain[1] - chain[0]));
    let aoa = azimuth_of(&(chain[chain.len() - 2] - chain[chain.len() - 1]));
    PathRecord {
        obs: ChannelObservation {
            t: 0.0,
            bs_id: bs.id,
            path_index: 0,
            rtt: distance_to_rtt(length),
            aod_azimuth: aod,
            aod_elevation: dz.atan2(horiz),
            aoa_azimuth: aoa,
            rss_dbm: model.rss_dbm(length, bounces),
            truth_bounces: Some(bounces),
        },
        bounces,
        reflectors,
        points,
        length,
        los: bounces == 0,
    }
}

fn point_segment_distance(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (a + ab * t - p).norm()
}

fn clear(scene: &Scene, a: &Vector3<f64>, b: &Vector3<f64>, skip: &[u32]) -> bool {
    !scene.blocked(a, b, skip)
}

/// Traces every path from `bs` to a UE antenna at `ue` with up to `cfg.max_bounces`
/// specular reflections (at most two). Paths are sorted by decreasing power and
/// numbered accordingly; an empty result is a total outage.
pub fn trace_paths(scene: &Scene, bs: &BaseStation, ue: &Vector3<f64>, cfg: &TraceConfig) -> Vec<PathRecord> {
    let model = &cfg.propagation;
    let tx = bs.enu;
    let (tx2, rx2) = (tx.xy(), ue.xy());
    let mut out = Vec::new();
    if (rx2 - tx2).norm() > cfg.max_range_m {
        return out;
    }

    if clear(scene, &tx, ue, &[]) && (rx2 - tx2).norm() > 0.0 {
        out.push(record(bs, ue, vec![], vec![], model));
    }

    let near: Vec<&Facade> = scene
        .facades()
        .iter()
        .filter(|f| point_segment_distance(&rx2, &f.a, &f.b) <= cfg.max_range_m)
        .collect();
    let facing_tx: Vec<&Facade> = near.iter().copied().filter(|f| f.side(&tx2) > 0.0).collect();
    let facing_rx: Vec<&Facade> = near.iter().copied().filter(|f| f.side(&rx2) > 0.0).collect();
    if cfg.max_bounces >= 1 {
        for &f in &facing_tx {
            if f.side(&rx2) <= 0.0 {
                continue;
            }
            let image = f.mirror(&tx2);
            let Some((_, r)) = on_wall(f, &image, &rx2) else { continue };
            let rec = record(bs, ue, vec![f.id], vec![r], model);
            let p = rec.points[0];
            if p[2] < 0.0 || p[2] > f.height {
                continue;
            }
            if clear(scene, &tx, &p, &[f.id]) && clear(scene, &p, ue, &[f.id]) {
                out.push(rec);
            }
        }
    }

    if cfg.max_bounces >= 2 {
        for &f1 in &facing_tx {
            let i1 = f1.mirror(&tx2);
            for &f2 in &facing_rx {
                if f2.id == f1.id || f2.side(&i1) <= 0.0 {
                    continue;
                }
                let i2 = f2.mirror(&i1);
                let Some((_, r2)) = on_wall(f2, &i2, &rx2) else { continue };
                let Some((_, r1)) = on_wall(f1, &i1, &r2) else { continue };
                // the second leg leaves the first wall on its front side
                if f2.side(&r1) <= 0.0 {
                    continue;
                }
                let rec = record(bs, ue, vec![f1.id, f2.id], vec![r1, r2], model);
                let (p1, p2) = (rec.points[0], rec.points[1]);
                if p1[2] < 0.0 || p1[2] > f1.height || p2[2] < 0.0 || p2[2] > f2.height {
                    continue;
                }
                let skip = [f1.id, f2.id];
                if clear(scene, &tx, &p1, &skip) && clear(scene, &p1, &p2, &skip) && clear(scene, &p2, ue, &skip) {
                    out.push(rec);
                }
            }
        }
    }

    out.retain(|r| r.obs.rss_dbm >= cfg.sensitivity_dbm);
    out.sort_by(|a, b| b.obs.rss_dbm.total_cmp(&a.obs.rss_dbm).then(a.length.total_cmp(&b.length)));
    out.truncate(cfg.max_paths);
    for (i, r) in out.iter_mut().enumerate() {
        r.obs.path_index = i as u32;
    }
    out
}

/// Horizontal path length implied by a record, the `d` of the single-bounce locus.
pub fn horizontal_length(r: &PathRecord) -> f64 {
    r.length * r.obs.aod_elevation.cos()
}

/// UE position predicted from a single-bounce record and the true scatterer range,
/// for cross-checks.
pub fn sbr_ue_from_record(bs: &BaseStation, r: &PathRecord) -> Option<Vector2<f64>> {
    if r.bounces != 1 {
        return None;
    }
    let d = horizontal_length(r);
    let rr = (r.points[0].xy() - bs.xy()).norm();
    Some(bs.xy() + rr * azimuth_unit(r.obs.aod_azimuth) - (d - rr) * azimuth_unit(r.obs.aoa_azimuth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiveg::rtt_to_distance;
    use crate::sim::scene::{Building, SceneOrigin, StationSite};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn origin() -> SceneOrigin {
        SceneOrigin {
            lat_deg: 45.5,
            lon_deg: -73.57,
            alt_m: 30.0,
        }
    }

    fn scene(buildings: Vec<Building>) -> Scene {
        Scene::new(origin(), buildings, vec![StationSite { id: 0, position: [0.0, 0.0, 10.0] }]).unwrap()
    }

    fn wall(id: u32, x0: f64, y0: f64, x1: f64, y1: f64, height: f64) -> Building {
        // a thin slab standing in for a single facade
        let d = Vector2::new(x1 - x0, y1 - y0).normalize();
        let n = Vector2::new(-d[1], d[0]) * 0.5;
        Building {
            id,
            height,
            footprint: vec![[x0, y0], [x1, y1], [x1 + n[0], y1 + n[1]], [x0 + n[0], y0 + n[1]]],
        }
    }

    fn cfg(max_bounces: u32) -> TraceConfig {
        TraceConfig { max_bounces, sensitivity_dbm: -300.0, max_paths: 64, ..TraceConfig::default() }
    }

    #[test]
    fn empty_scene_has_one_los_path() {
        let s = scene(vec![]);
        let bs = s.base_stations()[0];
        let ue = Vector3::new(30.0, 40.0, 1.5);
        let paths = trace_paths(&s, &bs, &ue, &cfg(2));
        assert_eq!(paths.len(), 1);
        assert!(paths[0].los);
        assert_relative_eq!(paths[0].length, (ue - bs.enu).norm(), epsilon = 1e-12);
        assert_relative_eq!(rtt_to_distance(paths[0].obs.rtt), paths[0].length, max_relative = 1e-14);
        assert_relative_eq!(paths[0].obs.aod_azimuth, 30f64.atan2(40.0), epsilon = 1e-15);
    }

    #[test]
    fn single_wall_same_side_gives_los_and_image_path() {
        // wall along y = 50 facing south (slab extends north)
        let s = scene(vec![wall(0, -100.0, 50.0, 100.0, 50.0, 20.0)]);
        let bs = s.base_stations()[0];
        let ue = Vector3::new(40.0, 10.0, 1.5);
        let paths = trace_paths(&s, &bs, &ue, &cfg(1));
        assert_eq!(paths.len(), 2);
        assert!(paths[0].los);
        let sbr = &paths[1];
        assert_eq!(sbr.bounces, 1);
        // image of the BS across y = 50 in 3D (walls are vertical)
        let image = Vector3::new(0.0, 100.0, 10.0);
        assert_relative_eq!(sbr.length, (image - ue).norm(), epsilon = 1e-12);
        assert_relative_eq!(sbr.points[0][1], 50.0, epsilon = 1e-12);
        assert!(sbr.length > paths[0].length);
    }

    #[test]
    fn occluding_building_removes_los() {
        let block = Building {
            id: 0,
            height: 15.0,
            footprint: vec![[10.0, -10.0], [20.0, -10.0], [20.0, 10.0], [10.0, 10.0]],
        };
        let s = scene(vec![block]);
        let bs = s.base_stations()[0];
        let paths = trace_paths(&s, &bs, &Vector3::new(40.0, 0.0, 1.5), &cfg(2));
        assert!(paths.iter().all(|p| !p.los));
    }

    #[test]
    fn low_wall_lets_high_ray_pass() {
        let s = scene(vec![wall(0, 20.0, -50.0, 20.0, 50.0, 3.0)]);
        let bs = s.base_stations()[0];
        // ray height at x = 20 is about 6 m, above the 3 m wall
        let paths = trace_paths(&s, &bs, &Vector3::new(40.0, 0.0, 1.5), &cfg(0));
        assert!(paths[0].los);
        // a wall close to the UE meets the ray at about 2.6 m
        let s = scene(vec![wall(0, 35.0, -50.0, 35.0, 50.0, 3.0)]);
        let paths = trace_paths(&s, &bs, &Vector3::new(40.0, 0.0, 1.5), &cfg(0));
        assert!(paths.is_empty());
    }

    #[test]
    fn double_bounce_between_parallel_walls() {
        let s = scene(vec![
            wall(0, -200.0, 20.0, 200.0, 20.0, 30.0),
            wall(1, 200.0, -20.0, -200.0, -20.0, 30.0),
        ]);
        let bs = s.base_stations()[0];
        let ue = Vector3::new(100.0, 0.0, 1.5);
        let paths = trace_paths(&s, &bs, &ue, &cfg(2));
        let doubles: Vec<_> = paths.iter().filter(|p| p.bounces == 2).collect();
        assert_eq!(doubles.len(), 2);
        // unfolded: two mirrorings give a lateral offset of 80 m
        for d in doubles {
            assert_relative_eq!(d.length, Vector3::new(100.0, 80.0, -8.5).norm(), epsilon = 1e-9);
        }
        assert_eq!(paths.iter().filter(|p| p.bounces == 1).count(), 2);
        for w in paths.windows(2) {
            assert!(w[0].obs.rss_dbm >= w[1].obs.rss_dbm);
        }
    }

    proptest! {
        #[test]
        fn reflections_are_specular_and_longer_than_los(
            ux in 5.0f64..150.0, uy in -15.0f64..15.0, wy in 18.0f64..40.0
        ) {
            let s = scene(vec![
                wall(0, -200.0, wy, 200.0, wy, 30.0),
                wall(1, 200.0, -wy, -200.0, -wy, 30.0),
            ]);
            let bs = s.base_stations()[0];
            let ue = Vector3::new(ux, uy, 1.5);
            let paths = trace_paths(&s, &bs, &ue, &cfg(2));
            let direct = (ue - bs.enu).norm();
            for p in &paths {
                if p.los { continue; }
                prop_assert!(p.length > direct);
                let mut chain = vec![bs.enu];
                chain.extend(p.points.iter().copied());
                chain.push(ue);
                for (k, id) in p.reflectors.iter().enumerate() {
                    let f = &s.facades()[*id as usize];
                    let n = Vector3::new(f.normal[0], f.normal[1], 0.0);
                    let inc = (chain[k + 1] - chain[k]).normalize();
                    let out = (chain[k + 2] - chain[k + 1]).normalize();
                    let ai = (-inc.dot(&n)).clamp(-1.0, 1.0).acos();
                    let ao = out.dot(&n).clamp(-1.0, 1.0).acos();
                    prop_assert!((ai - ao).abs() < 1e-9);
                    // reflected direction is the mirror of the incident one
                    prop_assert!((out - (inc - 2.0 * inc.dot(&n) * n)).norm() < 1e-9);
                }
            }
        }
    }
}
