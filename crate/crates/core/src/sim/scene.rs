//! 2.5D urban scenes: extruded building footprints on flat ground plus base-station
//! sites, all in a local ENU frame anchored at a geodetic origin.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::fiveg::BaseStation;
use crate::geo::{EarthModel, GeodeticPosition, LocalFrame};

/// Relative tolerance used by the segment tests.
const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneOrigin {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub alt_m: f64,
}

/// A building as a vertical extrusion of a simple polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub id: u32,
    pub height: f64,
    /// Footprint vertices in meters, either winding, not closed.
    pub footprint: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationSite {
    pub id: u32,
    pub position: [f64; 3],
}

/// One vertical wall of a building.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facade {
    /// Index into [`Scene::facades`].
    pub id: u32,
    pub building: u32,
    pub a: Vector2<f64>,
    pub b: Vector2<f64>,
    /// Unit normal pointing out of the building.
    pub normal: Vector2<f64>,
    pub height: f64,
}

impl Facade {
    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    /// Signed distance of `p` from the wall plane, positive outside.
    pub fn side(&self, p: &Vector2<f64>) -> f64 {
        self.normal.dot(&(p - self.a))
    }

    /// Mirror image of `p` across the wall plane.
    pub fn mirror(&self, p: &Vector2<f64>) -> Vector2<f64> {
        p - 2.0 * self.side(p) * self.normal
    }
}

fn default_ue_height() -> f64 {
    1.5
}

fn default_bandwidth() -> f64 {
    400e6
}

/// Buildings, base stations and UE antenna height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub origin: SceneOrigin,
    #[serde(default = "default_ue_height")]
    pub ue_height: f64,
    /// Signal bandwidth, metadata only.
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
    #[serde(default)]
    pub buildings: Vec<Building>,
    #[serde(default)]
    pub stations: Vec<StationSite>,
    #[serde(skip)]
    facades: Vec<Facade>,
}

fn cross(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Parameters `(t, u)` of the crossing of `p + t (q - p)` and `a + u (b - a)`, if the
/// segments are not parallel.
pub fn segment_params(
    p: &Vector2<f64>,
    q: &Vector2<f64>,
    a: &Vector2<f64>,
    b: &Vector2<f64>,
) -> Option<(f64, f64)> {
    let r = q - p;
    let s = b - a;
    let den = cross(&r, &s);
    if den.abs() <= GEOM_EPS * r.norm() * s.norm() {
        return None;
    }
    let ap = a - p;
    Some((cross(&ap, &s) / den, cross(&ap, &r) / den))
}

/// True when the open segments `pq` and `ab` cross.
fn segments_cross(p: &Vector2<f64>, q: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> bool {
    match segment_params(p, q, a, b) {
        Some((t, u)) => t > GEOM_EPS && t < 1.0 - GEOM_EPS && u > GEOM_EPS && u < 1.0 - GEOM_EPS,
        None => false,
    }
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: &Vector2<f64>, poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (xi, yi) = (poly[i][0], poly[i][1]);
        let (xj, yj) = (poly[(i + n - 1) % n][0], poly[(i + n - 1) % n][1]);
        if (yi > p[1]) != (yj > p[1]) && p[0] < (xj - xi) * (p[1] - yi) / (yj - yi) + xi {
            inside = !inside;
        }
    }
    inside
}

fn signed_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

fn is_simple(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    let v = |i: usize| Vector2::new(poly[i % n][0], poly[i % n][1]);
    for i in 0..n {
        if (v(i + 1) - v(i)).norm() == 0.0 {
            return false;
        }
        for j in i + 1..n {
            // adjacent edges share a vertex
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(&v(i), &v(i + 1), &v(j), &v(j + 1)) {
                return false;
            }
        }
    }
    true
}

impl Scene {
    pub fn new(
        origin: SceneOrigin,
        buildings: Vec<Building>,
        stations: Vec<StationSite>,
    ) -> Result<Self, SimError> {
        let mut s = Self {
            origin,
            ue_height: default_ue_height(),
            bandwidth_hz: default_bandwidth(),
            buildings,
            stations,
            facades: Vec::new(),
        };
        s.finalize()?;
        Ok(s)
    }

    /// Parses a TOML scene file.
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let mut s: Scene = toml::from_str(text).map_err(|e| SimError::InvalidScene(e.to_string()))?;
        s.finalize()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String, SimError> {
        toml::to_string(self).map_err(|e| SimError::InvalidScene(e.to_string()))
    }

    /// Validates the scene and rebuilds the facade list.
    pub fn finalize(&mut self) -> Result<(), SimError> {
        GeodeticPosition::from_degrees(self.origin.lat_deg, self.origin.lon_deg, self.origin.alt_m)
            .map_err(|e| SimError::InvalidScene(format!("origin: {e}")))?;
        if !(self.ue_height >= 0.0) {
            return Err(SimError::InvalidScene("UE height must be nonnegative".into()));
        }
        let mut facades = Vec::new();
        for b in &self.buildings {
            if b.footprint.len() < 3 {
                return Err(SimError::InvalidScene(format!("building {} has fewer than 3 vertices", b.id)));
            }
            if !(b.height > 0.0) {
                return Err(SimError::InvalidScene(format!("building {} has non-positive height", b.id)));
            }
            if !is_simple(&b.footprint) {
                return Err(SimError::InvalidScene(format!("building {} footprint self-intersects", b.id)));
            }
            let ccw = signed_area(&b.footprint) > 0.0;
            let n = b.footprint.len();
            for i in 0..n {
                let a = Vector2::from(b.footprint[i]);
                let c = Vector2::from(b.footprint[(i + 1) % n]);
                let d = (c - a).normalize();
                // right-hand normal of a counter-clockwise ring points outwards
                let right = Vector2::new(d[1], -d[0]);
                facades.push(Facade {
                    id: facades.len() as u32,
                    building: b.id,
                    a,
                    b: c,
                    normal: if ccw { right } else { -right },
                    height: b.height,
                });
            }
        }
        for st in &self.stations {
            let p = Vector2::new(st.position[0], st.position[1]);
            if let Some(b) = self.buildings.iter().find(|b| point_in_polygon(&p, &b.footprint)) {
                return Err(SimError::InvalidScene(format!("station {} lies inside building {}", st.id, b.id)));
            }
        }
        self.facades = facades;
        Ok(())
    }

    pub fn facades(&self) -> &[Facade] {
        &self.facades
    }

    pub fn frame(&self) -> LocalFrame {
        let o = GeodeticPosition::from_degrees(self.origin.lat_deg, self.origin.lon_deg, self.origin.alt_m)
            .expect("origin validated in finalize");
        LocalFrame::new(o, EarthModel::wgs84())
    }

    pub fn base_stations(&self) -> Vec<BaseStation> {
        let f = self.frame();
        self.stations
            .iter()
            .map(|s| BaseStation::new(s.id, Vector3::from(s.position), &f))
            .collect()
    }

    /// True when `p` lies strictly inside any footprint.
    pub fn inside_building(&self, p: &Vector2<f64>) -> bool {
        self.buildings.iter().any(|b| point_in_polygon(p, &b.footprint))
    }

    /// True when the straight segment from `p` to `q` passes through a wall below its
    /// top. Walls listed in `skip` are ignored, as are crossings at the segment ends.
    pub fn blocked(&self, p: &Vector3<f64>, q: &Vector3<f64>, skip: &[u32]) -> bool {
        let (p2, q2) = (p.xy(), q.xy());
        self.facades.iter().any(|f| {
            if skip.contains(&f.id) {
                return false;
            }
            match segment_params(&p2, &q2, &f.a, &f.b) {
                Some((t, u)) if t > GEOM_EPS && t < 1.0 - GEOM_EPS && (-GEOM_EPS..=1.0 + GEOM_EPS).contains(&u) => {
                    let z = p[2] + t * (q[2] - p[2]);
                    z < f.height
                }
                _ => false,
            }
        })
    }
}

/// Polyline route used for base-station placement.
pub fn route_length(route: &[[f64; 2]]) -> f64 {
    route
        .windows(2)
        .map(|w| (Vector2::from(w[1]) - Vector2::from(w[0])).norm())
        .sum()
}

fn route_point(route: &[[f64; 2]], s: f64) -> (Vector2<f64>, Vector2<f64>) {
    let mut left = s;
    let last = route.len() - 2;
    for (i, w) in route.windows(2).enumerate() {
        let a = Vector2::from(w[0]);
        let b = Vector2::from(w[1]);
        let len = (b - a).norm();
        if left <= len || i == last {
            let dir = (b - a) / len;
            return (a + dir * left.min(len), dir);
        }
        left -= len;
    }
    unreachable!("route has at least two points")
}

/// Base-station placement along a route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementConfig {
    pub spacing_m: f64,
    /// Lateral offset from the route centerline to the sidewalk, meters.
    pub sidewalk_offset_m: f64,
    /// Uniform along-route jitter half-width, meters.
    pub jitter_m: f64,
    pub antenna_height_m: f64,
    pub seed: u64,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            spacing_m: 250.0,
            sidewalk_offset_m: 8.0,
            jitter_m: 10.0,
            antenna_height_m: 10.0,
            seed: 0,
        }
    }
}

/// Sites every `spacing_m` along `route` (both ends included), alternating sides of
/// the road. A site that lands inside a building is moved to the opposite side.
pub fn place_base_stations(
    route: &[[f64; 2]],
    cfg: &PlacementConfig,
    scene: Option<&Scene>,
) -> Result<Vec<StationSite>, SimError> {
    if route.len() < 2 {
        return Err(SimError::Placement("route needs at least two points".into()));
    }
    if !(cfg.spacing_m > 0.0) {
        return Err(SimError::Placement("spacing must be positive".into()));
    }
    let total = route_length(route);
    let count = (total / cfg.spacing_m + 1e-9).floor() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sites = Vec::with_capacity(count);
    for i in 0..count {
        let jitter = if cfg.jitter_m > 0.0 {
            rng.random_range(-cfg.jitter_m..=cfg.jitter_m)
        } else {
            0.0
        };
        let s = (i as f64 * cfg.spacing_m + jitter).clamp(0.0, total);
        let (p, dir) = route_point(route, s);
        let left = Vector2::new(-dir[1], dir[0]);
        let side = if i % 2 == 0 { 1.0 } else { -1.0 };
        let candidates = [p + left * side * cfg.sidewalk_offset_m, p - left * side * cfg.sidewalk_offset_m];
        let chosen = candidates
            .iter()
            .find(|c| scene.is_none_or(|sc| !sc.inside_building(c)))
            .ok_or_else(|| SimError::Placement(format!("no free sidewalk position near s = {s:.1} m")))?;
        sites.push(StationSite {
            id: i as u32,
            position: [chosen[0], chosen[1], cfg.antenna_height_m],
        });
    }
    Ok(sites)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin() -> SceneOrigin {
        SceneOrigin {
            lat_deg: 45.5,
            lon_deg: -73.57,
            alt_m: 30.0,
        }
    }

    fn square(id: u32, x0: f64, y0: f64, w: f64, h: f64, height: f64) -> Building {
        Building {
            id,
            height,
            footprint: vec![[x0, y0], [x0 + w, y0], [x0 + w, y0 + h], [x0, y0 + h]],
        }
    }

    #[test]
    fn facade_normals_point_outwards_for_both_windings() {
        let mut cw = square(1, 0.0, 0.0, 10.0, 10.0, 5.0);
        cw.footprint.reverse();
        for b in [square(0, 0.0, 0.0, 10.0, 10.0, 5.0), cw] {
            let s = Scene::new(origin(), vec![b], vec![]).unwrap();
            for f in s.facades() {
                let mid = 0.5 * (f.a + f.b);
                assert!(!point_in_polygon(&(mid + 0.1 * f.normal), &s.buildings[0].footprint));
                assert!(point_in_polygon(&(mid - 0.1 * f.normal), &s.buildings[0].footprint));
            }
        }
    }

    #[test]
    fn rejects_bad_scenes() {
        let bow = Building {
            id: 0,
            height: 5.0,
            footprint: vec![[0.0, 0.0], [10.0, 10.0], [10.0, 0.0], [0.0, 10.0]],
        };
        assert!(matches!(Scene::new(origin(), vec![bow], vec![]), Err(SimError::InvalidScene(_))));
        let st = StationSite { id: 0, position: [5.0, 5.0, 10.0] };
        assert!(Scene::new(origin(), vec![square(0, 0.0, 0.0, 10.0, 10.0, 5.0)], vec![st]).is_err());
        let flat = square(0, 0.0, 0.0, 10.0, 10.0, 0.0);
        assert!(Scene::new(origin(), vec![flat], vec![]).is_err());
    }

    #[test]
    fn blocking_respects_height() {
        let s = Scene::new(origin(), vec![square(0, 0.0, 0.0, 10.0, 10.0, 5.0)], vec![]).unwrap();
        let a = Vector3::new(-5.0, 5.0, 1.5);
        let b = Vector3::new(15.0, 5.0, 1.5);
        assert!(s.blocked(&a, &b, &[]));
        assert!(!s.blocked(&Vector3::new(-5.0, 5.0, 8.0), &Vector3::new(15.0, 5.0, 6.0), &[]));
        assert!(!s.blocked(&a, &Vector3::new(-5.0, 20.0, 1.5), &[]));
    }

    #[test]
    fn toml_roundtrip() {
        let s = Scene::new(
            origin(),
            vec![square(3, 0.0, 0.0, 10.0, 20.0, 12.0)],
            vec![StationSite { id: 1, position: [-5.0, 0.0, 10.0] }],
        )
        .unwrap();
        let back = Scene::from_toml(&s.to_toml().unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.facades().len(), 4);
    }

    #[test]
    fn one_km_route_gets_five_sites() {
        let route = [[0.0, 0.0], [1000.0, 0.0]];
        let cfg = PlacementConfig { jitter_m: 0.0, ..PlacementConfig::default() };
        let sites = place_base_stations(&route, &cfg, None).unwrap();
        assert_eq!(sites.len(), 5);
        assert_eq!(sites[2].position[0], 500.0);
        assert_eq!(sites[1].position[1], -8.0);
    }

    #[test]
    fn placement_is_seed_deterministic_and_avoids_buildings() {
        let route = [[0.0, 0.0], [600.0, 0.0], [600.0, 400.0]];
        let cfg = PlacementConfig { seed: 9, ..PlacementConfig::default() };
        // a block hugging the left side of the first leg
        let scene = Scene::new(origin(), vec![square(0, -20.0, 4.0, 700.0, 30.0, 20.0)], vec![]).unwrap();
        let a = place_base_stations(&route, &cfg, Some(&scene)).unwrap();
        let b = place_base_stations(&route, &cfg, Some(&scene)).unwrap();
        assert_eq!(a, b);
        let c = place_base_stations(&route, &PlacementConfig { seed: 10, ..cfg }, Some(&scene)).unwrap();
        assert_ne!(a, c);
        for s in &a {
            assert!(!scene.inside_building(&Vector2::new(s.position[0], s.position[1])));
        }
    }
}
