//! Geodetic positions and the curvilinear local ENU approximation used at scene scale.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use super::earth::EarthModel;
use super::rotation::wrap_pi;
use super::GeoError;

/// Latitude and longitude in radians, altitude in meters above the ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GeodeticPosition {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

impl GeodeticPosition {
    /// Validated constructor; longitude is wrapped to `(-pi, pi]`.
    pub fn new(lat: f64, lon: f64, alt: f64) -> Result<Self, GeoError> {
        if !(lat.abs() <= FRAC_PI_2) || !lon.is_finite() || !alt.is_finite() {
            return Err(GeoError::InvalidPosition { lat, lon, alt });
        }
        Ok(Self {
            lat,
            lon: wrap_pi(lon),
            alt,
        })
    }

    pub fn from_degrees(lat_deg: f64, lon_deg: f64, alt: f64) -> Result<Self, GeoError> {
        Self::new(lat_deg.to_radians(), lon_deg.to_radians(), alt)
    }
}

/// Converts `p` to East-North-Up meters about `origin`, radii taken at the origin.
pub fn geodetic_to_enu(
    p: &GeodeticPosition,
    origin: &GeodeticPosition,
    earth: &EarthModel,
) -> Vector3<f64> {
    let (rn, rm) = earth.curvature_radii(origin.lat);
    Vector3::new(
        wrap_pi(p.lon - origin.lon) * (rn + origin.alt) * origin.lat.cos(),
        (p.lat - origin.lat) * (rm + origin.alt),
        p.alt - origin.alt,
    )
}

/// Inverse of [`geodetic_to_enu`].
pub fn enu_to_geodetic(
    enu: &Vector3<f64>,
    origin: &GeodeticPosition,
    earth: &EarthModel,
) -> GeodeticPosition {
    let (rn, rm) = earth.curvature_radii(origin.lat);
    GeodeticPosition {
        lat: origin.lat + enu[1] / (rm + origin.alt),
        lon: wrap_pi(origin.lon + enu[0] / ((rn + origin.alt) * origin.lat.cos())),
        alt: origin.alt + enu[2],
    }
}

/// A local ENU frame anchored at a geodetic origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFrame {
    pub origin: GeodeticPosition,
    #[serde(default)]
    pub earth: EarthModel,
}

impl LocalFrame {
    pub fn new(origin: GeodeticPosition, earth: EarthModel) -> Self {
        Self { origin, earth }
    }

    pub fn to_enu(&self, p: &GeodeticPosition) -> Vector3<f64> {
        geodetic_to_enu(p, &self.origin, &self.earth)
    }

    pub fn to_geodetic(&self, enu: &Vector3<f64>) -> GeodeticPosition {
        enu_to_geodetic(enu, &self.origin, &self.earth)
    }

    /// Meters per radian of latitude and of longitude at the origin.
    pub fn meters_per_radian(&self) -> (f64, f64) {
        let (rn, rm) = self.earth.curvature_radii(self.origin.lat);
        (
            rm + self.origin.alt,
            (rn + self.origin.alt) * self.origin.lat.cos(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn origin_maps_to_zero() {
        let o = GeodeticPosition::from_degrees(44.23, -76.49, 90.0).unwrap();
        assert_eq!(geodetic_to_enu(&o, &o, &EarthModel::wgs84()), Vector3::zeros());
    }

    #[test]
    fn north_offset_at_equator() {
        let earth = EarthModel::wgs84();
        let o = GeodeticPosition::new(0.0, 0.3, 0.0).unwrap();
        let p = enu_to_geodetic(&Vector3::new(0.0, 100.0, 0.0), &o, &earth);
        let (_, rm) = earth.curvature_radii(0.0);
        assert_relative_eq!(p.lat, 100.0 / rm, max_relative = 1e-14);
        assert_eq!(p.lon, 0.3);
    }

    #[test]
    fn invalid_positions_rejected() {
        assert!(GeodeticPosition::new(1.6, 0.0, 0.0).is_err());
        assert!(GeodeticPosition::new(0.1, f64::NAN, 0.0).is_err());
        assert!(GeodeticPosition::new(0.1, 0.0, f64::INFINITY).is_err());
        let p = GeodeticPosition::new(0.1, 3.0 * std::f64::consts::PI, 0.0).unwrap();
        assert_relative_eq!(p.lon, std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn round_trip_within_ten_km() {
        let earth = EarthModel::wgs84();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let o = GeodeticPosition::new(
                rng.random_range(-1.3..1.3),
                rng.random_range(-3.1..3.1),
                rng.random_range(-100.0..2000.0),
            )
            .unwrap();
            let e = Vector3::new(
                rng.random_range(-7000.0..7000.0),
                rng.random_range(-7000.0..7000.0),
                rng.random_range(-200.0..200.0),
            );
            let p = enu_to_geodetic(&e, &o, &earth);
            let back = geodetic_to_enu(&p, &o, &earth);
            assert!((back - e).norm() < 1e-3);
            let p2 = enu_to_geodetic(&back, &o, &earth);
            assert!((p2.lat - p.lat).abs() < 1e-9 && (p2.lon - p.lon).abs() < 1e-9);
        }
    }
}
