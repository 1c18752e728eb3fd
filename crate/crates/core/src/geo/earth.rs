//! WGS84 ellipsoid constants, curvature radii and normal gravity.

use serde::{Deserialize, Serialize};

/// WGS84 semi-major axis, meters.
pub const WGS84_SEMI_MAJOR: f64 = 6_378_137.0;
/// WGS84 first eccentricity squared.
pub const WGS84_ECC_SQ: f64 = 6.694_379_990_14e-3;
/// WGS84 flattening.
pub const WGS84_FLATTENING: f64 = 1.0 / 298.257_223_563;
/// Earth rotation rate, rad/s.
pub const WGS84_ROTATION_RATE: f64 = 7.292_115e-5;
/// GM, m^3/s^2.
pub const WGS84_GM: f64 = 3.986_004_418e14;

/// Normal gravity on the equator, m/s^2.
const GRAVITY_EQUATOR: f64 = 9.780_325_335_9;
/// Somigliana constant k = (b*g_p - a*g_e) / (a*g_e).
const SOMIGLIANA_K: f64 = 1.931_852_652_41e-3;

/// How the magnitude of gravity is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GravityModel {
    /// Somigliana normal gravity with a second-order free-air altitude correction.
    Normal,
    /// Fixed magnitude, m/s^2.
    Constant { value: f64 },
}

/// Reference ellipsoid plus rotation rate and gravity model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarthModel {
    pub semi_major: f64,
    pub ecc_sq: f64,
    pub rotation_rate: f64,
    pub gravity: GravityModel,
}

impl Default for EarthModel {
    fn default() -> Self {
        Self::wgs84()
    }
}

impl EarthModel {
    pub const fn wgs84() -> Self {
        Self {
            semi_major: WGS84_SEMI_MAJOR,
            ecc_sq: WGS84_ECC_SQ,
            rotation_rate: WGS84_ROTATION_RATE,
            gravity: GravityModel::Normal,
        }
    }

    /// Prime-vertical (R_N) and meridian (R_M) radii of curvature at `lat`.
    pub fn curvature_radii(&self, lat: f64) -> (f64, f64) {
        let s = lat.sin();
        let w2 = 1.0 - self.ecc_sq * s * s;
        let w = w2.sqrt();
        let rn = self.semi_major / w;
        let rm = self.semi_major * (1.0 - self.ecc_sq) / (w2 * w);
        (rn, rm)
    }

    /// Magnitude of gravity at latitude `lat` (rad) and ellipsoidal height `h` (m).
    pub fn gravity(&self, lat: f64, h: f64) -> f64 {
        match self.gravity {
            GravityModel::Constant { value } => value,
            GravityModel::Normal => {
                let s2 = lat.sin().powi(2);
                let g0 = GRAVITY_EQUATOR * (1.0 + SOMIGLIANA_K * s2)
                    / (1.0 - self.ecc_sq * s2).sqrt();
                let a = self.semi_major;
                let m = self.rotation_rate.powi(2) * a * a * (1.0 - WGS84_FLATTENING) * a
                    / WGS84_GM;
                let f = WGS84_FLATTENING;
                g0 * (1.0 - 2.0 / a * (1.0 + f + m - 2.0 * f * s2) * h + 3.0 * h * h / (a * a))
            }
        }
    }
}

/// Free function form of [`EarthModel::curvature_radii`].
pub fn curvature_radii(lat: f64, earth: &EarthModel) -> (f64, f64) {
    earth.curvature_radii(lat)
}
