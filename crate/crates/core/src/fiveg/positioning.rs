//! Single-base-station positioning from one LoS path or from several single-bounce paths.
//!
//! A single-bounce path leaves the base station along its departure azimuth, hits a
//! scatterer at unknown range `r`, and reaches the UE. Seen from the UE, the scatterer
//! lies along the arrival azimuth. Sweeping `r` over `(0, d)` traces a straight line of
//! candidate UE positions; two or more such lines pin the UE down.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::channel::{azimuth_unit, BaseStation, FixSource, PathNoise, PositionFix};
use super::FivegError;
use crate::geo::LocalFrame;

/// Below this, `sin(aod) + sin(aoa)` is treated as zero and the line is stored as
/// `x = k y + b`.
const VERTICAL_TOL: f64 = 1e-9;
/// Minimum angle between SBR lines for an intersection, radians.
pub const PARALLEL_THRESHOLD: f64 = 5.0 * std::f64::consts::PI / 180.0;

/// Shared inputs for turning geometry into a [`PositionFix`].
#[derive(Debug, Clone, Copy)]
pub struct FixContext<'a> {
    pub frame: &'a LocalFrame,
    pub epoch: f64,
    pub noise: &'a PathNoise,
}

/// 3D fix from range and departure azimuth/elevation.
pub fn los_fix_3d(
    bs: &BaseStation,
    d_3d: f64,
    aod_azimuth: f64,
    aod_elevation: f64,
    ctx: &FixContext<'_>,
) -> Result<PositionFix, FivegError> {
    if !(d_3d > 0.0) {
        return Err(FivegError::NonPositiveRange(d_3d));
    }
    let (sa, ca) = aod_azimuth.sin_cos();
    let (se, ce) = aod_elevation.sin_cos();
    let dir = Vector3::new(sa * ce, ca * ce, se);
    let enu = bs.enu + d_3d * dir;

    // columns: d/d(range), d/d(azimuth), d/d(elevation)
    let jac = Matrix3::from_columns(&[
        dir,
        d_3d * Vector3::new(ca * ce, -sa * ce, 0.0),
        d_3d * Vector3::new(-sa * se, -ca * se, ce),
    ]);
    let n = ctx.noise;
    let sig = Matrix3::from_diagonal(&Vector3::new(
        n.range_m.powi(2),
        n.aod_azimuth.powi(2),
        n.aod_elevation.powi(2),
    ));
    let covariance = jac * sig * jac.transpose();
    Ok(PositionFix {
        epoch: ctx.epoch,
        position: ctx.frame.to_geodetic(&enu),
        enu,
        covariance: 0.5 * (covariance + covariance.transpose()),
        source: FixSource::Los,
        path_count: 1,
    })
}

/// 2D fix from horizontal range and departure azimuth, at a known UE height.
pub fn los_fix_2d(
    bs: &BaseStation,
    d: f64,
    aod_azimuth: f64,
    height: f64,
    height_sigma: f64,
    ctx: &FixContext<'_>,
) -> Result<PositionFix, FivegError> {
    if !(d > 0.0) {
        return Err(FivegError::NonPositiveRange(d));
    }
    let u = azimuth_unit(aod_azimuth);
    let xy = bs.xy() + d * u;
    let enu = Vector3::new(xy[0], xy[1], height);
    let jac = Matrix2::from_columns(&[u, d * Vector2::new(u[1], -u[0])]);
    let n = ctx.noise;
    let c2 = jac
        * Matrix2::from_diagonal(&Vector2::new(n.range_m.powi(2), n.aod_azimuth.powi(2)))
        * jac.transpose();
    let mut covariance = Matrix3::zeros();
    covariance.fixed_view_mut::<2, 2>(0, 0).copy_from(&(0.5 * (c2 + c2.transpose())));
    covariance[(2, 2)] = height_sigma.powi(2);
    Ok(PositionFix {
        epoch: ctx.epoch,
        position: ctx.frame.to_geodetic(&enu),
        enu,
        covariance,
        source: FixSource::Los,
        path_count: 1,
    })
}

/// Channel parameters a line was built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbrSource {
    pub bs_xy: Vector2<f64>,
    pub aod_azimuth: f64,
    pub aoa_azimuth: f64,
    /// Horizontal path length, meters.
    pub d: f64,
    pub path_index: u32,
}

/// Locus of candidate UE positions of one single-bounce path.
///
/// Normally `y = slope * x + intercept` in scene ENU meters; when the locus is
/// vertical the axes are swapped and the line reads `x = slope * y + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbrLine {
    pub slope: f64,
    pub intercept: f64,
    pub swapped: bool,
    pub source: SbrSource,
}

impl SbrLine {
    /// Unit normal `n` and offset `c` with `n . p = c` on the line.
    pub fn normal_form(&self) -> (Vector2<f64>, f64) {
        let s = (1.0 + self.slope * self.slope).sqrt();
        if self.swapped {
            (Vector2::new(1.0, -self.slope) / s, self.intercept / s)
        } else {
            (Vector2::new(-self.slope, 1.0) / s, self.intercept / s)
        }
    }

    /// Unit direction of the line.
    pub fn direction(&self) -> Vector2<f64> {
        let (n, _) = self.normal_form();
        Vector2::new(n[1], -n[0])
    }

    /// Perpendicular distance from `p`.
    pub fn distance(&self, p: &Vector2<f64>) -> f64 {
        let (n, c) = self.normal_form();
        (n.dot(p) - c).abs()
    }
}

/// Candidate UE line of a single-bounce path with horizontal length `d`.
pub fn sbr_line(
    bs: &BaseStation,
    aod_azimuth: f64,
    aoa_azimuth: f64,
    d: f64,
    path_index: u32,
) -> Result<SbrLine, FivegError> {
    line_from_source(SbrSource {
        bs_xy: bs.xy(),
        aod_azimuth,
        aoa_azimuth,
        d,
        path_index,
    })
}

fn line_from_source(src: SbrSource) -> Result<SbrLine, FivegError> {
    let (sa, ca) = src.aoa_azimuth.sin_cos();
    let (sb, cb) = src.aod_azimuth.sin_cos();
    let sin_sum = sa + sb;
    let cos_sum = ca + cb;
    if sin_sum.hypot(cos_sum) < VERTICAL_TOL {
        return Err(FivegError::DegenerateGeometry);
    }
    let (xb, yb) = (src.bs_xy[0], src.bs_xy[1]);
    // r = 0 point of the sweep
    let x0 = xb - src.d * sa;
    let y0 = yb - src.d * ca;
    if sin_sum.abs() > VERTICAL_TOL {
        let k = cos_sum / sin_sum;
        Ok(SbrLine {
            slope: k,
            intercept: -k * x0 + y0,
            swapped: false,
            source: src,
        })
    } else {
        let k = sin_sum / cos_sum;
        Ok(SbrLine {
            slope: k,
            intercept: -k * y0 + x0,
            swapped: true,
            source: src,
        })
    }
}

/// Scatterer and UE positions for a trial BS-scatterer distance `r`.
pub fn sbr_point_for_r(
    bs: &BaseStation,
    aod_azimuth: f64,
    aoa_azimuth: f64,
    d: f64,
    r: f64,
) -> Result<(Vector2<f64>, Vector2<f64>), FivegError> {
    if !(r > 0.0 && r < d) {
        return Err(FivegError::ScattererOutOfRange { r, d });
    }
    let scatterer = bs.xy() + r * azimuth_unit(aod_azimuth);
    let ue = scatterer - (d - r) * azimuth_unit(aoa_azimuth);
    Ok((scatterer, ue))
}

/// Angle between two lines, in `[0, pi/2]`.
pub fn line_angle(a: &SbrLine, b: &SbrLine) -> f64 {
    let c = a.direction().dot(&b.direction()).abs().min(1.0);
    c.acos()
}

fn least_squares_point(lines: &[SbrLine]) -> Result<Vector2<f64>, FivegError> {
    let mut normal = Matrix2::zeros();
    let mut rhs = Vector2::zeros();
    for l in lines {
        let (n, c) = l.normal_form();
        normal += n * n.transpose();
        rhs += n * c;
    }
    normal
        .try_inverse()
        .map(|inv| inv * rhs)
        .ok_or(FivegError::IllConditioned)
}

/// Intersects the candidate lines of two or more single-bounce paths.
///
/// Two lines give their exact intersection, more lines the point minimizing the sum of
/// squared perpendicular distances. The altitude is supplied by the caller.
pub fn sbr_fix(
    lines: &[SbrLine],
    height: f64,
    height_sigma: f64,
    ctx: &FixContext<'_>,
) -> Result<PositionFix, FivegError> {
    if lines.len() < 2 {
        return Err(FivegError::InsufficientPaths(lines.len()));
    }
    let widest = lines
        .iter()
        .enumerate()
        .flat_map(|(i, a)| lines[i + 1..].iter().map(move |b| line_angle(a, b)))
        .fold(0.0, f64::max);
    if widest <= PARALLEL_THRESHOLD {
        return Err(FivegError::IllConditioned);
    }
    let xy = least_squares_point(lines)?;
    let c2 = sbr_covariance(lines, ctx.noise)?;
    let enu = Vector3::new(xy[0], xy[1], height);
    let mut covariance = Matrix3::zeros();
    covariance.fixed_view_mut::<2, 2>(0, 0).copy_from(&c2);
    covariance[(2, 2)] = height_sigma.powi(2);
    Ok(PositionFix {
        epoch: ctx.epoch,
        position: ctx.frame.to_geodetic(&enu),
        enu,
        covariance,
        source: FixSource::Sbr,
        path_count: lines.len(),
    })
}

type Perturbation = (f64, f64, fn(&mut SbrSource, f64));

/// First-order covariance of the intersection, by central differences over each
/// line's departure angle, arrival angle and range.
fn sbr_covariance(lines: &[SbrLine], noise: &PathNoise) -> Result<Matrix2<f64>, FivegError> {
    let mut cov = Matrix2::zeros();
    let mut work: Vec<SbrLine> = lines.to_vec();
    for i in 0..lines.len() {
        let src = lines[i].source;
        let perturbations: [Perturbation; 3] = [
            (noise.aod_azimuth, 1e-6, |s, h| s.aod_azimuth += h),
            (noise.aoa_azimuth, 1e-6, |s, h| s.aoa_azimuth += h),
            (noise.range_m, 1e-4, |s, h| s.d += h),
        ];
        for (sigma, step, apply) in perturbations {
            if sigma == 0.0 {
                continue;
            }
            let mut plus = src;
            apply(&mut plus, step);
            let mut minus = src;
            apply(&mut minus, -step);
            work[i] = line_from_source(plus)?;
            let p_plus = least_squares_point(&work)?;
            work[i] = line_from_source(minus)?;
            let p_minus = least_squares_point(&work)?;
            let g = (p_plus - p_minus) / (2.0 * step);
            cov += g * g.transpose() * sigma * sigma;
        }
        work[i] = lines[i];
    }
    Ok(0.5 * (cov + cov.transpose()))
}
