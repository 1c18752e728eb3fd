//! 2D horizontal error statistics: RMS, max, threshold rates and the empirical CDF.

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::geo::{GeodeticPosition, LocalFrame};

/// A position with its timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stamped {
    pub t: f64,
    pub position: GeodeticPosition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochError {
    pub t: f64,
    pub error_2d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub rms_2d: f64,
    pub max_2d: f64,
    pub pct_sub_2m: f64,
    pub pct_sub_1m: f64,
    pub pct_sub_30cm: f64,
    /// `(error, fraction of epochs with error <= it)`, sorted by error.
    pub cdf: Vec<(f64, f64)>,
    pub errors: Vec<EpochError>,
}

/// Row labels and thresholds of the accuracy percentages.
pub const THRESHOLDS: [(&str, f64); 3] = [("Sub-2 m", 2.0), ("Sub-1 m", 1.0), ("Sub-30 cm", 0.3)];

impl ErrorReport {
    /// Statistics of a horizontal error series, kept in the given order.
    pub fn from_errors(errors: Vec<EpochError>) -> Result<Self, HarnessError> {
        if errors.is_empty() {
            return Err(HarnessError::EmptySeries);
        }
        if let Some(e) = errors.iter().find(|e| !(e.error_2d >= 0.0) || !e.error_2d.is_finite()) {
            return Err(HarnessError::InvalidError { t: e.t });
        }
        let n = errors.len() as f64;
        let rms_2d = (errors.iter().map(|e| e.error_2d * e.error_2d).sum::<f64>() / n).sqrt();
        let max_2d = errors.iter().map(|e| e.error_2d).fold(0.0, f64::max);
        let pct = |limit: f64| 100.0 * errors.iter().filter(|e| e.error_2d < limit).count() as f64 / n;
        let mut sorted: Vec<f64> = errors.iter().map(|e| e.error_2d).collect();
        sorted.sort_by(f64::total_cmp);
        let cdf = sorted
            .iter()
            .enumerate()
            .map(|(i, &e)| (e, (i + 1) as f64 / n))
            .collect();
        Ok(Self {
            rms_2d,
            max_2d,
            pct_sub_2m: pct(2.0),
            pct_sub_1m: pct(1.0),
            pct_sub_30cm: pct(0.3),
            cdf,
            errors,
        })
    }

    pub fn percentages(&self) -> [f64; 3] {
        [self.pct_sub_2m, self.pct_sub_1m, self.pct_sub_30cm]
    }

    /// Pools the epochs of several reports.
    pub fn pooled<'a>(reports: impl IntoIterator<Item = &'a ErrorReport>) -> Result<Self, HarnessError> {
        Self::from_errors(reports.into_iter().flat_map(|r| r.errors.iter().copied()).collect())
    }
}

/// Horizontal error of each estimate against the truth sample nearest in time.
///
/// A truth sample is accepted if it lies within half the truth sampling interval of the
/// estimate; the interval is the median spacing of `truth`. Both series must be sorted
/// by time.
pub fn compute_error_report(
    estimate: &[Stamped],
    truth: &[Stamped],
    frame: &LocalFrame,
) -> Result<ErrorReport, HarnessError> {
    if estimate.is_empty() || truth.is_empty() {
        return Err(HarnessError::EmptySeries);
    }
    for s in [estimate, truth] {
        if let Some(w) = s.windows(2).find(|w| !(w[1].t > w[0].t)) {
            return Err(HarnessError::Unsorted { t: w[1].t });
        }
    }
    let tol = if truth.len() < 2 {
        1e-9
    } else {
        let mut gaps: Vec<f64> = truth.windows(2).map(|w| w[1].t - w[0].t).collect();
        gaps.sort_by(f64::total_cmp);
        0.5 * gaps[gaps.len() / 2] + 1e-9
    };
    let mut j = 0;
    let mut errors = Vec::with_capacity(estimate.len());
    for e in estimate {
        while j + 1 < truth.len() && (truth[j + 1].t - e.t).abs() <= (truth[j].t - e.t).abs() {
            j += 1;
        }
        if (truth[j].t - e.t).abs() > tol {
            return Err(HarnessError::Unaligned { t: e.t });
        }
        let d = frame.to_enu(&e.position) - frame.to_enu(&truth[j].position);
        errors.push(EpochError { t: e.t, error_2d: d.xy().norm() });
    }
    ErrorReport::from_errors(errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::EarthModel;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn frame() -> LocalFrame {
        LocalFrame::new(GeodeticPosition::from_degrees(43.65, -79.38, 80.0).unwrap(), EarthModel::wgs84())
    }

    fn series(f: &LocalFrame, pts: &[(f64, f64, f64)]) -> Vec<Stamped> {
        pts.iter()
            .map(|&(t, e, n)| Stamped { t, position: f.to_geodetic(&Vector3::new(e, n, 1.5)) })
            .collect()
    }

    fn errs(v: &[f64]) -> Vec<EpochError> {
        v.iter().enumerate().map(|(i, &e)| EpochError { t: i as f64, error_2d: e }).collect()
    }

    #[test]
    fn identical_series_is_all_zero() {
        let f = frame();
        let s = series(&f, &[(0.0, 1.0, 2.0), (0.1, 3.0, 4.0), (0.2, -5.0, 6.0)]);
        let r = compute_error_report(&s, &s, &f).unwrap();
        assert_eq!(r.rms_2d, 0.0);
        assert_eq!(r.max_2d, 0.0);
        assert_eq!(r.percentages(), [100.0; 3]);
    }

    #[test]
    fn constant_half_meter_offset() {
        let f = frame();
        let truth = series(&f, &[(0.0, 0.0, 0.0), (1.0, 10.0, 0.0), (2.0, 20.0, 5.0)]);
        let est = series(&f, &[(0.0, 0.3, 0.4), (1.0, 10.3, 0.4), (2.0, 20.3, 5.4)]);
        let r = compute_error_report(&est, &truth, &f).unwrap();
        assert_relative_eq!(r.rms_2d, 0.5, epsilon = 1e-9);
        assert_relative_eq!(r.max_2d, 0.5, epsilon = 1e-9);
        assert_eq!(r.percentages(), [100.0, 100.0, 0.0]);
    }

    #[test]
    fn four_point_hand_example() {
        let r = ErrorReport::from_errors(errs(&[0.1, 0.2, 0.4, 3.0])).unwrap();
        // (0.01 + 0.04 + 0.16 + 9) / 4
        assert_relative_eq!(r.rms_2d, (9.21f64 / 4.0).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(r.rms_2d, 1.517, epsilon = 5e-4);
        assert_eq!(r.max_2d, 3.0);
        assert_eq!(r.pct_sub_30cm, 50.0);
        assert_eq!(r.pct_sub_1m, 75.0);
        assert_eq!(r.pct_sub_2m, 75.0);
        assert_eq!(r.cdf, vec![(0.1, 0.25), (0.2, 0.5), (0.4, 0.75), (3.0, 1.0)]);
    }

    #[test]
    fn nearest_truth_sample_is_used() {
        let f = frame();
        let truth = series(&f, &[(0.0, 0.0, 0.0), (0.01, 1.0, 0.0), (0.02, 2.0, 0.0)]);
        let est = series(&f, &[(0.0141, 1.0, 0.0)]);
        let r = compute_error_report(&est, &truth, &f).unwrap();
        assert!(r.max_2d < 1e-9);
        let late = series(&f, &[(0.0301, 2.0, 0.0)]);
        assert!(matches!(compute_error_report(&late, &truth, &f), Err(HarnessError::Unaligned { .. })));
    }

    #[test]
    fn empty_and_unsorted_inputs_are_rejected() {
        let f = frame();
        let s = series(&f, &[(1.0, 0.0, 0.0), (0.5, 0.0, 0.0)]);
        assert!(matches!(compute_error_report(&[], &s, &f), Err(HarnessError::EmptySeries)));
        assert!(matches!(compute_error_report(&s, &s, &f), Err(HarnessError::Unsorted { .. })));
    }

    proptest! {
        #[test]
        fn percentages_and_cdf_are_monotone(v in prop::collection::vec(0.0f64..5.0, 1..200)) {
            let r = ErrorReport::from_errors(errs(&v)).unwrap();
            prop_assert!(r.pct_sub_30cm <= r.pct_sub_1m && r.pct_sub_1m <= r.pct_sub_2m);
            prop_assert!(r.cdf.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
            prop_assert_eq!(r.cdf.last().unwrap().1, 1.0);
            prop_assert!(r.rms_2d <= r.max_2d + 1e-12);
        }
    }
}
