//! Breath-hold segmentation and desaturation delay measurement.
//!
//! The button release marks the end of a hold, taken as the moment of minimal
//! blood oxygen. The delay at a site is the time from release to the first
//! qualifying trough of that site's smoothed SpO₂ trace.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::EventMarker;
use crate::oximetry::SpO2Series;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("no desaturation trough within {search_s} s after release at {release_t} s")]
    NoTroughFound { release_t: f64, search_s: f64 },
    #[error("series does not cover the search window starting at {0} s")]
    WindowOutOfRange(f64),
    #[error("no samples in the pre-hold baseline window before {0} s")]
    EmptyBaseline(f64),
    #[error("negative delay: trough at {trough_t} s precedes release at {release_t} s")]
    NegativeDelay { trough_t: f64, release_t: f64 },
    #[error("segment indices differ between sites: {first:?} vs {second:?}")]
    SegmentMismatch { first: Vec<usize>, second: Vec<usize> },
    #[error("no delay measurements")]
    NoMeasurements,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    pub expected: usize,
    /// Accepted hold durations (press to release), seconds.
    pub duration_band_s: [f64; 2],
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            expected: 3,
            duration_band_s: [10.0, 60.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreathHoldSegment {
    /// 1-based position in the protocol.
    pub index: usize,
    pub press_t: f64,
    pub release_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentWarning {
    /// Marker outside the duration band.
    Rejected { press_t: f64, duration_s: f64 },
    /// Number of accepted holds differs from the protocol.
    UnexpectedCount { expected: usize, got: usize },
}

impl std::fmt::Display for SegmentWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SegmentWarning::Rejected { press_t, duration_s } => write!(
                f,
                "button press at {press_t:.2} s lasting {duration_s:.2} s is outside the hold band"
            ),
            SegmentWarning::UnexpectedCount { expected, got } => write!(f, "Expected{expected}Got{got}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Segmentation {
    pub segments: Vec<BreathHoldSegment>,
    pub warnings: Vec<SegmentWarning>,
}

pub fn segment_breath_holds(markers: &[EventMarker], cfg: &SegmentConfig) -> Segmentation {
    let mut sorted = markers.to_vec();
    sorted.sort_by(|a, b| a.press_t.total_cmp(&b.press_t));
    let [lo, hi] = cfg.duration_band_s;
    let mut out = Segmentation::default();
    for m in sorted {
        let duration_s = m.duration();
        if (lo..=hi).contains(&duration_s) {
            out.segments.push(BreathHoldSegment {
                index: out.segments.len() + 1,
                press_t: m.press_t,
                release_t: m.release_t,
            });
        } else {
            out.warnings.push(SegmentWarning::Rejected {
                press_t: m.press_t,
                duration_s,
            });
        }
    }
    if out.segments.len() != cfg.expected {
        out.warnings.push(SegmentWarning::UnexpectedCount {
            expected: cfg.expected,
            got: out.segments.len(),
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TroughConfig {
    /// Search window length after release.
    pub search_s: f64,
    /// Minimum drop below the pre-hold baseline, percentage points.
    pub depth_pct: f64,
    /// Length of the pre-hold baseline window ending at the press.
    pub baseline_s: f64,
    /// The coarse search starts this long before release, since smoothing can
    /// move a trough at the release slightly earlier. Refined times are
    /// clamped to the release.
    pub lead_s: f64,
    /// A candidate must be the lowest sample within this distance on both sides.
    pub neighborhood_s: f64,
    /// Half-width of the window for the hinge fit on the unsmoothed trace.
    /// Zero disables refinement.
    pub refine_half_s: f64,
    /// How far the hinge may move before and after the coarse trough.
    pub refine_shift_s: [f64; 2],
}

impl Default for TroughConfig {
    fn default() -> Self {
        Self {
            search_s: 45.0,
            depth_pct: 1.0,
            baseline_s: 30.0,
            lead_s: 1.5,
            neighborhood_s: 1.5,
            refine_half_s: 4.0,
            refine_shift_s: [2.0, 3.0],
        }
    }
}

impl TroughConfig {
    pub fn validate(&self) -> Result<(), String> {
        let ok = self.search_s > 0.0
            && self.depth_pct >= 0.0
            && self.baseline_s > 0.0
            && self.lead_s >= 0.0
            && self.neighborhood_s >= 0.0
            && self.refine_half_s >= 0.0
            && self.refine_shift_s.iter().all(|v| *v >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(format!("invalid trough config: {self:?}"))
        }
    }
}

/// Time of the desaturation trough after release.
///
/// The first qualifying local minimum of the smoothed (unclamped) SpO₂ is
/// located, then its time is refined by a two-segment linear fit to the
/// unsmoothed trace. The moving average pulls the minimum of an asymmetric
/// dip toward its slower side; the fit does not.
pub fn find_desaturation_trough(
    series: &SpO2Series,
    segment: &BreathHoldSegment,
    cfg: &TroughConfig,
) -> Result<f64, ProtocolError> {
    let coarse = first_trough(&series.t, &series.spo2_raw, segment, cfg)?;
    let fine = if cfg.refine_half_s > 0.0 {
        refine_trough(&series.t, &series.spo2_unsmoothed, coarse, cfg)
    } else {
        coarse
    };
    Ok(fine.clamp(segment.release_t, segment.release_t + cfg.search_s))
}

/// Best hinge time for `x ≈ v + a·min(t−h, 0) + b·max(t−h, 0)` over samples
/// within `refine_half_s` of `coarse`, with `h` restricted to sample times in
/// `[coarse − shift[0], coarse + shift[1]]`. Non-finite samples are ignored.
pub fn refine_trough(t: &[f64], x: &[f64], coarse: f64, cfg: &TroughConfig) -> f64 {
    let lo = t.partition_point(|&v| v < coarse - cfg.refine_half_s);
    let hi = t.partition_point(|&v| v <= coarse + cfg.refine_half_s);
    let mut best = (f64::INFINITY, coarse);
    for &h in &t[lo..hi] {
        if h < coarse - cfg.refine_shift_s[0] || h > coarse + cfg.refine_shift_s[1] {
            continue;
        }
        let pts = || (lo..hi).filter(|&i| x[i].is_finite()).map(|i| ([1.0, (t[i] - h).min(0.0), (t[i] - h).max(0.0)], x[i]));
        let mut ata = [[0.0; 3]; 3];
        let mut atb = [0.0; 3];
        for (row, y) in pts() {
            for p in 0..3 {
                for q in 0..3 {
                    ata[p][q] += row[p] * row[q];
                }
                atb[p] += row[p] * y;
            }
        }
        let Some(c) = solve3(ata, atb) else { continue };
        let sse: f64 = pts()
            .map(|(row, y)| {
                let e = y - (c[0] + c[1] * row[1] + c[2] * row[2]);
                e * e
            })
            .sum();
        if sse < best.0 {
            best = (sse, h);
        }
    }
    best.1
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

// Cramer's rule; the system is tiny and well conditioned when both sides of
// the hinge hold samples.
fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let d = det3(&a);
    if d.abs() < 1e-12 {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][c] = b[r];
        }
        *o = det3(&m) / d;
    }
    Some(out)
}

/// Coarse stage of [`find_desaturation_trough`] on bare arrays: the first
/// local minimum in `[release − lead_s, release + search_s]` that is lowest
/// within `neighborhood_s` and at least `depth_pct` below the baseline.
pub fn first_trough(t: &[f64], x: &[f64], segment: &BreathHoldSegment, cfg: &TroughConfig) -> Result<f64, ProtocolError> {
    let n = t.len();
    if n < 3 || segment.release_t < t[0] || segment.release_t > t[n - 1] {
        return Err(ProtocolError::WindowOutOfRange(segment.release_t));
    }
    let b_lo = t.partition_point(|&v| v < segment.press_t - cfg.baseline_s);
    let b_hi = t.partition_point(|&v| v <= segment.press_t);
    if b_hi <= b_lo {
        return Err(ProtocolError::EmptyBaseline(segment.press_t));
    }
    let baseline = x[b_lo..b_hi].iter().sum::<f64>() / (b_hi - b_lo) as f64;

    let start = t.partition_point(|&v| v < segment.release_t - cfg.lead_s).max(1);
    let end = t.partition_point(|&v| v <= segment.release_t + cfg.search_s);
    let mut i = start;
    while i < end && i + 1 < n {
        if x[i] < x[i - 1] {
            // walk across a plateau; it counts as a minimum if it rises after
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] > x[i] && baseline - x[i] >= cfg.depth_pct && lowest_nearby(t, x, i, cfg.neighborhood_s) {
                return Ok(t[i]);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    Err(ProtocolError::NoTroughFound {
        release_t: segment.release_t,
        search_s: cfg.search_s,
    })
}

fn lowest_nearby(t: &[f64], x: &[f64], i: usize, radius: f64) -> bool {
    let lo = t.partition_point(|&v| v < t[i] - radius);
    let hi = t.partition_point(|&v| v <= t[i] + radius);
    x[lo..hi].iter().all(|&v| v >= x[i])
}

pub fn absolute_delay(trough_t: f64, release_t: f64) -> Result<f64, ProtocolError> {
    if trough_t < release_t {
        return Err(ProtocolError::NegativeDelay { trough_t, release_t });
    }
    Ok(trough_t - release_t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayMeasurement {
    pub segment: usize,
    pub trough_t: f64,
    pub delay_s: f64,
}

impl DelayMeasurement {
    pub fn measure(series: &SpO2Series, segment: &BreathHoldSegment, cfg: &TroughConfig) -> Result<Self, ProtocolError> {
        let trough_t = find_desaturation_trough(series, segment, cfg)?;
        Ok(Self {
            segment: segment.index,
            trough_t,
            delay_s: absolute_delay(trough_t, segment.release_t)?,
        })
    }
}

/// Per-subject delay summary for two sites.
///
/// Relative delay is finger minus ear, so it is positive when the ear
/// responds first. Any pair of sites can be compared by passing the
/// reference site as `ear`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayReport {
    pub ear: Vec<DelayMeasurement>,
    pub finger: Vec<DelayMeasurement>,
    /// Finger minus ear, per segment.
    pub relative_s: Vec<f64>,
    pub mean_ear_s: f64,
    pub mean_finger_s: f64,
    pub mean_relative_s: f64,
    pub range_ear_s: f64,
    pub range_finger_s: f64,
    pub range_relative_s: f64,
}

fn mean_and_range(v: &[f64]) -> (f64, f64) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    (mean, max - min)
}

pub fn subject_delay_report(ear: &[DelayMeasurement], finger: &[DelayMeasurement]) -> Result<DelayReport, ProtocolError> {
    let mut ear = ear.to_vec();
    let mut finger = finger.to_vec();
    ear.sort_by_key(|m| m.segment);
    finger.sort_by_key(|m| m.segment);
    let ear_idx: Vec<usize> = ear.iter().map(|m| m.segment).collect();
    let finger_idx: Vec<usize> = finger.iter().map(|m| m.segment).collect();
    if ear_idx != finger_idx {
        return Err(ProtocolError::SegmentMismatch {
            first: ear_idx,
            second: finger_idx,
        });
    }
    if ear.is_empty() {
        return Err(ProtocolError::NoMeasurements);
    }
    let ear_d: Vec<f64> = ear.iter().map(|m| m.delay_s).collect();
    let finger_d: Vec<f64> = finger.iter().map(|m| m.delay_s).collect();
    let relative_s: Vec<f64> = finger_d.iter().zip(&ear_d).map(|(f, e)| f - e).collect();
    let (mean_ear_s, range_ear_s) = mean_and_range(&ear_d);
    let (mean_finger_s, range_finger_s) = mean_and_range(&finger_d);
    let (_, range_relative_s) = mean_and_range(&relative_s);
    Ok(DelayReport {
        ear,
        finger,
        relative_s,
        mean_ear_s,
        mean_finger_s,
        mean_relative_s: mean_finger_s - mean_ear_s,
        range_ear_s,
        range_finger_s,
        range_relative_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn marker(press_t: f64, release_t: f64) -> EventMarker {
        EventMarker { press_t, release_t }
    }

    fn seg(press_t: f64, release_t: f64) -> BreathHoldSegment {
        BreathHoldSegment {
            index: 1,
            press_t,
            release_t,
        }
    }

    fn dm(segment: usize, delay_s: f64) -> DelayMeasurement {
        DelayMeasurement {
            segment,
            trough_t: 100.0 + delay_s,
            delay_s,
        }
    }

    #[test]
    fn nominal_schedule_gives_three_segments() {
        let m = [marker(120.0, 145.0), marker(205.0, 230.0), marker(290.0, 315.0)];
        let s = segment_breath_holds(&m, &SegmentConfig::default());
        assert_eq!(s.segments.len(), 3);
        assert!(s.warnings.is_empty());
        assert_eq!(s.segments.iter().map(|s| s.index).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn spurious_marker_is_rejected() {
        let m = [marker(120.0, 145.0), marker(170.0, 170.5), marker(205.0, 230.0), marker(290.0, 315.0)];
        let s = segment_breath_holds(&m, &SegmentConfig::default());
        assert_eq!(s.segments.len(), 3);
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn two_markers_warn() {
        let m = [marker(120.0, 145.0), marker(205.0, 230.0)];
        let s = segment_breath_holds(&m, &SegmentConfig::default());
        assert_eq!(s.segments.len(), 2);
        assert_eq!(s.warnings, vec![SegmentWarning::UnexpectedCount { expected: 3, got: 2 }]);
        assert_eq!(s.warnings[0].to_string(), "Expected3Got2");
    }

    /// Baseline 97 until press; dip with minimum at `min_t`.
    fn dip_series(min_t: f64) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..2000).map(|i| i as f64 * 0.1).collect();
        let x = t
            .iter()
            .map(|&ti| {
                let d = ti - min_t;
                if d < -20.0 {
                    97.0
                } else if d < 0.0 {
                    97.0 + 4.0 * d / 20.0
                } else {
                    97.0 - 4.0 * (-d / 10.0).exp()
                }
            })
            .collect();
        (t, x)
    }

    #[test]
    fn synthetic_dip_minimum_is_found() {
        let (t, x) = dip_series(100.0);
        let got = first_trough(&t, &x, &seg(70.8, 95.8), &TroughConfig::default()).unwrap();
        assert!((got - 100.0).abs() <= 0.5, "{got}");
    }

    #[test]
    fn constant_series_has_no_trough() {
        let t: Vec<f64> = (0..1000).map(|i| i as f64 * 0.1).collect();
        let x = vec![97.0; t.len()];
        assert!(matches!(
            first_trough(&t, &x, &seg(40.0, 50.0), &TroughConfig::default()),
            Err(ProtocolError::NoTroughFound { .. })
        ));
    }

    /// Brute force: scan every sample in the window for a strict-left,
    /// rising-right minimum that is lowest in its neighbourhood and deep
    /// enough, and return the first.
    fn brute_force(t: &[f64], x: &[f64], s: &BreathHoldSegment, cfg: &TroughConfig) -> Option<f64> {
        let base: Vec<f64> = t
            .iter()
            .zip(x)
            .filter(|(ti, _)| **ti >= s.press_t - cfg.baseline_s && **ti <= s.press_t)
            .map(|(_, v)| *v)
            .collect();
        let baseline = base.iter().sum::<f64>() / base.len() as f64;
        (1..t.len() - 1)
            .filter(|&i| t[i] >= s.release_t - cfg.lead_s && t[i] <= s.release_t + cfg.search_s)
            .find(|&i| {
                let near = (0..t.len()).filter(|&j| (t[j] - t[i]).abs() <= cfg.neighborhood_s);
                x[i] < x[i - 1] && x[i] < x[i + 1] && baseline - x[i] >= cfg.depth_pct && near.into_iter().all(|j| x[j] >= x[i])
            })
            .map(|i| t[i])
    }

    #[test]
    fn shallow_minimum_fails_depth_gate() {
        let t: Vec<f64> = (0..1000).map(|i| i as f64 * 0.1).collect();
        // Two dips after release at 50 s: 0.5 points at 55 s, 2.0 points at 65 s.
        let x: Vec<f64> = t
            .iter()
            .map(|&ti| 97.0 - 0.5 * (-(ti - 55.0).powi(2)).exp() - 2.0 * (-(ti - 65.0).powi(2) / 4.0).exp())
            .collect();
        let s = seg(25.0, 50.0);
        let cfg = TroughConfig::default();
        let got = first_trough(&t, &x, &s, &cfg).unwrap();
        assert_eq!(Some(got), brute_force(&t, &x, &s, &cfg));
        assert!((got - 65.0).abs() < 0.05, "{got}");
    }

    #[test]
    fn delay_examples() {
        assert!((absolute_delay(50.0, 45.8).unwrap() - 4.2).abs() < 1e-12);
        assert_eq!(absolute_delay(45.8, 45.8).unwrap(), 0.0);
        assert!(matches!(absolute_delay(40.0, 45.8), Err(ProtocolError::NegativeDelay { .. })));
    }

    #[test]
    fn report_constant_delays() {
        let ear = [dm(1, 4.0), dm(2, 4.0), dm(3, 4.0)];
        let finger = [dm(1, 16.0), dm(2, 16.0), dm(3, 16.0)];
        let r = subject_delay_report(&ear, &finger).unwrap();
        assert_eq!(r.mean_relative_s, 12.0);
        assert_eq!(r.range_ear_s, 0.0);
        assert_eq!(r.range_finger_s, 0.0);
    }

    #[test]
    fn report_arithmetic() {
        let ear = [dm(1, 3.0), dm(2, 4.0), dm(3, 5.0)];
        let finger = [dm(1, 10.0), dm(2, 16.0), dm(3, 22.0)];
        let r = subject_delay_report(&ear, &finger).unwrap();
        assert_eq!(r.mean_ear_s, 4.0);
        assert_eq!(r.mean_finger_s, 16.0);
        assert_eq!(r.mean_relative_s, 12.0);
        assert_eq!(r.range_finger_s, 12.0);
        assert_eq!(r.relative_s, vec![7.0, 12.0, 17.0]);
    }

    #[test]
    fn report_segment_mismatch() {
        let ear = [dm(1, 3.0), dm(2, 4.0)];
        let finger = [dm(1, 10.0), dm(3, 22.0)];
        assert!(matches!(subject_delay_report(&ear, &finger), Err(ProtocolError::SegmentMismatch { .. })));
        assert_eq!(subject_delay_report(&[], &[]), Err(ProtocolError::NoMeasurements));
    }

    proptest! {
        #[test]
        fn relative_identity(e in proptest::collection::vec(0.0f64..10.0, 3), f in proptest::collection::vec(5.0f64..30.0, 3)) {
            let ear: Vec<_> = e.iter().enumerate().map(|(i, &d)| dm(i + 1, d)).collect();
            let finger: Vec<_> = f.iter().enumerate().map(|(i, &d)| dm(i + 1, d)).collect();
            let r = subject_delay_report(&ear, &finger).unwrap();
            prop_assert_eq!(r.mean_relative_s, r.mean_finger_s - r.mean_ear_s);
        }

        #[test]
        fn trough_invariant_under_offset(offset in -50.0f64..50.0, min_t in 90.0f64..120.0) {
            let (t, x) = dip_series(min_t);
            let shifted: Vec<f64> = x.iter().map(|v| v + offset).collect();
            let s = seg(min_t - 29.2, min_t - 4.2);
            let cfg = TroughConfig::default();
            prop_assert_eq!(first_trough(&t, &x, &s, &cfg), first_trough(&t, &shifted, &s, &cfg));
        }

        #[test]
        fn trough_is_time_equivariant(k in 0usize..200) {
            let (t, x) = dip_series(100.0);
            let dt = k as f64 * 0.1;
            let t2: Vec<f64> = t.iter().map(|v| v + dt).collect();
            let s = seg(70.8, 95.8);
            let s2 = seg(70.8 + dt, 95.8 + dt);
            let cfg = TroughConfig::default();
            let a = first_trough(&t, &x, &s, &cfg).unwrap();
            let b = first_trough(&t2, &x, &s2, &cfg).unwrap();
            prop_assert!((b - a - dt).abs() < 1e-9);
        }

        #[test]
        fn monotone_dip_returns_global_minimum(min_t in 80.0f64..150.0) {
            let (t, x) = dip_series(min_t);
            let s = seg(min_t - 29.2, min_t - 4.2);
            let cfg = TroughConfig::default();
            let got = first_trough(&t, &x, &s, &cfg).unwrap();
            let window: Vec<usize> = (0..t.len()).filter(|&i| t[i] >= s.release_t && t[i] <= s.release_t + cfg.search_s).collect();
            let global = window.iter().copied().min_by(|&a, &b| x[a].total_cmp(&x[b])).unwrap();
            prop_assert_eq!(got, t[global]);
        }
    }
}
