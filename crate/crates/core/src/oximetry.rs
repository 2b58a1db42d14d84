//! Ratio of ratios, the linear SpO₂ calibration and resting-window metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::dsp::{self, PeakTrain};
use crate::error::Result;
use crate::ingest::{validate_recording, PpgRecording};

/// Lower edge of the healthy resting SpO₂ range, in percent.
pub const HEALTHY_MIN_PCT: f64 = 94.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OximetryError {
    #[error("length mismatch between input channels")]
    LengthMismatch,
    #[error("non-positive DC value at sample {0}")]
    NonPositiveDc(usize),
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
    #[error("recording unusable: {0}")]
    UnusableRecording(String),
    #[error("window [{start}, {end}] s is out of range")]
    WindowOutOfRange { start: f64, end: f64 },
    #[error("no usable samples in window [{start}, {end}] s")]
    NoValidSamples { start: f64, end: f64 },
    #[error("amplitude list is empty")]
    EmptyList,
    #[error("non-positive amplitude at index {0}")]
    NonPositiveAmplitude(usize),
}

/// `SpO₂ = intercept − slope · R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub intercept: f64,
    pub slope: f64,
}

impl Default for CalibrationCurve {
    fn default() -> Self {
        Self {
            intercept: 104.0,
            slope: 17.0,
        }
    }
}

impl CalibrationCurve {
    pub fn validate(&self) -> Result<(), OximetryError> {
        if !(self.slope > 0.0 && self.slope.is_finite()) {
            return Err(OximetryError::InvalidCalibration(format!("slope {} must be positive", self.slope)));
        }
        if !(self.intercept > 50.0 && self.intercept <= 120.0) {
            return Err(OximetryError::InvalidCalibration(format!(
                "intercept {} outside (50, 120]",
                self.intercept
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn spo2(&self, r: f64) -> f64 {
        self.intercept - self.slope * r
    }
}

/// Per-sample R. `None` where the infrared AC/DC ratio falls below `eps`.
pub fn ratio_of_ratios(
    ac_red: &[f64],
    dc_red: &[f64],
    ac_ir: &[f64],
    dc_ir: &[f64],
    eps: f64,
) -> Result<Vec<Option<f64>>, OximetryError> {
    let n = ac_red.len();
    if dc_red.len() != n || ac_ir.len() != n || dc_ir.len() != n {
        return Err(OximetryError::LengthMismatch);
    }
    (0..n)
        .map(|i| {
            if !(dc_red[i] > 0.0 && dc_ir[i] > 0.0) {
                return Err(OximetryError::NonPositiveDc(i));
            }
            let ir = ac_ir[i] / dc_ir[i];
            Ok((ir >= eps).then(|| (ac_red[i] / dc_red[i]) / ir))
        })
        .collect()
}

pub fn spo2_from_r(r: &[f64], cal: &CalibrationCurve) -> Vec<f64> {
    r.iter().map(|&r| cal.spo2(r)).collect()
}

/// Centred moving average over a time window of `width_s`, truncated at the
/// ends of the record.
pub fn moving_average(t: &[f64], x: &[f64], width_s: f64) -> Vec<f64> {
    let n = x.len();
    if width_s <= 0.0 || n == 0 {
        return x.to_vec();
    }
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    let half = width_s / 2.0;
    let (mut lo, mut hi) = (0usize, 0usize);
    (0..n)
        .map(|i| {
            while t[lo] < t[i] - half {
                lo += 1;
            }
            while hi < n && t[hi] <= t[i] + half {
                hi += 1;
            }
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    Ok,
    LowAmplitude,
    Extrapolated,
}

/// Per-channel intermediates kept alongside the SpO₂ trace.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChannelFeatures {
    pub ac: Vec<f64>,
    pub dc: Vec<f64>,
    pub beats: PeakTrain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpO2Series {
    pub t: Vec<f64>,
    /// Smoothed, unclamped SpO₂.
    pub spo2_raw: Vec<f64>,
    /// `spo2_raw` clamped to [0, 100].
    pub spo2: Vec<f64>,
    /// SpO₂ straight from the calibration, before smoothing.
    pub spo2_unsmoothed: Vec<f64>,
    pub r: Vec<f64>,
    pub quality: Vec<Quality>,
    pub red: ChannelFeatures,
    pub ir: ChannelFeatures,
}

impl SpO2Series {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Index range of samples with `start <= t <= end`.
    pub fn window(&self, start: f64, end: f64) -> std::ops::Range<usize> {
        let lo = self.t.partition_point(|&t| t < start);
        let hi = self.t.partition_point(|&t| t <= end);
        lo..hi.max(lo)
    }
}

fn channel_features(x: &[f64], t: &[f64], fs: f64, cfg: &PipelineConfig) -> Result<ChannelFeatures> {
    let filtered = dsp::filter_on_timebase(x, t, fs, &cfg.bandpass)?;
    let beats = dsp::detect_peaks_troughs(&filtered, t, &cfg.peaks)?;
    let env = dsp::interpolate_envelopes(&beats, t)?;
    let ac = dsp::ac_amplitude(&env);
    let dc = dsp::dc_baseline_on_timebase(x, t, fs, &cfg.dc)?;
    Ok(ChannelFeatures { ac, dc, beats })
}

/// Full raw-to-SpO₂ pipeline for one recording.
pub fn compute_spo2_series(rec: &PpgRecording, cfg: &PipelineConfig) -> Result<SpO2Series> {
    let validation = validate_recording(rec, cfg.adc_max);
    if !validation.is_usable() {
        let reasons: Vec<String> = validation.fatal().map(ToString::to_string).collect();
        return Err(OximetryError::UnusableRecording(reasons.join("; ")).into());
    }
    cfg.calibration.validate()?;
    let t = rec.times();
    let fs = cfg.declared_fs.unwrap_or(rec.fs());
    let red = channel_features(&rec.red(), &t, fs, cfg)?;
    let ir = channel_features(&rec.infrared(), &t, fs, cfg)?;

    let ratio = ratio_of_ratios(&red.ac, &red.dc, &ir.ac, &ir.dc, cfg.low_amplitude_eps)?;
    let (r, mut quality) = bridge_low_amplitude(&t, &ratio, cfg.bridge_gap_s);

    let (red_first, red_last) = red.beats.span().expect("beats validated by detection");
    let (ir_first, ir_last) = ir.beats.span().expect("beats validated by detection");
    let (first, last) = (red_first.max(ir_first), red_last.min(ir_last));
    for (q, &ti) in quality.iter_mut().zip(&t) {
        if ti < first || ti > last {
            *q = Quality::Extrapolated;
        }
    }

    let spo2_unsmoothed = spo2_from_r(&r, &cfg.calibration);
    let spo2_raw = moving_average(&t, &spo2_unsmoothed, cfg.smooth_s);
    let spo2 = spo2_raw.iter().map(|v| v.clamp(0.0, 100.0)).collect();
    Ok(SpO2Series {
        t,
        spo2_raw,
        spo2,
        spo2_unsmoothed,
        r,
        quality,
        red,
        ir,
    })
}

/// Fills missing R values. Gaps shorter than `max_gap_s` between two valid
/// samples are linearly interpolated and flagged `LowAmplitude`; longer or
/// unbounded gaps hold the nearest valid value and are flagged `Extrapolated`.
fn bridge_low_amplitude(t: &[f64], ratio: &[Option<f64>], max_gap_s: f64) -> (Vec<f64>, Vec<Quality>) {
    let n = ratio.len();
    let mut r = vec![0.0; n];
    let mut quality = vec![Quality::Ok; n];
    let valid: Vec<usize> = (0..n).filter(|&i| ratio[i].is_some()).collect();
    if valid.is_empty() {
        return (vec![f64::NAN; n], vec![Quality::Extrapolated; n]);
    }
    let mut i = 0;
    while i < n {
        if let Some(v) = ratio[i] {
            r[i] = v;
            i += 1;
            continue;
        }
        let start = i;
        while i < n && ratio[i].is_none() {
            i += 1;
        }
        let end = i; // exclusive
        let left = start.checked_sub(1);
        let right = (end < n).then_some(end);
        match (left, right) {
            (Some(l), Some(rgt)) if t[rgt] - t[l] < max_gap_s => {
                let (rl, rr) = (ratio[l].unwrap(), ratio[rgt].unwrap());
                for k in start..end {
                    let w = (t[k] - t[l]) / (t[rgt] - t[l]);
                    r[k] = rl + w * (rr - rl);
                    quality[k] = Quality::LowAmplitude;
                }
            }
            _ => {
                for k in start..end {
                    let nearest = match (left, right) {
                        (Some(l), Some(rgt)) => {
                            if t[k] - t[l] <= t[rgt] - t[k] {
                                l
                            } else {
                                rgt
                            }
                        }
                        (Some(l), None) => l,
                        (None, Some(rgt)) => rgt,
                        (None, None) => unreachable!(),
                    };
                    r[k] = ratio[nearest].unwrap();
                    quality[k] = Quality::Extrapolated;
                }
            }
        }
    }
    (r, quality)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestingMetrics {
    pub window: [f64; 2],
    pub mean_spo2: f64,
    pub mean_ac_amplitude_ir: f64,
    pub healthy: bool,
}

/// Window means of SpO₂ and infrared AC amplitude over OK samples.
pub fn resting_metrics(
    series: &SpO2Series,
    amplitude_ir: &[f64],
    window: [f64; 2],
) -> Result<RestingMetrics, OximetryError> {
    let [start, end] = window;
    let out_of_range = OximetryError::WindowOutOfRange { start, end };
    if series.is_empty() || amplitude_ir.len() != series.len() {
        return Err(OximetryError::LengthMismatch);
    }
    let (t0, t1) = (series.t[0], series.t[series.len() - 1]);
    if !(start >= t0 && end <= t1 && end - start >= 30.0) {
        return Err(out_of_range);
    }
    let (mut sum_spo2, mut sum_amp, mut count) = (0.0, 0.0, 0usize);
    for i in series.window(start, end) {
        if series.quality[i] == Quality::Ok {
            sum_spo2 += series.spo2[i];
            sum_amp += amplitude_ir[i];
            count += 1;
        }
    }
    if count == 0 {
        return Err(OximetryError::NoValidSamples { start, end });
    }
    let mean_spo2 = sum_spo2 / count as f64;
    Ok(RestingMetrics {
        window,
        mean_spo2,
        mean_ac_amplitude_ir: sum_amp / count as f64,
        healthy: (HEALTHY_MIN_PCT..=100.0).contains(&mean_spo2),
    })
}

/// Divides every amplitude by the largest one.
pub fn normalize_amplitudes(values: &[f64]) -> Result<Vec<f64>, OximetryError> {
    if values.is_empty() {
        return Err(OximetryError::EmptyList);
    }
    if let Some(i) = values.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(OximetryError::NonPositiveAmplitude(i));
    }
    let max = values.iter().copied().fold(f64::MIN, f64::max);
    Ok(values.iter().map(|v| v / max).collect())
}
