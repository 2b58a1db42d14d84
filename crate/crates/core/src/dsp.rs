//! Filtering and beat-level feature extraction.
//!
//! The AC component is the 1–30 Hz band of the raw signal, filtered
//! forward-backward so that beat timing is not biased by group delay. The DC
//! component is a 0.01 Hz low-pass. Beats are located on the AC signal with an
//! adaptive prominence gate, and the peak/trough values are linearly
//! interpolated into upper/lower envelopes whose absolute sum is the per-sample
//! AC amplitude.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("signal too short: {len} samples, need more than {required}")]
    SignalTooShort { len: usize, required: usize },
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("no beats found ({peaks} peaks, {troughs} troughs)")]
    NoBeatsFound { peaks: usize, troughs: usize },
    #[error("too few beats for envelope interpolation ({peaks} peaks, {troughs} troughs)")]
    TooFewBeats { peaks: usize, troughs: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    BandPass,
    LowPass,
}

/// Butterworth filter description.
///
/// For `BandPass` the order applies to each band edge: the filter is a
/// high-pass of `order` at `low_hz` cascaded with a low-pass of `order` at
/// `high_hz`. For `LowPass` only `low_hz` is used as the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
}

impl FilterSpec {
    pub fn band_pass(low_hz: f64, high_hz: f64, order: usize) -> Self {
        Self {
            kind: FilterKind::BandPass,
            low_hz,
            high_hz,
            order,
        }
    }

    pub fn low_pass(cutoff_hz: f64, order: usize) -> Self {
        Self {
            kind: FilterKind::LowPass,
            low_hz: cutoff_hz,
            high_hz: f64::NAN,
            order,
        }
    }

    pub fn validate(&self, fs: f64) -> Result<(), DspError> {
        let nyquist = fs / 2.0;
        if !(fs.is_finite() && fs > 0.0) {
            return Err(DspError::InvalidFilter(format!("sampling rate {fs}")));
        }
        if self.order < 2 || !self.order.is_multiple_of(2) {
            return Err(DspError::InvalidFilter(format!(
                "order {} must be even and at least 2",
                self.order
            )));
        }
        match self.kind {
            FilterKind::BandPass => {
                if !(0.0 < self.low_hz && self.low_hz < self.high_hz && self.high_hz < nyquist) {
                    return Err(DspError::InvalidFilter(format!(
                        "band {}–{} Hz not inside (0, {nyquist}) Hz",
                        self.low_hz, self.high_hz
                    )));
                }
            }
            FilterKind::LowPass => {
                if !(0.0 < self.low_hz && self.low_hz < nyquist) {
                    return Err(DspError::InvalidFilter(format!(
                        "cutoff {} Hz not inside (0, {nyquist}) Hz",
                        self.low_hz
                    )));
                }
            }
        }
        Ok(())
    }

    /// Second-order sections implementing the filter at `fs`.
    pub fn design(&self, fs: f64) -> Result<Vec<Biquad>, DspError> {
        self.validate(fs)?;
        Ok(match self.kind {
            FilterKind::BandPass => {
                let mut sections = butterworth_sections(self.order, self.low_hz, fs, Response::HighPass);
                sections.extend(butterworth_sections(self.order, self.high_hz, fs, Response::LowPass));
                sections
            }
            FilterKind::LowPass => butterworth_sections(self.order, self.low_hz, fs, Response::LowPass),
        })
    }

    /// Edge transient allowance in seconds: three time constants of the lowest corner.
    pub fn transient_s(&self) -> f64 {
        3.0 / self.low_hz
    }

    /// Linear magnitude response at `f` Hz of the digital filter (one pass).
    pub fn magnitude(&self, f: f64, fs: f64) -> Result<f64, DspError> {
        Ok(self.design(fs)?.iter().map(|s| s.magnitude(f, fs)).product())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Response {
    LowPass,
    HighPass,
}

/// Normalised biquad (a0 = 1), transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Gain at DC.
    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    pub fn magnitude(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (self.b[0] + self.b[1] * c1 + self.b[2] * c2, self.b[1] * s1 + self.b[2] * s2);
        let den = (1.0 + self.a[0] * c1 + self.a[1] * c2, self.a[0] * s1 + self.a[1] * s2);
        num.0.hypot(num.1) / den.0.hypot(den.1)
    }

    /// State that makes the section output constant for a constant input `u`.
    fn steady_state(&self, u: f64) -> ([f64; 2], f64) {
        let y = self.dc_gain() * u;
        let z2 = self.b[2] * u - self.a[1] * y;
        let z1 = self.b[1] * u - self.a[0] * y + z2;
        ([z1, z2], y)
    }

    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + z[0];
            z[0] = b1 * input - a1 * y + z[1];
            z[1] = b2 * input - a2 * y;
            *v = y;
        }
    }
}

/// Bilinear-transform Butterworth sections with pre-warped cutoff.
fn butterworth_sections(order: usize, cutoff: f64, fs: f64, response: Response) -> Vec<Biquad> {
    let k = (PI * cutoff / fs).tan();
    let k2 = k * k;
    (0..order / 2)
        .map(|i| {
            // Pole pair damping of the analog prototype.
            let q = 1.0 / (2.0 * (PI * (2 * i + 1) as f64 / (2 * order) as f64).sin());
            let norm = 1.0 / (1.0 + k / q + k2);
            let a = [2.0 * (k2 - 1.0) * norm, (1.0 - k / q + k2) * norm];
            let b = match response {
                // Scaled from the realised denominator so the DC gain is one
                // to working precision even at very low cutoffs.
                Response::LowPass => {
                    let b0 = (1.0 + a[0] + a[1]) / 4.0;
                    [b0, 2.0 * b0, b0]
                }
                Response::HighPass => [norm, -2.0 * norm, norm],
            };
            Biquad { b, a }
        })
        .collect()
}

fn run_cascade(sections: &[Biquad], x: &mut [f64]) {
    let mut u = x[0];
    for s in sections {
        let (z, y) = s.steady_state(u);
        s.run(x, z);
        u = y;
    }
}

/// Forward then backward pass over an already padded buffer.
fn forward_backward(sections: &[Biquad], buf: &mut [f64]) {
    run_cascade(sections, buf);
    buf.reverse();
    run_cascade(sections, buf);
    buf.reverse();
}

/// Zero-phase Butterworth filter with odd-reflection edge padding.
///
/// The signal is assumed uniformly sampled at `fs`; see
/// [`filter_on_timebase`] for irregular timestamps.
pub fn filter_zero_phase(x: &[f64], fs: f64, spec: &FilterSpec) -> Result<Vec<f64>, DspError> {
    let sections = spec.design(fs)?;
    let pad = (spec.transient_s() * fs).ceil() as usize;
    if x.len() <= 3 * pad {
        return Err(DspError::SignalTooShort {
            len: x.len(),
            required: 3 * pad,
        });
    }
    let n = x.len();
    let mut buf = Vec::with_capacity(n + 2 * pad);
    buf.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    buf.extend_from_slice(x);
    buf.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    forward_backward(&sections, &mut buf);
    Ok(buf[pad..pad + n].to_vec())
}

/// Cutoff of the DC baseline filter.
pub const DC_CUTOFF_HZ: f64 = 0.01;
/// Minimum input duration accepted by [`dc_baseline`].
pub const DC_MIN_DURATION_S: f64 = 60.0;
/// Constant-extension length on each side of the DC filter input.
pub const DC_PAD_S: f64 = 100.0;
const DC_EDGE_MEAN_S: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DcConfig {
    pub cutoff_hz: f64,
    pub order: usize,
    pub pad_s: f64,
}

impl Default for DcConfig {
    fn default() -> Self {
        Self {
            cutoff_hz: DC_CUTOFF_HZ,
            order: 2,
            pad_s: DC_PAD_S,
        }
    }
}

/// Slow baseline of a raw channel via a zero-phase 0.01 Hz low-pass.
///
/// Both ends are extended with the mean of the adjacent 10 s. The filter runs
/// on deviations from the leading mean so a constant input is reproduced to
/// rounding.
pub fn dc_baseline(x: &[f64], fs: f64) -> Result<Vec<f64>, DspError> {
    dc_baseline_with(x, fs, &DcConfig::default())
}

pub fn dc_baseline_with(x: &[f64], fs: f64, cfg: &DcConfig) -> Result<Vec<f64>, DspError> {
    let spec = FilterSpec::low_pass(cfg.cutoff_hz, cfg.order);
    let sections = spec.design(fs)?;
    let required = (DC_MIN_DURATION_S * fs).ceil() as usize;
    if x.len() < required {
        return Err(DspError::SignalTooShort { len: x.len(), required });
    }
    let n = x.len();
    let edge = ((DC_EDGE_MEAN_S * fs).round() as usize).clamp(1, n);
    let head = mean(&x[..edge]);
    let tail = mean(&x[n - edge..]);
    let pad = (cfg.pad_s * fs).ceil() as usize;
    let mut buf = Vec::with_capacity(n + 2 * pad);
    buf.extend(std::iter::repeat_n(0.0, pad));
    buf.extend(x.iter().map(|v| v - head));
    buf.extend(std::iter::repeat_n(tail - head, pad));
    forward_backward(&sections, &mut buf);
    Ok(buf[pad..pad + n].iter().map(|v| v + head).collect())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// True when `t` lies within 1% of a sample period of the grid `t0 + i/fs`.
pub fn is_uniform(t: &[f64], fs: f64) -> bool {
    let period = 1.0 / fs;
    let t0 = t.first().copied().unwrap_or(0.0);
    t.iter()
        .enumerate()
        .all(|(i, &ti)| (ti - t0 - i as f64 * period).abs() <= 0.01 * period)
}

/// Piecewise-linear interpolation of `(xs, ys)` at sorted query points,
/// holding the end values outside the knot range.
pub fn interp_sorted(xs: &[f64], ys: &[f64], query: &[f64]) -> Vec<f64> {
    debug_assert_eq!(xs.len(), ys.len());
    let mut out = Vec::with_capacity(query.len());
    let last = xs.len() - 1;
    let mut j = 0;
    for &q in query {
        if q <= xs[0] {
            out.push(ys[0]);
            continue;
        }
        if q >= xs[last] {
            out.push(ys[last]);
            continue;
        }
        while xs[j + 1] < q {
            j += 1;
        }
        let w = (q - xs[j]) / (xs[j + 1] - xs[j]);
        out.push(ys[j] + w * (ys[j + 1] - ys[j]));
    }
    out
}

fn uniform_grid(t: &[f64], fs: f64) -> Vec<f64> {
    let t0 = t[0];
    let n = ((t[t.len() - 1] - t0) * fs).floor() as usize + 1;
    (0..n).map(|i| t0 + i as f64 / fs).collect()
}

/// Runs `f` on a uniform resampling of `(t, x)` at `fs` and maps the result
/// back onto `t`. Uniform inputs are passed through untouched.
fn on_timebase<F>(x: &[f64], t: &[f64], fs: f64, f: F) -> Result<Vec<f64>, DspError>
where
    F: FnOnce(&[f64]) -> Result<Vec<f64>, DspError>,
{
    if x.len() != t.len() {
        return Err(DspError::LengthMismatch(x.len(), t.len()));
    }
    if t.len() < 2 || is_uniform(t, fs) {
        return f(x);
    }
    let grid = uniform_grid(t, fs);
    let resampled = interp_sorted(t, x, &grid);
    let y = f(&resampled)?;
    Ok(interp_sorted(&grid, &y, t))
}

/// [`filter_zero_phase`] for possibly irregular timestamps.
pub fn filter_on_timebase(x: &[f64], t: &[f64], fs: f64, spec: &FilterSpec) -> Result<Vec<f64>, DspError> {
    on_timebase(x, t, fs, |u| filter_zero_phase(u, fs, spec))
}

/// [`dc_baseline_with`] for possibly irregular timestamps.
pub fn dc_baseline_on_timebase(x: &[f64], t: &[f64], fs: f64, cfg: &DcConfig) -> Result<Vec<f64>, DspError> {
    on_timebase(x, t, fs, |u| dc_baseline_with(u, fs, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakConfig {
    /// Plausible heart-rate range in beats per minute.
    pub hr_range_bpm: [f64; 2],
    /// Prominence gate as a fraction of the median beat amplitude.
    pub prominence_fraction: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self {
            hr_range_bpm: [40.0, 200.0],
            prominence_fraction: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PeakTrain {
    pub peak_times: Vec<f64>,
    pub peak_values: Vec<f64>,
    pub trough_times: Vec<f64>,
    pub trough_values: Vec<f64>,
}

impl PeakTrain {
    /// First and last beat instant (peak or trough).
    pub fn span(&self) -> Option<(f64, f64)> {
        let first = self.peak_times.first()?.min(*self.trough_times.first()?);
        let last = self.peak_times.last()?.max(*self.trough_times.last()?);
        Some((first, last))
    }
}

/// Peaks and troughs of a band-passed PPG signal.
pub fn detect_peaks_troughs(ac: &[f64], t: &[f64], cfg: &PeakConfig) -> Result<PeakTrain, DspError> {
    if ac.len() != t.len() {
        return Err(DspError::LengthMismatch(ac.len(), t.len()));
    }
    let peaks = find_peaks(ac, t, cfg);
    let neg: Vec<f64> = ac.iter().map(|v| -v).collect();
    let troughs = find_peaks(&neg, t, cfg);
    let (peaks, troughs) = alternate(ac, peaks, troughs);
    if peaks.len() < 3 || troughs.len() < 3 {
        return Err(DspError::NoBeatsFound {
            peaks: peaks.len(),
            troughs: troughs.len(),
        });
    }
    Ok(PeakTrain {
        peak_times: peaks.iter().map(|&i| t[i]).collect(),
        peak_values: peaks.iter().map(|&i| ac[i]).collect(),
        trough_times: troughs.iter().map(|&i| t[i]).collect(),
        trough_values: troughs.iter().map(|&i| ac[i]).collect(),
    })
}

/// Local maxima of `x`; plateaus report their leftmost sample.
fn local_maxima(x: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let n = x.len();
    let mut i = 1;
    while i + 1 < n {
        if x[i] > x[i - 1] {
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Topographic prominence of each maximum, searching at most `wlen_s`
/// seconds to either side.
fn prominences(x: &[f64], t: &[f64], maxima: &[usize], wlen_s: f64) -> Vec<f64> {
    maxima
        .iter()
        .map(|&p| {
            let h = x[p];
            let mut left_min = h;
            let mut i = p;
            while i > 0 && t[p] - t[i - 1] <= wlen_s {
                i -= 1;
                if x[i] > h {
                    break;
                }
                left_min = left_min.min(x[i]);
            }
            let mut right_min = h;
            let mut j = p;
            while j + 1 < x.len() && t[j + 1] - t[p] <= wlen_s {
                j += 1;
                if x[j] > h {
                    break;
                }
                right_min = right_min.min(x[j]);
            }
            h - left_min.max(right_min)
        })
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Keeps candidates in order of prominence, rejecting any within
/// `min_sep_s` of an already accepted one.
fn enforce_separation(t: &[f64], cand: &[(usize, f64)], min_sep_s: f64) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..cand.len()).collect();
    order.sort_by(|&a, &b| cand[b].1.total_cmp(&cand[a].1).then(cand[a].0.cmp(&cand[b].0)));
    let mut accepted: Vec<(usize, f64)> = Vec::new();
    for k in order {
        let (idx, prom) = cand[k];
        // accepted stays sorted by index, so only the neighbours need checking
        let pos = accepted.partition_point(|&(i, _)| i < idx);
        let clash_left = pos > 0 && t[idx] - t[accepted[pos - 1].0] < min_sep_s;
        let clash_right = pos < accepted.len() && t[accepted[pos].0] - t[idx] < min_sep_s;
        if !clash_left && !clash_right {
            accepted.insert(pos, (idx, prom));
        }
    }
    accepted
}

fn find_peaks(x: &[f64], t: &[f64], cfg: &PeakConfig) -> Vec<usize> {
    let [bpm_min, bpm_max] = cfg.hr_range_bpm;
    let maxima = local_maxima(x);
    if maxima.is_empty() {
        return Vec::new();
    }
    let wlen = 60.0 / bpm_min;
    let min_sep = 60.0 / bpm_max;
    let prom = prominences(x, t, &maxima, wlen);
    let cand: Vec<(usize, f64)> = maxima.into_iter().zip(prom).filter(|&(_, p)| p > 0.0).collect();
    if cand.is_empty() {
        return Vec::new();
    }

    // Pass 1: the slowest plausible rhythm guarantees at least this many beats,
    // so the median of that many largest prominences is a beat amplitude even
    // when noise maxima outnumber beats.
    let duration = t[t.len() - 1] - t[0];
    let expected = ((duration * bpm_min / 60.0).floor() as usize).max(3);
    let mut sorted: Vec<f64> = cand.iter().map(|c| c.1).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let top = expected.min(sorted.len());
    let coarse = median(&mut sorted[..top]);
    let gate = |reference: f64| -> Vec<(usize, f64)> {
        let kept: Vec<(usize, f64)> = cand
            .iter()
            .copied()
            .filter(|&(_, p)| p >= cfg.prominence_fraction * reference)
            .collect();
        enforce_separation(t, &kept, min_sep)
    };
    let first = gate(coarse);
    if first.is_empty() {
        return Vec::new();
    }

    // Pass 2: re-gate against the median amplitude of the accepted beats.
    let mut amps: Vec<f64> = first.iter().map(|c| c.1).collect();
    let beat_amplitude = median(&mut amps);
    gate(beat_amplitude).into_iter().map(|(i, _)| i).collect()
}

/// Merges peaks and troughs so that they strictly alternate in time, keeping
/// the more extreme of any two consecutive same-kind extrema.
fn alternate(x: &[f64], peaks: Vec<usize>, troughs: Vec<usize>) -> (Vec<usize>, Vec<usize>) {
    let mut merged: Vec<(usize, bool)> = peaks
        .into_iter()
        .map(|i| (i, true))
        .chain(troughs.into_iter().map(|i| (i, false)))
        .collect();
    merged.sort_unstable();
    let mut out: Vec<(usize, bool)> = Vec::with_capacity(merged.len());
    for (i, is_peak) in merged {
        match out.last_mut() {
            Some(last) if last.1 == is_peak => {
                let better = if is_peak { x[i] > x[last.0] } else { x[i] < x[last.0] };
                if better {
                    last.0 = i;
                }
            }
            Some(last) if last.0 == i => {}
            _ => out.push((i, is_peak)),
        }
    }
    let peaks = out.iter().filter(|e| e.1).map(|e| e.0).collect();
    let troughs = out.iter().filter(|e| !e.1).map(|e| e.0).collect();
    (peaks, troughs)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvelopePair {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

/// Linear interpolation of peak and trough values over `t`, held constant
/// outside the first/last beat.
pub fn interpolate_envelopes(pt: &PeakTrain, t: &[f64]) -> Result<EnvelopePair, DspError> {
    if pt.peak_times.len() < 3 || pt.trough_times.len() < 3 {
        return Err(DspError::TooFewBeats {
            peaks: pt.peak_times.len(),
            troughs: pt.trough_times.len(),
        });
    }
    Ok(EnvelopePair {
        upper: interp_sorted(&pt.peak_times, &pt.peak_values, t),
        lower: interp_sorted(&pt.trough_times, &pt.trough_values, t),
    })
}

/// Per-sample AC amplitude: `|upper| + |lower|`.
pub fn ac_amplitude(env: &EnvelopePair) -> Vec<f64> {
    env.upper
        .iter()
        .zip(&env.lower)
        .map(|(u, l)| u.abs() + l.abs())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(fs: f64, duration: f64) -> Vec<f64> {
        (0..(duration * fs).round() as usize).map(|i| i as f64 / fs).collect()
    }

    fn sine(t: &[f64], f: f64) -> Vec<f64> {
        t.iter().map(|&t| (2.0 * PI * f * t).sin()).collect()
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(FilterSpec::band_pass(1.0, 30.0, 3).validate(100.0).is_err());
        assert!(FilterSpec::band_pass(1.0, 60.0, 4).validate(100.0).is_err());
        assert!(FilterSpec::band_pass(30.0, 1.0, 4).validate(100.0).is_err());
        assert!(FilterSpec::low_pass(0.0, 2).validate(100.0).is_err());
        assert!(FilterSpec::band_pass(1.0, 30.0, 4).validate(100.0).is_ok());
    }

    #[test]
    fn section_gains() {
        let bp = FilterSpec::band_pass(1.0, 30.0, 4).design(100.0).unwrap();
        assert_eq!(bp.len(), 4);
        let lp = FilterSpec::low_pass(0.01, 2).design(100.0).unwrap();
        assert_eq!(lp.len(), 1);
        assert!((lp[0].dc_gain() - 1.0).abs() < 1e-12);
        // Butterworth corners sit at -3 dB per pass.
        let hp_only = FilterSpec::band_pass(1.0, 30.0, 4);
        let m = hp_only.magnitude(1.0, 100.0).unwrap();
        assert!((m - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.01, "{m}");
    }

    #[test]
    fn too_short_is_rejected() {
        let x = vec![0.0; 500];
        assert!(matches!(
            filter_zero_phase(&x, 100.0, &FilterSpec::band_pass(1.0, 30.0, 4)),
            Err(DspError::SignalTooShort { .. })
        ));
        assert!(matches!(dc_baseline(&vec![1.0; 5000], 100.0), Err(DspError::SignalTooShort { .. })));
    }

    #[test]
    fn constant_is_rejected_by_band_pass() {
        let c = 50_000.0;
        let y = filter_zero_phase(&vec![c; 3000], 100.0, &FilterSpec::band_pass(1.0, 30.0, 4)).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-6 * c));
    }

    #[test]
    fn constant_is_kept_by_dc_baseline() {
        let y = dc_baseline(&vec![50_000.0; 12_000], 100.0).unwrap();
        assert!(y.iter().all(|v| ((v - 50_000.0) / 50_000.0).abs() < 1e-9));
    }

    #[test]
    fn dc_baseline_ignores_one_hertz() {
        let t = grid(100.0, 120.0);
        let x: Vec<f64> = sine(&t, 1.0).iter().map(|v| 5000.0 + 200.0 * v).collect();
        let y = dc_baseline(&x, 100.0).unwrap();
        assert!(y.iter().all(|v| (v - 5000.0).abs() < 50.0));
    }

    #[test]
    fn dc_baseline_tracks_slow_ramp() {
        // 100 counts per minute; measure lag at the half-amplitude crossing.
        let t = grid(100.0, 600.0);
        let x: Vec<f64> = t.iter().map(|&t| 20_000.0 + 100.0 * t / 60.0).collect();
        let y = dc_baseline(&x, 100.0).unwrap();
        let half = 20_000.0 + 100.0 * 300.0 / 60.0;
        let cross = |s: &[f64]| t[s.iter().position(|&v| v >= half).unwrap()];
        let lag = (cross(&y) - cross(&x)).abs();
        assert!(lag < 120.0, "lag {lag}");
    }

    #[test]
    fn irregular_timebase_matches_uniform() {
        let fs = 100.0;
        let t_uniform = grid(fs, 20.0);
        let spec = FilterSpec::band_pass(1.0, 30.0, 4);
        let x = sine(&t_uniform, 2.0);
        let y_uniform = filter_on_timebase(&x, &t_uniform, fs, &spec).unwrap();
        assert_eq!(y_uniform, filter_zero_phase(&x, fs, &spec).unwrap());
        // Drop every 7th sample: the filter must resample internally.
        let t_irr: Vec<f64> = t_uniform.iter().copied().enumerate().filter(|(i, _)| i % 7 != 3).map(|(_, t)| t).collect();
        let x_irr = sine(&t_irr, 2.0);
        let y_irr = filter_on_timebase(&x_irr, &t_irr, fs, &spec).unwrap();
        let reference = interp_sorted(&t_uniform, &y_uniform, &t_irr);
        let n = t_irr.len();
        for i in n / 4..3 * n / 4 {
            assert!((y_irr[i] - reference[i]).abs() < 0.02);
        }
    }

    #[test]
    fn plateaus_report_leftmost_sample() {
        assert_eq!(local_maxima(&[0.0, 1.0, 1.0, 1.0, 0.0, 2.0, 0.0]), vec![1, 5]);
        assert!(local_maxima(&[0.0, 1.0, 1.0]).is_empty());
        assert!(local_maxima(&[0.0; 10]).is_empty());
    }

    #[test]
    fn sine_peak_and_trough_counts() {
        let t = grid(100.0, 60.0);
        let pt = detect_peaks_troughs(&sine(&t, 1.2), &t, &PeakConfig::default()).unwrap();
        assert!((pt.peak_times.len() as i64 - 72).abs() <= 1);
        assert!((pt.trough_times.len() as i64 - 72).abs() <= 1);
    }

    #[test]
    fn flat_signal_has_no_beats() {
        let t = grid(100.0, 20.0);
        assert!(matches!(
            detect_peaks_troughs(&vec![0.0; t.len()], &t, &PeakConfig::default()),
            Err(DspError::NoBeatsFound { .. })
        ));
    }

    #[test]
    fn envelopes_of_constant_extrema() {
        let pt = PeakTrain {
            peak_times: vec![1.0, 2.0, 3.0],
            peak_values: vec![2.5; 3],
            trough_times: vec![1.5, 2.5, 3.5],
            trough_values: vec![-1.5; 3],
        };
        let t = grid(10.0, 5.0);
        let env = interpolate_envelopes(&pt, &t).unwrap();
        assert!(env.upper.iter().all(|&v| v == 2.5));
        assert!(env.lower.iter().all(|&v| v == -1.5));
        assert!(ac_amplitude(&env).iter().all(|&v| v == 4.0));
    }

    #[test]
    fn envelope_linear_midpoint() {
        let pt = PeakTrain {
            peak_times: vec![1.0, 2.0, 3.0, 4.0],
            peak_values: vec![1.0, 2.0, 1.0, 2.0],
            trough_times: vec![1.5, 2.5, 3.5],
            trough_values: vec![-1.0; 3],
        };
        let env = interpolate_envelopes(&pt, &[0.0, 1.5, 2.5, 5.0]).unwrap();
        assert_eq!(env.upper, vec![1.0, 1.5, 1.5, 2.0]);
    }

    #[test]
    fn too_few_beats_for_envelopes() {
        let pt = PeakTrain {
            peak_times: vec![1.0, 2.0],
            peak_values: vec![1.0, 1.0],
            trough_times: vec![1.5, 2.5, 3.5],
            trough_values: vec![-1.0; 3],
        };
        assert!(matches!(interpolate_envelopes(&pt, &[0.0]), Err(DspError::TooFewBeats { .. })));
    }

    #[test]
    fn amplitude_of_unit_envelopes() {
        let env = EnvelopePair {
            upper: vec![1.0; 4],
            lower: vec![-1.0; 4],
        };
        assert_eq!(ac_amplitude(&env), vec![2.0; 4]);
        let env = EnvelopePair {
            upper: vec![3.0; 2],
            lower: vec![-2.0; 2],
        };
        assert_eq!(ac_amplitude(&env), vec![5.0; 2]);
    }
}
