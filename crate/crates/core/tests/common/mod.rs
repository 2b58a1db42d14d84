#![allow(dead_code)]

use earoxi_core::ingest::{PpgRecording, Site, SubjectMeta};
use earoxi_core::oximetry::{Quality, SpO2Series};
use earoxi_core::synth::{generate_recording, GroundTruth, SynthSpec, FINGER_EAR_AMPLITUDE_RATIO};

/// Finger-site spec at a resting SpO₂ with noise given as a fraction of the
/// infrared AC amplitude.
pub fn spec(baseline_pct: f64, delay_s: f64, noise_frac: f64, seed: u64) -> SynthSpec {
    let mut s = SynthSpec {
        site_delay_s: delay_s,
        seed,
        ..SynthSpec::default()
    };
    s.desaturation.baseline_pct = baseline_pct;
    s.noise_sigma = noise_frac * s.dc_ir * s.perfusion_ir;
    s
}

/// The same spec with ear-canal perfusion; noise stays relative to the ear's AC.
pub fn ear_spec(baseline_pct: f64, delay_s: f64, noise_frac: f64, seed: u64) -> SynthSpec {
    let mut s = spec(baseline_pct, delay_s, noise_frac, seed);
    s.perfusion_ir /= FINGER_EAR_AMPLITUDE_RATIO;
    s.noise_sigma = noise_frac * s.dc_ir * s.perfusion_ir;
    s
}

pub fn generate(spec: &SynthSpec, site: Site) -> (PpgRecording, GroundTruth) {
    generate_recording(spec, site, SubjectMeta::anonymous("T01")).expect("valid spec")
}

/// Mean of the clamped SpO₂ over OK samples in `[start, end]`.
pub fn window_mean(s: &SpO2Series, start: f64, end: f64) -> f64 {
    let idx: Vec<usize> = s.window(start, end).filter(|&i| s.quality[i] == Quality::Ok).collect();
    assert!(!idx.is_empty(), "no OK samples in [{start}, {end}]");
    idx.iter().map(|&i| s.spo2[i]).sum::<f64>() / idx.len() as f64
}

/// Raised-cosine beat train sampled at `fs`.
pub fn beat_train(bpm: f64, duration_s: f64, fs: f64, amplitude: f64) -> (Vec<f64>, Vec<f64>) {
    let n = (duration_s * fs).round() as usize;
    let t: Vec<f64> = (0..n).map(|i| i as f64 / fs).collect();
    let x = t
        .iter()
        .map(|&ti| amplitude * 0.5 * (1.0 - (2.0 * std::f64::consts::PI * bpm / 60.0 * ti).cos()))
        .collect();
    (t, x)
}

/// Analytic gain of the forward-backward Butterworth band-pass at `f`:
/// the squared product of high-pass and low-pass magnitudes with bilinear
/// frequency warping.
pub fn bandpass_gain(f: f64, low: f64, high: f64, order: i32, fs: f64) -> f64 {
    let w = |x: f64| (std::f64::consts::PI * x / fs).tan();
    let hp = 1.0 / (1.0 + (w(low) / w(f)).powi(2 * order)).sqrt();
    let lp = 1.0 / (1.0 + (w(f) / w(high)).powi(2 * order)).sqrt();
    (hp * lp).powi(2)
}

/// Lag in samples maximising the cross-correlation of `y` against `x`.
pub fn xcorr_argmax(x: &[f64], y: &[f64], max_lag: isize) -> isize {
    let n = x.len() as isize;
    (-max_lag..=max_lag)
        .map(|lag| {
            let c: f64 = (0..n)
                .filter(|&i| i + lag >= 0 && i + lag < n)
                .map(|i| x[i as usize] * y[(i + lag) as usize])
                .sum();
            (lag, c)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty lag range")
        .0
}
