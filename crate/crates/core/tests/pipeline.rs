//! End-to-end checks of the analysis pipeline against synthetic ground truth.

mod common;

use common::*;
use earoxi_core::ingest::Site;
use earoxi_core::oximetry::{compute_spo2_series, Quality};
use earoxi_core::protocol::{find_desaturation_trough, segment_breath_holds};
use earoxi_core::report::{analyze_subject, build_cohort_report};
use earoxi_core::synth::CohortSpec;
use earoxi_core::{ingest, PipelineConfig};

#[test]
fn constant_saturation_noise_free() {
    let cfg = PipelineConfig::default();
    let (rec, _) = generate(&spec(97.0, 0.0, 0.0, 1), Site::Finger);
    let s = compute_spo2_series(&rec, &cfg).unwrap();
    let m = window_mean(&s, 30.0, 115.0);
    assert!((m - 97.0).abs() <= 0.1, "{m}");
}

#[test]
fn resting_mean_with_noise() {
    let cfg = PipelineConfig::default();
    for seed in 1..4 {
        let (rec, _) = generate(&spec(96.5, 0.0, 0.005, seed), Site::Finger);
        let s = compute_spo2_series(&rec, &cfg).unwrap();
        let m = window_mean(&s, 60.0, 120.0);
        assert!((m - 96.5).abs() <= 0.3, "seed {seed}: {m}");
    }
}

#[test]
fn step_crosses_threshold_once() {
    let cfg = PipelineConfig::default();
    let mut sp = spec(98.0, 0.0, 0.0, 3);
    sp.noise_sigma = 2.0;
    sp.spo2_profile = vec![[0.0, 98.0], [200.0, 98.0], [200.5, 88.0], [435.0, 88.0]];
    let (rec, _) = generate(&sp, Site::Finger);
    let s = compute_spo2_series(&rec, &cfg).unwrap();
    let ok: Vec<f64> = (0..s.len()).filter(|&i| s.quality[i] == Quality::Ok).map(|i| s.spo2[i]).collect();
    let crossings = ok.windows(2).filter(|w| (w[0] >= 93.0) != (w[1] >= 93.0)).count();
    assert_eq!(crossings, 1);
}

#[test]
fn short_recording_is_unusable() {
    let cfg = PipelineConfig::default();
    let mut sp = spec(97.0, 0.0, 0.0, 1);
    sp.duration_s = 8.0;
    sp.protocol.repeats = 0;
    sp.protocol.lead_in_s = 8.0;
    sp.protocol.tail_s = 0.0;
    let (rec, _) = generate(&sp, Site::Finger);
    let err = compute_spo2_series(&rec, &cfg).unwrap_err();
    assert!(err.to_string().contains("unusable"), "{err}");
}

#[test]
fn absolute_delays_recovered() {
    let cfg = PipelineConfig::default();
    for (delay, seed) in [(4.0, 11), (16.4, 12)] {
        let (rec, truth) = generate(&spec(97.0, delay, 0.005, seed), Site::Finger);
        let s = compute_spo2_series(&rec, &cfg).unwrap();
        let markers = ingest::extract_button_intervals(&rec, cfg.debounce);
        let segs = segment_breath_holds(&markers, &cfg.segments).segments;
        assert_eq!(segs.len(), 3);
        let delays: Vec<f64> = segs
            .iter()
            .map(|g| find_desaturation_trough(&s, g, &cfg.trough).unwrap() - g.release_t)
            .collect();
        let mean = delays.iter().sum::<f64>() / 3.0;
        assert!((mean - delay).abs() <= 0.5, "delay {delay}: {delays:?}");
        for (d, t) in delays.iter().zip(&truth.true_delays) {
            assert!((d - t).abs() <= 1.0, "{delays:?} vs {:?}", truth.true_delays);
        }
    }
}

#[test]
fn relative_delay_with_zero_delay_site() {
    let cfg = PipelineConfig::default();
    let (ear, _) = generate(&ear_spec(97.0, 0.0, 0.0, 21), Site::EarCanal);
    let (finger, _) = generate(&spec(97.0, 12.4, 0.0, 22), Site::Finger);
    let r = analyze_subject(&ear, &finger, &cfg).unwrap();
    let d = r.delays.expect("delays measured");
    assert!((d.mean_relative_s - 12.4).abs() <= 0.5, "{d:?}");
    assert_eq!(d.mean_relative_s, d.mean_finger_s - d.mean_ear_s);
}

#[test]
fn amplitude_tracks_programmed_ac() {
    let cfg = PipelineConfig::default();
    let sp = spec(97.0, 4.0, 0.0, 5);
    let (rec, truth) = generate(&sp, Site::Finger);
    let s = compute_spo2_series(&rec, &cfg).unwrap();
    let gain = bandpass_gain(sp.hr_bpm / 60.0, 1.0, 30.0, 4, sp.fs);
    for i in s.window(20.0, 415.0) {
        let r = (sp.calibration.intercept - truth.true_spo2[i]) / sp.calibration.slope;
        let ir = sp.dc_ir * sp.perfusion_ir * gain;
        let red = sp.dc_red * sp.perfusion_ir * r * gain;
        assert!((s.ir.ac[i] / ir - 1.0).abs() <= 0.05, "ir at {}: {} vs {ir}", s.t[i], s.ir.ac[i]);
        assert!((s.red.ac[i] / red - 1.0).abs() <= 0.05, "red at {}: {} vs {red}", s.t[i], s.red.ac[i]);
    }
}

#[test]
fn jittered_timestamps_still_analyse() {
    use rand::{Rng, SeedableRng};
    let cfg = PipelineConfig::default();
    let (rec, _) = generate(&spec(97.0, 0.0, 0.0, 9), Site::Finger);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let samples: Vec<_> = rec
        .samples()
        .iter()
        .map(|s| ingest::PpgSample {
            t: s.t + rng.random_range(-0.0001..0.0001),
            ..*s
        })
        .map(|mut s| {
            s.t = s.t.max(0.0);
            s
        })
        .collect();
    let jittered = ingest::PpgRecording::new(Site::Finger, rec.subject().clone(), samples).unwrap();
    assert!((jittered.fs() - 100.0).abs() <= 1.0);
    let s = compute_spo2_series(&jittered, &cfg).unwrap();
    let m = window_mean(&s, 30.0, 115.0);
    assert!((m - 97.0).abs() <= 0.3, "{m}");
}

#[test]
fn cohort_offset_recovered() {
    let cfg = PipelineConfig::default();
    let mut cohort = CohortSpec::default();
    cohort.base.noise_sigma = 0.0;
    cohort.subjects.truncate(4);
    for s in &mut cohort.subjects {
        s.ear_offset_pct = 0.23;
    }
    let reports: Vec<_> = cohort
        .expand()
        .unwrap()
        .iter()
        .map(|s| {
            let (ear, _) = earoxi_core::synth::generate_recording(&s.ear, Site::EarCanal, s.meta.clone()).unwrap();
            let (finger, _) = earoxi_core::synth::generate_recording(&s.finger, Site::Finger, s.meta.clone()).unwrap();
            analyze_subject(&ear, &finger, &cfg).unwrap()
        })
        .collect();
    let c = build_cohort_report(&reports, vec![], &cfg);
    let d = c.summary.mean_diff.expect("paired resting values");
    assert!((d - 0.23).abs() <= 0.05, "{d}");
    assert!(c.summary.rmsd.unwrap() >= d.abs());
}
