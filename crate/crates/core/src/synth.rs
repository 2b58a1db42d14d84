//! Synthetic dual-wavelength PPG with an embedded ground truth.
//!
//! The infrared channel carries a fixed perfusion fraction; the red channel's
//! perfusion is scaled by the R value that the calibration assigns to the
//! programmed SpO₂, so the ratio of ratios of the generated signal equals
//! `spo2_to_r(true_spo2)` by construction. The physiological SpO₂ trajectory
//! follows the breath-hold schedule and reaches each site after a
//! site-specific delay.
//!
//! The desaturation shape (linear drop during the hold, exponential recovery
//! after release) is a modelling placeholder, not measured kinetics.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dsp::interp_sorted;
use crate::ingest::{PpgRecording, PpgSample, Sex, Site, SubjectMeta};
use crate::oximetry::CalibrationCurve;

/// Finger-to-ear AC amplitude ratio used for default cohorts.
pub const FINGER_EAR_AMPLITUDE_RATIO: f64 = 2.35;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("SpO₂ {spo2}% is outside the calibration range (must be below {intercept}%)")]
    OutOfCalibrationRange { spo2: f64, intercept: f64 },
    #[error("cohort is empty")]
    EmptyCohort,
    #[error("duplicate subject id {0:?}")]
    DuplicateSubject(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Inverse calibration: the R that maps to `spo2`.
pub fn spo2_to_r(spo2: f64, cal: &CalibrationCurve) -> Result<f64, SynthError> {
    if !(spo2 <= cal.intercept) || !spo2.is_finite() {
        return Err(SynthError::OutOfCalibrationRange {
            spo2,
            intercept: cal.intercept,
        });
    }
    Ok((cal.intercept - spo2) / cal.slope)
}

/// Breath-hold protocol timing. Each repeat is an exhale followed by a hold
/// with the button held down throughout; repeats are separated by `rest_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolSchedule {
    pub lead_in_s: f64,
    pub exhale_s: f64,
    pub hold_s: f64,
    pub rest_s: f64,
    pub repeats: usize,
    pub tail_s: f64,
}

impl Default for ProtocolSchedule {
    fn default() -> Self {
        Self {
            lead_in_s: 120.0,
            exhale_s: 5.0,
            hold_s: 20.0,
            rest_s: 60.0,
            repeats: 3,
            tail_s: 120.0,
        }
    }
}

impl ProtocolSchedule {
    pub fn total_s(&self) -> f64 {
        let n = self.repeats as f64;
        self.lead_in_s + n * (self.exhale_s + self.hold_s) + (n - 1.0).max(0.0) * self.rest_s + self.tail_s
    }

    /// `(press, hold_start, release)` for each repeat.
    pub fn events(&self) -> Vec<(f64, f64, f64)> {
        (0..self.repeats)
            .map(|k| {
                let press = self.lead_in_s + k as f64 * (self.exhale_s + self.hold_s + self.rest_s);
                (press, press + self.exhale_s, press + self.exhale_s + self.hold_s)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesaturationModel {
    pub baseline_pct: f64,
    /// Drop accumulated linearly over the hold.
    pub drop_pct: f64,
    pub recovery_tau_s: f64,
}

impl Default for DesaturationModel {
    fn default() -> Self {
        Self {
            baseline_pct: 97.0,
            drop_pct: 4.0,
            recovery_tau_s: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub fs: f64,
    pub duration_s: f64,
    pub hr_bpm: f64,
    /// Amplitude of sinusoidal heart-rate variability, bpm.
    pub hr_variability_bpm: f64,
    pub hr_variability_hz: f64,
    pub dc_red: f64,
    pub dc_ir: f64,
    /// Infrared AC peak-to-trough as a fraction of DC.
    pub perfusion_ir: f64,
    /// Additive Gaussian noise on counts (standard deviation).
    pub noise_sigma: f64,
    /// Explicit `(t, %)` breakpoints of the physiological SpO₂; when empty
    /// the trajectory comes from `desaturation` and `protocol`.
    pub spo2_profile: Vec<[f64; 2]>,
    pub desaturation: DesaturationModel,
    pub site_delay_s: f64,
    pub protocol: ProtocolSchedule,
    /// Slow 0.05 Hz multiplicative wander of the DC level (fraction).
    pub baseline_wander: f64,
    pub calibration: CalibrationCurve,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            fs: 100.0,
            duration_s: 435.0,
            hr_bpm: 70.0,
            hr_variability_bpm: 0.0,
            hr_variability_hz: 0.1,
            dc_red: 50_000.0,
            dc_ir: 60_000.0,
            perfusion_ir: 0.02,
            noise_sigma: 2.0,
            spo2_profile: Vec::new(),
            desaturation: DesaturationModel::default(),
            site_delay_s: 0.0,
            protocol: ProtocolSchedule::default(),
            baseline_wander: 0.0,
            calibration: CalibrationCurve::default(),
            seed: 0,
        }
    }
}

const WANDER_HZ: f64 = 0.05;

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return bad(format!("fs {} must be positive", self.fs));
        }
        if !(self.hr_bpm > 0.0 && self.hr_variability_bpm >= 0.0 && self.hr_variability_bpm < self.hr_bpm) {
            return bad("heart rate must be positive and exceed its variability".into());
        }
        if !(self.dc_red > 0.0 && self.dc_ir > 0.0) {
            return bad("DC levels must be positive".into());
        }
        if !(self.perfusion_ir > 0.0 && self.perfusion_ir <= 0.2) {
            return bad(format!("perfusion_ir {} outside (0, 0.2]", self.perfusion_ir));
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative".into());
        }
        if !(self.site_delay_s >= 0.0) {
            return bad("site_delay_s must be non-negative".into());
        }
        if !(0.0..0.5).contains(&self.baseline_wander) {
            return bad("baseline_wander must lie in [0, 0.5)".into());
        }
        if self.duration_s < self.protocol.total_s() {
            return bad(format!(
                "duration {} s is shorter than the protocol ({} s)",
                self.duration_s,
                self.protocol.total_s()
            ));
        }
        self.calibration
            .validate()
            .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        let in_range = |v: f64| (60.0..=100.0).contains(&v);
        if self.spo2_profile.is_empty() {
            let d = &self.desaturation;
            if !(in_range(d.baseline_pct) && d.drop_pct >= 0.0 && in_range(d.baseline_pct - d.drop_pct)) {
                return bad("desaturation model leaves [60, 100] %".into());
            }
            if !(d.recovery_tau_s > 0.0) {
                return bad("recovery_tau_s must be positive".into());
            }
        } else {
            if self.spo2_profile.iter().any(|p| !in_range(p[1])) {
                return bad("spo2_profile values must lie in [60, 100] %".into());
            }
            if self.spo2_profile.windows(2).any(|w| w[1][0] <= w[0][0]) {
                return bad("spo2_profile times must be strictly increasing".into());
            }
        }
        let worst = self.worst_case_perfusion_red();
        if worst > 0.5 {
            return bad(format!("red perfusion reaches {worst:.3}; lower perfusion_ir"));
        }
        Ok(())
    }

    fn worst_case_perfusion_red(&self) -> f64 {
        let min_spo2 = if self.spo2_profile.is_empty() {
            self.desaturation.baseline_pct - self.desaturation.drop_pct
        } else {
            self.spo2_profile.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min)
        };
        self.perfusion_ir * (self.calibration.intercept - min_spo2) / self.calibration.slope
    }

    /// Physiological (undelayed) SpO₂ at time `t`.
    pub fn physiological_spo2(&self, t: f64) -> f64 {
        if !self.spo2_profile.is_empty() {
            let xs: Vec<f64> = self.spo2_profile.iter().map(|p| p[0]).collect();
            let ys: Vec<f64> = self.spo2_profile.iter().map(|p| p[1]).collect();
            return interp_sorted(&xs, &ys, &[t])[0];
        }
        let d = &self.desaturation;
        let hold = self.protocol.hold_s;
        let deficit: f64 = self
            .protocol
            .events()
            .iter()
            .map(|&(_, hold_start, _)| {
                let u = t - hold_start;
                if u < 0.0 {
                    0.0
                } else if u < hold {
                    d.drop_pct * u / hold
                } else {
                    d.drop_pct * (-(u - hold) / d.recovery_tau_s).exp()
                }
            })
            .sum();
        d.baseline_pct - deficit
    }

    /// SpO₂ seen at this site: the physiological trace delayed by `site_delay_s`.
    pub fn site_spo2(&self, t: f64) -> f64 {
        self.physiological_spo2(t - self.site_delay_s)
    }

    /// Cumulative beat phase (beats) at time `t`.
    fn phase(&self, t: f64) -> f64 {
        let base = self.hr_bpm / 60.0 * t;
        if self.hr_variability_bpm == 0.0 {
            return base;
        }
        let w = 2.0 * PI * self.hr_variability_hz;
        base + self.hr_variability_bpm / 60.0 * (1.0 - (w * t).cos()) / w
    }

    /// Pulse maxima: instants where the phase is `k + 0.5`.
    fn beat_times(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0.5;
        while k <= self.phase(self.duration_s) {
            // phase is strictly increasing; bisect
            let (mut lo, mut hi) = (0.0, self.duration_s);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if self.phase(mid) < k {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
            k += 1.0;
        }
        out
    }

    /// Programmed trough instants at this site, one per hold.
    pub fn true_trough_times(&self) -> Vec<f64> {
        let events = self.protocol.events();
        if self.spo2_profile.is_empty() {
            return events.iter().map(|&(_, _, release)| release + self.site_delay_s).collect();
        }
        // explicit profile: minimum breakpoint between this press and the next
        events
            .iter()
            .enumerate()
            .map(|(k, &(press, _, _))| {
                let end = events.get(k + 1).map_or(f64::INFINITY, |e| e.0);
                let argmin = self
                    .spo2_profile
                    .iter()
                    .filter(|p| p[0] >= press && p[0] < end)
                    .min_by(|a, b| a[1].total_cmp(&b[1]))
                    .map_or(press, |p| p[0]);
                argmin + self.site_delay_s
            })
            .collect()
    }
}

/// Programmed values embedded in a synthetic recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub true_spo2: Vec<f64>,
    pub press_times: Vec<f64>,
    pub release_times: Vec<f64>,
    pub true_trough_times: Vec<f64>,
    pub true_delays: Vec<f64>,
    pub button: Vec<bool>,
    pub beat_times: Vec<f64>,
}

/// Generates one site's recording and its ground truth.
pub fn generate_recording(spec: &SynthSpec, site: Site, subject: SubjectMeta) -> Result<(PpgRecording, GroundTruth), SynthError> {
    spec.validate()?;
    let n = (spec.duration_s * spec.fs).round() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let events = spec.protocol.events();
    let cal = &spec.calibration;

    let mut samples = Vec::with_capacity(n);
    let mut true_spo2 = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / spec.fs;
        let spo2 = spec.site_spo2(t);
        let r = spo2_to_r(spo2, cal)?;
        let pulse = 0.5 * (1.0 - (2.0 * PI * spec.phase(t)).cos());
        let wander = 1.0 + spec.baseline_wander * (2.0 * PI * WANDER_HZ * t).sin();
        let (dc_red, dc_ir) = (spec.dc_red * wander, spec.dc_ir * wander);
        let mut red = dc_red + dc_red * spec.perfusion_ir * r * pulse;
        let mut infrared = dc_ir + dc_ir * spec.perfusion_ir * pulse;
        if spec.noise_sigma > 0.0 {
            red += noise.sample(&mut rng);
            infrared += noise.sample(&mut rng);
        }
        let button = events
            .iter()
            .any(|&(press, _, release)| t >= press - 1e-9 && t <= release + 1e-9);
        samples.push(PpgSample {
            t,
            red: red.max(0.0),
            infrared: infrared.max(0.0),
            green: None,
            button,
        });
        true_spo2.push(spo2);
    }
    let button = samples.iter().map(|s| s.button).collect();
    let rec = PpgRecording::new(site, subject, samples)
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?
        .with_declared_fs(spec.fs)
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;

    let release_times: Vec<f64> = events.iter().map(|e| e.2).collect();
    let true_trough_times = spec.true_trough_times();
    let true_delays = true_trough_times.iter().zip(&release_times).map(|(t, r)| t - r).collect();
    Ok((
        rec,
        GroundTruth {
            true_spo2,
            press_times: events.iter().map(|e| e.0).collect(),
            release_times,
            true_trough_times,
            true_delays,
            button,
            beat_times: spec.beat_times(),
        },
    ))
}

/// Ear and finger specs for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSynth {
    pub meta: SubjectMeta,
    pub ear: SynthSpec,
    pub finger: SynthSpec,
}

/// Per-subject entry of a cohort spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub meta: SubjectMeta,
    pub ear_delay_s: f64,
    pub finger_delay_s: f64,
    /// Added to the ear's resting SpO₂ relative to the finger.
    #[serde(default)]
    pub ear_offset_pct: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hr_bpm: Option<f64>,
}

/// Cohort description as read from a spec JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortSpec {
    pub seed: u64,
    /// Shared settings; `perfusion_ir` is the finger value.
    pub base: SynthSpec,
    pub finger_ear_amplitude_ratio: f64,
    pub subjects: Vec<SubjectEntry>,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            seed: 2021,
            base: SynthSpec::default(),
            finger_ear_amplitude_ratio: FINGER_EAR_AMPLITUDE_RATIO,
            subjects: default_subjects(),
        }
    }
}

/// Fourteen subjects, 7 female and 7 male, aged 19–38, with relative delays
/// spanning roughly 4–24 s and a longer mean finger delay for the male group.
fn default_subjects() -> Vec<SubjectEntry> {
    let rows: [(&str, Sex, f64, f64, f64); 14] = [
        ("S01", Sex::F, 21.0, 4.3, 8.5),
        ("S02", Sex::F, 24.0, 3.9, 12.1),
        ("S03", Sex::F, 27.0, 4.6, 16.8),
        ("S04", Sex::F, 19.0, 4.1, 13.0),
        ("S05", Sex::F, 33.0, 4.5, 15.4),
        ("S06", Sex::F, 29.0, 4.2, 18.9),
        ("S07", Sex::F, 25.0, 4.7, 13.3),
        ("S08", Sex::M, 22.0, 4.4, 28.6),
        ("S09", Sex::M, 26.0, 4.0, 16.2),
        ("S10", Sex::M, 31.0, 4.6, 19.5),
        ("S11", Sex::M, 38.0, 4.3, 17.4),
        ("S12", Sex::M, 23.0, 4.5, 14.8),
        ("S13", Sex::M, 28.0, 4.2, 21.9),
        ("S14", Sex::M, 35.0, 4.5, 18.1),
    ];
    rows.iter()
        .enumerate()
        .map(|(i, &(id, sex, age, ear, finger))| SubjectEntry {
            meta: SubjectMeta {
                id: id.into(),
                sex,
                age: Some(age),
            },
            ear_delay_s: ear,
            finger_delay_s: finger,
            ear_offset_pct: 0.0,
            baseline_pct: Some(95.5 + 0.25 * (i % 7) as f64),
            hr_bpm: Some(62.0 + 2.0 * i as f64),
        })
        .collect()
}

/// Stable per-recording seed derived from the cohort seed, subject and site.
pub fn derive_seed(seed: u64, id: &str, site: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    h.update([0]);
    h.update(site.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

impl CohortSpec {
    pub fn expand(&self) -> Result<Vec<SubjectSynth>, SynthError> {
        if !(self.finger_ear_amplitude_ratio > 0.0) {
            return Err(SynthError::InvalidSpec("finger_ear_amplitude_ratio must be positive".into()));
        }
        self.subjects
            .iter()
            .map(|s| {
                s.meta.validate().map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
                let mut finger = self.base.clone();
                if let Some(b) = s.baseline_pct {
                    finger.desaturation.baseline_pct = b;
                }
                if let Some(hr) = s.hr_bpm {
                    finger.hr_bpm = hr;
                }
                let mut ear = finger.clone();
                finger.site_delay_s = s.finger_delay_s;
                finger.seed = derive_seed(self.seed, &s.meta.id, "finger");
                ear.site_delay_s = s.ear_delay_s;
                ear.perfusion_ir = finger.perfusion_ir / self.finger_ear_amplitude_ratio;
                ear.desaturation.baseline_pct += s.ear_offset_pct;
                ear.seed = derive_seed(self.seed, &s.meta.id, "ear");
                ear.validate()?;
                finger.validate()?;
                Ok(SubjectSynth {
                    meta: s.meta.clone(),
                    ear,
                    finger,
                })
            })
            .collect()
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serialises");
        hex::encode(Sha256::digest(&json))
    }
}

/// Truth file contents for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub subject: SubjectMeta,
    pub desaturation_model: String,
    pub release_times: Vec<f64>,
    pub ear_delays: Vec<f64>,
    pub finger_delays: Vec<f64>,
    pub mean_relative_delay_s: f64,
    /// Physiological SpO₂ breakpoints `(t, %)` at 1 s resolution, before site delays.
    pub true_spo2_breakpoints: Vec<[f64; 2]>,
    pub ear_resting_spo2: f64,
    pub finger_resting_spo2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmittedSubject {
    pub id: String,
    pub ear_csv: String,
    pub finger_csv: String,
    pub meta_json: String,
    pub truth_json: String,
    pub ear_sha256: String,
    pub finger_sha256: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `bytes` to a sibling temporary file, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), SynthError> {
    let file_name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp: PathBuf = path.with_file_name(format!(".{file_name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn truth_for(subject: &SubjectSynth, ear: &GroundTruth, finger: &GroundTruth) -> SubjectTruth {
    let spec = &subject.finger;
    let n = spec.duration_s.floor() as usize;
    let breakpoints = (0..=n)
        .map(|s| [s as f64, spec.physiological_spo2(s as f64)])
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    SubjectTruth {
        subject: subject.meta.clone(),
        desaturation_model: if spec.spo2_profile.is_empty() {
            "synthetic placeholder: linear drop over the hold, exponential recovery after release".into()
        } else {
            "explicit piecewise-linear profile".into()
        },
        release_times: finger.release_times.clone(),
        ear_delays: ear.true_delays.clone(),
        finger_delays: finger.true_delays.clone(),
        mean_relative_delay_s: mean(&finger.true_delays) - mean(&ear.true_delays),
        true_spo2_breakpoints: breakpoints,
        ear_resting_spo2: subject.ear.physiological_spo2(0.0),
        finger_resting_spo2: subject.finger.physiological_spo2(0.0),
    }
}

/// Writes `<id>_ear.csv`, `<id>_finger.csv`, `<id>_meta.json` and
/// `<id>_truth.json` per subject into `dir`.
pub fn emit_cohort(subjects: &[SubjectSynth], dir: &Path) -> Result<Vec<EmittedSubject>, SynthError> {
    if subjects.is_empty() {
        return Err(SynthError::EmptyCohort);
    }
    let mut seen = std::collections::HashSet::new();
    for s in subjects {
        if !seen.insert(s.meta.id.as_str()) {
            return Err(SynthError::DuplicateSubject(s.meta.id.clone()));
        }
    }
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    subjects
        .iter()
        .map(|s| {
            let id = &s.meta.id;
            let (ear_rec, ear_truth) = generate_recording(&s.ear, Site::EarCanal, s.meta.clone())?;
            let (finger_rec, finger_truth) = generate_recording(&s.finger, Site::Finger, s.meta.clone())?;
            let ear_csv = ear_rec.to_csv();
            let finger_csv = finger_rec.to_csv();
            let names = [
                format!("{id}_ear.csv"),
                format!("{id}_finger.csv"),
                format!("{id}_meta.json"),
                format!("{id}_truth.json"),
            ];
            let truth = truth_for(s, &ear_truth, &finger_truth);
            let meta = serde_json::to_vec_pretty(&s.meta).expect("meta serialises");
            let truth = serde_json::to_vec_pretty(&truth).expect("truth serialises");
            write_atomic(&dir.join(&names[0]), ear_csv.as_bytes())?;
            write_atomic(&dir.join(&names[1]), finger_csv.as_bytes())?;
            write_atomic(&dir.join(&names[2]), &meta)?;
            write_atomic(&dir.join(&names[3]), &truth)?;
            let [ear_name, finger_name, meta_name, truth_name] = names;
            Ok(EmittedSubject {
                id: id.clone(),
                ear_csv: ear_name,
                finger_csv: finger_name,
                meta_json: meta_name,
                truth_json: truth_name,
                ear_sha256: hex::encode(Sha256::digest(ear_csv.as_bytes())),
                finger_sha256: hex::encode(Sha256::digest(finger_csv.as_bytes())),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_calibration_examples() {
        let cal = CalibrationCurve::default();
        assert_eq!(spo2_to_r(87.0, &cal).unwrap(), 1.0);
        assert_eq!(spo2_to_r(104.0, &cal).unwrap(), 0.0);
        assert!((spo2_to_r(96.0, &cal).unwrap() - 8.0 / 17.0).abs() < 1e-15);
        assert!(matches!(spo2_to_r(105.0, &cal), Err(SynthError::OutOfCalibrationRange { .. })));
    }

    #[test]
    fn default_schedule_is_435_s() {
        let p = ProtocolSchedule::default();
        assert_eq!(p.total_s(), 435.0);
        let releases: Vec<f64> = p.events().iter().map(|e| e.2).collect();
        assert_eq!(releases, vec![145.0, 230.0, 315.0]);
        let presses: Vec<f64> = p.events().iter().map(|e| e.0).collect();
        assert_eq!(presses, vec![120.0, 205.0, 290.0]);
    }

    #[test]
    fn short_duration_is_invalid() {
        let spec = SynthSpec {
            duration_s: 300.0,
            ..Default::default()
        };
        assert!(matches!(spec.validate(), Err(SynthError::InvalidSpec(_))));
    }

    #[test]
    fn invalid_perfusion_and_profile() {
        let mut spec = SynthSpec {
            perfusion_ir: 0.3,
            ..Default::default()
        };
        assert!(spec.validate().is_err());
        spec.perfusion_ir = 0.02;
        spec.spo2_profile = vec![[0.0, 97.0], [10.0, 50.0]];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn trajectory_minimum_sits_at_delayed_release() {
        let spec = SynthSpec {
            site_delay_s: 4.0,
            ..Default::default()
        };
        for &trough in &spec.true_trough_times() {
            let at = spec.site_spo2(trough);
            assert!(spec.site_spo2(trough - 0.01) > at);
            assert!(spec.site_spo2(trough + 0.01) > at);
        }
        assert_eq!(spec.true_trough_times(), vec![149.0, 234.0, 319.0]);
        assert_eq!(spec.site_spo2(0.0), 97.0);
    }

    #[test]
    fn construction_identity_at_beats() {
        let spec = SynthSpec {
            noise_sigma: 0.0,
            site_delay_s: 3.0,
            hr_variability_bpm: 5.0,
            ..Default::default()
        };
        let (rec, truth) = generate_recording(&spec, Site::Finger, SubjectMeta::anonymous("x")).unwrap();
        let cal = CalibrationCurve::default();
        for s in rec.samples().iter().step_by(37) {
            let pulse = 0.5 * (1.0 - (2.0 * PI * spec.phase(s.t)).cos());
            if pulse < 0.5 {
                continue;
            }
            let red = (s.red - spec.dc_red) / spec.dc_red;
            let ir = (s.infrared - spec.dc_ir) / spec.dc_ir;
            let expect = spo2_to_r(spec.site_spo2(s.t), &cal).unwrap();
            assert!((red / ir - expect).abs() < 1e-9);
        }
        // beat instants are pulse maxima
        for &b in truth.beat_times.iter().take(20) {
            let ph = spec.phase(b);
            assert!((ph - ph.floor() - 0.5).abs() < 1e-9);
        }
        assert_eq!(truth.true_delays, vec![3.0; 3]);
    }

    #[test]
    fn button_follows_schedule() {
        let spec = SynthSpec::default();
        let (rec, _) = generate_recording(&spec, Site::Finger, SubjectMeta::anonymous("x")).unwrap();
        let pressed = |t: f64| rec.samples()[(t * 100.0).round() as usize].button;
        assert!(!pressed(119.99));
        assert!(pressed(120.0));
        assert!(pressed(145.0));
        assert!(!pressed(145.01));
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = SynthSpec {
            seed: 42,
            ..Default::default()
        };
        let a = generate_recording(&spec, Site::Finger, SubjectMeta::anonymous("x")).unwrap().0.to_csv();
        let b = generate_recording(&spec, Site::Finger, SubjectMeta::anonymous("x")).unwrap().0.to_csv();
        assert_eq!(a, b);
        let other = SynthSpec { seed: 43, ..spec };
        let c = generate_recording(&other, Site::Finger, SubjectMeta::anonymous("x")).unwrap().0.to_csv();
        assert_ne!(a, c);
    }

    #[test]
    fn cohort_expansion_applies_amplitude_ratio() {
        let cohort = CohortSpec::default();
        let subjects = cohort.expand().unwrap();
        assert_eq!(subjects.len(), 14);
        for s in &subjects {
            assert!((s.finger.perfusion_ir / s.ear.perfusion_ir - 2.35).abs() < 1e-12);
            assert_ne!(s.ear.seed, s.finger.seed);
        }
        assert_eq!(cohort.hash(), CohortSpec::default().hash());
    }

    #[test]
    fn emit_rejects_empty_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(emit_cohort(&[], dir.path()), Err(SynthError::EmptyCohort)));
        let s = CohortSpec::default().expand().unwrap().remove(0);
        assert!(matches!(
            emit_cohort(&[s.clone(), s], dir.path()),
            Err(SynthError::DuplicateSubject(_))
        ));
    }
}
