//! Subject and cohort reports, plus the plot-data tables derived from them.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::ingest::{extract_button_intervals, validate_recording, PpgRecording, Sex, SubjectMeta, Violation};
use crate::oximetry::{compute_spo2_series, normalize_amplitudes, resting_metrics, RestingMetrics, SpO2Series};
use crate::protocol::{segment_breath_holds, subject_delay_report, BreathHoldSegment, DelayMeasurement, DelayReport};
use crate::stats::{self, CohortSummary, GroupMean, PairedSamples, TestMode};

/// Reference cohort values shown next to computed results. They annotate
/// reports only and never enter a computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValues {
    pub resting_rmsd_pct: f64,
    pub resting_mean_diff_pct: f64,
    pub mean_relative_delay_s: f64,
    pub relative_delay_range_s: [f64; 2],
    pub mean_ear_delay_s: f64,
    pub mean_finger_delay_s: f64,
    pub finger_ear_amplitude_ratio: f64,
    pub sex_difference_p: f64,
}

pub const REFERENCE: ReferenceValues = ReferenceValues {
    resting_rmsd_pct: 1.47,
    resting_mean_diff_pct: 0.23,
    mean_relative_delay_s: 12.4,
    relative_delay_range_s: [4.18, 24.2],
    mean_ear_delay_s: 4.35,
    mean_finger_delay_s: 16.75,
    finger_ear_amplitude_ratio: 2.35,
    sex_difference_p: 0.045,
};

const SMOOTHING_NOTE: &str = "SpO2 traces are smoothed with a centred moving average of smooth_s seconds before resting means and trough search; trough times are then refined by a two-segment linear fit to the unsmoothed trace";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSummary {
    pub fs: f64,
    pub duration_s: f64,
    pub peaks_red: usize,
    pub peaks_ir: usize,
    pub violations: Vec<Violation>,
    pub resting: Option<RestingMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectReport {
    pub subject: SubjectMeta,
    pub segments: Vec<BreathHoldSegment>,
    pub ear: SiteSummary,
    pub finger: SiteSummary,
    pub delays: Option<DelayReport>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    pub config: PipelineConfig,
}

/// Runs both sites through the pipeline and measures delays.
///
/// Button markers come from the ear recording, or from the finger recording
/// when the ear's button channel has no presses.
pub fn analyze_subject(ear: &PpgRecording, finger: &PpgRecording, cfg: &PipelineConfig) -> Result<SubjectReport> {
    cfg.validate()?;
    let ear_series = compute_spo2_series(ear, cfg)?;
    let finger_series = compute_spo2_series(finger, cfg)?;
    let mut warnings = Vec::new();

    let ear_markers = extract_button_intervals(ear, cfg.debounce);
    let finger_markers = extract_button_intervals(finger, cfg.debounce);
    let markers = if ear_markers.is_empty() {
        &finger_markers
    } else {
        &ear_markers
    };
    if !ear_markers.is_empty() && !finger_markers.is_empty() && ear_markers.len() != finger_markers.len() {
        warnings.push(format!(
            "button channels disagree: {} presses at the ear, {} at the finger",
            ear_markers.len(),
            finger_markers.len()
        ));
    }
    let segmentation = segment_breath_holds(markers, &cfg.segments);
    warnings.extend(segmentation.warnings.iter().map(ToString::to_string));
    let segments = segmentation.segments;

    let resting_window = segments
        .first()
        .map(|s| [s.press_t - cfg.resting_window_s, s.press_t]);
    if resting_window.is_none() {
        warnings.push("no breath hold found; resting window undefined".into());
    }
    let mut site = |rec: &PpgRecording, series: &SpO2Series, label: &str| {
        let resting = resting_window.and_then(|w| match resting_metrics(series, &series.ir.ac, w) {
            Ok(m) => Some(m),
            Err(e) => {
                warnings.push(format!("{label}: resting metrics unavailable: {e}"));
                None
            }
        });
        SiteSummary {
            fs: cfg.declared_fs.unwrap_or(rec.fs()),
            duration_s: rec.duration(),
            peaks_red: series.red.beats.peak_times.len(),
            peaks_ir: series.ir.beats.peak_times.len(),
            violations: validate_recording(rec, cfg.adc_max).violations,
            resting,
        }
    };
    let ear_summary = site(ear, &ear_series, "ear");
    let finger_summary = site(finger, &finger_series, "finger");

    let mut ear_delays = Vec::new();
    let mut finger_delays = Vec::new();
    for seg in &segments {
        let e = DelayMeasurement::measure(&ear_series, seg, &cfg.trough);
        let f = DelayMeasurement::measure(&finger_series, seg, &cfg.trough);
        match (e, f) {
            (Ok(e), Ok(f)) => {
                ear_delays.push(e);
                finger_delays.push(f);
            }
            (e, f) => {
                for (label, r) in [("ear", e.err()), ("finger", f.err())] {
                    if let Some(err) = r {
                        warnings.push(format!("hold {}: {label}: {err}", seg.index));
                    }
                }
            }
        }
    }
    let delays = if ear_delays.is_empty() {
        warnings.push("no delay measurements".into());
        None
    } else {
        Some(subject_delay_report(&ear_delays, &finger_delays)?)
    };

    Ok(SubjectReport {
        subject: ear.subject().clone(),
        segments,
        ear: ear_summary,
        finger: finger_summary,
        delays,
        warnings,
        notes: vec![SMOOTHING_NOTE.into(), "relative delay = finger - ear".into()],
        config: cfg.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectDigest {
    pub subject: SubjectMeta,
    pub resting_spo2_ear: Option<f64>,
    pub resting_spo2_finger: Option<f64>,
    pub amplitude_ear: Option<f64>,
    pub amplitude_finger: Option<f64>,
    pub mean_ear_s: Option<f64>,
    pub mean_finger_s: Option<f64>,
    pub mean_relative_s: Option<f64>,
    pub range_ear_s: Option<f64>,
    pub range_finger_s: Option<f64>,
    pub holds_measured: usize,
    pub warnings: Vec<String>,
}

impl From<&SubjectReport> for SubjectDigest {
    fn from(r: &SubjectReport) -> Self {
        let d = r.delays.as_ref();
        Self {
            subject: r.subject.clone(),
            resting_spo2_ear: r.ear.resting.as_ref().map(|m| m.mean_spo2),
            resting_spo2_finger: r.finger.resting.as_ref().map(|m| m.mean_spo2),
            amplitude_ear: r.ear.resting.as_ref().map(|m| m.mean_ac_amplitude_ir),
            amplitude_finger: r.finger.resting.as_ref().map(|m| m.mean_ac_amplitude_ir),
            mean_ear_s: d.map(|d| d.mean_ear_s),
            mean_finger_s: d.map(|d| d.mean_finger_s),
            mean_relative_s: d.map(|d| d.mean_relative_s),
            range_ear_s: d.map(|d| d.range_ear_s),
            range_finger_s: d.map(|d| d.range_finger_s),
            holds_measured: d.map_or(0, |d| d.ear.len()),
            warnings: r.warnings.clone(),
        }
    }
}

/// One row of the mean-delay table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayRow {
    pub group: String,
    pub n: usize,
    pub relative_s: f64,
    pub finger_s: f64,
    pub ear_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeRow {
    pub id: String,
    pub ear: f64,
    pub finger: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeTable {
    /// Normalised to the largest resting amplitude across both sites.
    pub rows: Vec<AmplitudeRow>,
    pub mean_finger_ear_ratio: Option<f64>,
    pub finger_higher_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub subjects: Vec<SubjectDigest>,
    pub summary: CohortSummary,
    pub delay_table: Vec<DelayRow>,
    pub amplitudes: AmplitudeTable,
    pub relative_delay_min_s: Option<f64>,
    pub relative_delay_max_s: Option<f64>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    pub reference: ReferenceValues,
    pub config: PipelineConfig,
}

fn delay_row(group: &str, subjects: &[&SubjectDigest]) -> Option<DelayRow> {
    let with: Vec<(f64, f64)> = subjects
        .iter()
        .filter_map(|s| Some((s.mean_finger_s?, s.mean_ear_s?)))
        .collect();
    if with.is_empty() {
        return None;
    }
    let n = with.len() as f64;
    let finger_s = with.iter().map(|p| p.0).sum::<f64>() / n;
    let ear_s = with.iter().map(|p| p.1).sum::<f64>() / n;
    Some(DelayRow {
        group: group.into(),
        n: with.len(),
        relative_s: finger_s - ear_s,
        finger_s,
        ear_s,
    })
}

/// Aggregates per-subject reports. `reports` should already be ordered
/// (the caller sorts by subject id).
pub fn build_cohort_report(reports: &[SubjectReport], mut warnings: Vec<String>, cfg: &PipelineConfig) -> CohortReport {
    let subjects: Vec<SubjectDigest> = reports.iter().map(SubjectDigest::from).collect();
    let mut notes = vec![
        SMOOTHING_NOTE.to_string(),
        "resting difference sign convention: ear minus finger".into(),
        "relative delay = finger - ear".into(),
    ];

    let by = |sex: Sex| -> Vec<&SubjectDigest> { subjects.iter().filter(|s| s.subject.sex == sex).collect() };
    let all: Vec<&SubjectDigest> = subjects.iter().collect();
    let delay_table: Vec<DelayRow> = [("Female", by(Sex::F)), ("Male", by(Sex::M)), ("Total", all)]
        .iter()
        .filter_map(|(g, s)| delay_row(g, s))
        .collect();

    // Resting SpO₂ agreement.
    let resting: Vec<(String, f64, f64)> = subjects
        .iter()
        .filter_map(|s| Some((s.subject.id.clone(), s.resting_spo2_ear?, s.resting_spo2_finger?)))
        .collect();
    let paired = PairedSamples::new(
        resting.iter().map(|r| r.0.clone()).collect(),
        resting.iter().map(|r| r.1).collect(),
        resting.iter().map(|r| r.2).collect(),
    );
    let (rmsd, mean_diff) = match &paired {
        Ok(p) => (stats::rms_difference(p).ok(), stats::mean_difference(p).ok()),
        Err(e) => {
            warnings.push(format!("resting comparison skipped: {e}"));
            (None, None)
        }
    };

    // Sex comparison of mean relative delay.
    let relative_of = |sex: Sex| -> Vec<f64> { by(sex).iter().filter_map(|s| s.mean_relative_s).collect() };
    let (female, male) = (relative_of(Sex::F), relative_of(Sex::M));
    let sex_welch = stats::t_test(&male, &female, TestMode::Welch).map_err(|e| e.to_string());
    let sex_paired = (male.len() == female.len()).then(|| {
        notes.push(
            "paired t-test across sex groups pairs unrelated subjects in id order; Welch is the primary test".into(),
        );
        stats::t_test(&male, &female, TestMode::Paired).map_err(|e| e.to_string())
    });
    let group_means = [("Female", &female), ("Male", &male)]
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(g, v)| GroupMean {
            group: (*g).into(),
            n: v.len(),
            mean_relative_s: stats::mean(v),
        })
        .collect();

    let aged: Vec<(f64, f64)> = subjects
        .iter()
        .filter_map(|s| Some((s.subject.age?, s.mean_relative_s?)))
        .collect();
    let age_correlation = stats::pearson_r(
        &aged.iter().map(|a| a.0).collect::<Vec<_>>(),
        &aged.iter().map(|a| a.1).collect::<Vec<_>>(),
    )
    .map_err(|e| e.to_string());

    // Amplitudes normalised to the cohort maximum.
    let amp: Vec<(String, f64, f64)> = subjects
        .iter()
        .filter_map(|s| Some((s.subject.id.clone(), s.amplitude_ear?, s.amplitude_finger?)))
        .collect();
    let pooled: Vec<f64> = amp.iter().flat_map(|a| [a.1, a.2]).collect();
    let amplitudes = match normalize_amplitudes(&pooled) {
        Ok(norm) => {
            let rows: Vec<AmplitudeRow> = amp
                .iter()
                .zip(norm.chunks(2))
                .map(|(a, n)| AmplitudeRow {
                    id: a.0.clone(),
                    ear: n[0],
                    finger: n[1],
                })
                .collect();
            let mean_ear = stats::mean(&amp.iter().map(|a| a.1).collect::<Vec<_>>());
            let mean_finger = stats::mean(&amp.iter().map(|a| a.2).collect::<Vec<_>>());
            AmplitudeTable {
                finger_higher_count: rows.iter().filter(|r| r.finger > r.ear).count(),
                rows,
                mean_finger_ear_ratio: Some(mean_finger / mean_ear),
            }
        }
        Err(e) => {
            warnings.push(format!("amplitude table skipped: {e}"));
            AmplitudeTable {
                rows: Vec::new(),
                mean_finger_ear_ratio: None,
                finger_higher_count: 0,
            }
        }
    };

    let relative: Vec<f64> = subjects.iter().filter_map(|s| s.mean_relative_s).collect();
    let relative_delay_min_s = relative.iter().copied().reduce(f64::min);
    let relative_delay_max_s = relative.iter().copied().reduce(f64::max);

    CohortReport {
        subjects,
        summary: CohortSummary {
            rmsd,
            mean_diff,
            sex_welch,
            sex_paired,
            age_correlation,
            group_means,
            notes: Vec::new(),
        },
        delay_table,
        amplitudes,
        relative_delay_min_s,
        relative_delay_max_s,
        warnings,
        notes,
        reference: REFERENCE,
        config: cfg.clone(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v}"))
}

fn sex_label(s: Sex) -> &'static str {
    match s {
        Sex::M => "M",
        Sex::F => "F",
        Sex::Unknown => "U",
    }
}

impl CohortReport {
    /// Per-subject resting SpO₂ at both sites with the healthy-range flag.
    pub fn resting_csv(&self) -> String {
        let mut out = String::from("id,sex,ear_spo2,finger_spo2,ear_healthy,finger_healthy\n");
        let healthy = |v: Option<f64>| v.map_or_else(String::new, |v| (crate::oximetry::HEALTHY_MIN_PCT..=100.0).contains(&v).to_string());
        for s in &self.subjects {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.subject.id,
                sex_label(s.subject.sex),
                opt(s.resting_spo2_ear),
                opt(s.resting_spo2_finger),
                healthy(s.resting_spo2_ear),
                healthy(s.resting_spo2_finger)
            );
        }
        out
    }

    /// Per-subject mean delays and within-subject ranges.
    pub fn delay_csv(&self) -> String {
        let mut out = String::from("id,sex,ear_mean_s,ear_range_s,finger_mean_s,finger_range_s,relative_mean_s\n");
        for s in &self.subjects {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.subject.id,
                sex_label(s.subject.sex),
                opt(s.mean_ear_s),
                opt(s.range_ear_s),
                opt(s.mean_finger_s),
                opt(s.range_finger_s),
                opt(s.mean_relative_s)
            );
        }
        out
    }

    /// Quartiles, median and range of per-subject mean delays per site.
    pub fn boxplot_csv(&self) -> String {
        let mut out = String::from("site,n,min,q1,median,q3,max\n");
        let cols: [(&str, fn(&SubjectDigest) -> Option<f64>); 3] = [
            ("ear", |s| s.mean_ear_s),
            ("finger", |s| s.mean_finger_s),
            ("relative", |s| s.mean_relative_s),
        ];
        for (site, f) in cols {
            let v: Vec<f64> = self.subjects.iter().filter_map(f).collect();
            if let Some(b) = stats::five_number(&v) {
                let _ = writeln!(out, "{site},{},{},{},{},{},{}", v.len(), b.min, b.q1, b.median, b.q3, b.max);
            }
        }
        out
    }

    pub fn amplitude_csv(&self) -> String {
        let mut out = String::from("id,ear_normalized,finger_normalized\n");
        for r in &self.amplitudes.rows {
            let _ = writeln!(out, "{},{},{}", r.id, r.ear, r.finger);
        }
        out
    }

    /// `(file name, contents)` for every plot-data table.
    pub fn plot_files(&self) -> Vec<(&'static str, String)> {
        vec![
            ("resting_spo2_per_subject.csv", self.resting_csv()),
            ("delay_per_subject.csv", self.delay_csv()),
            ("delay_boxplot.csv", self.boxplot_csv()),
            ("amplitude_normalized.csv", self.amplitude_csv()),
        ]
    }
}
