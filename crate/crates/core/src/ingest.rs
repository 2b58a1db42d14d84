//! Raw PPG recordings: CSV parsing, button-marker extraction and validation.
//!
//! The canonical CSV header is `t_s,red,ir,green,button` (`green` optional,
//! `button` is `0`/`1`). Timestamps are kept exactly as logged; the sampling
//! rate is the reciprocal of the median inter-sample interval unless a
//! declared rate overrides it.

use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum recording length accepted by downstream analysis.
pub const MIN_DURATION_S: f64 = 10.0;
/// Interval above which consecutive samples count as a dropout.
pub const DROPOUT_GAP_S: f64 = 0.5;
/// Full-scale count of the 18-bit ADC used by the reference sensor.
pub const DEFAULT_ADC_MAX: f64 = 262_143.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("missing column \"{0}\"")]
    MissingColumn(String),
    #[error("non-monotone time at row {row}: {t} s after {prev} s")]
    NonMonotoneTime { row: usize, t: f64, prev: f64 },
    #[error("non-numeric cell at row {row}, column \"{column}\": {value:?}")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("invalid value at row {row}, column \"{column}\": {reason}")]
    InvalidValue {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("malformed csv: {0}")]
    Csv(String),
    #[error("recording has {0} samples; at least 2 are required")]
    TooFewSamples(usize),
    #[error("invalid sampling rate {0} Hz")]
    InvalidSamplingRate(f64),
    #[error("invalid subject metadata: {0}")]
    InvalidSubject(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Site {
    EarCanal,
    Finger,
    Other(String),
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Site::EarCanal => f.write_str("ear"),
            Site::Finger => f.write_str("finger"),
            Site::Other(label) => f.write_str(label),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMeta {
    pub id: String,
    #[serde(default)]
    pub sex: Sex,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<f64>,
}

impl SubjectMeta {
    pub fn new(id: impl Into<String>, sex: Sex, age: Option<f64>) -> Result<Self, IngestError> {
        let meta = Self {
            id: id.into(),
            sex,
            age,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn anonymous(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            sex: Sex::Unknown,
            age: None,
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.id.trim().is_empty() {
            return Err(IngestError::InvalidSubject("empty id".into()));
        }
        if let Some(age) = self.age {
            if !(0.0..=150.0).contains(&age) {
                return Err(IngestError::InvalidSubject(format!("age {age} outside [0, 150]")));
            }
        }
        Ok(())
    }
}

/// One row of a recording.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpgSample {
    pub t: f64,
    pub red: f64,
    pub infrared: f64,
    pub green: Option<f64>,
    pub button: bool,
}

/// Header names for each logical column, loaded from a JSON config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub t: String,
    pub red: String,
    pub ir: String,
    pub green: Option<String>,
    pub button: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            t: "t_s".into(),
            red: "red".into(),
            ir: "ir".into(),
            green: Some("green".into()),
            button: "button".into(),
        }
    }
}

/// A single-site recording. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PpgRecording {
    site: Site,
    subject: SubjectMeta,
    samples: Vec<PpgSample>,
    fs: f64,
    has_green: bool,
}

impl PpgRecording {
    /// Builds a recording, checking sample invariants and inferring `fs`.
    pub fn new(site: Site, subject: SubjectMeta, samples: Vec<PpgSample>) -> Result<Self, IngestError> {
        subject.validate()?;
        if samples.len() < 2 {
            return Err(IngestError::TooFewSamples(samples.len()));
        }
        for (row, s) in samples.iter().enumerate() {
            check_sample(row, s)?;
        }
        for (row, w) in samples.windows(2).enumerate() {
            if w[1].t <= w[0].t {
                return Err(IngestError::NonMonotoneTime {
                    row: row + 1,
                    t: w[1].t,
                    prev: w[0].t,
                });
            }
        }
        let t: Vec<f64> = samples.iter().map(|s| s.t).collect();
        let fs = infer_fs(&t)?;
        let has_green = samples.iter().all(|s| s.green.is_some());
        let samples = if has_green {
            samples
        } else {
            samples.into_iter().map(|s| PpgSample { green: None, ..s }).collect()
        };
        Ok(Self {
            site,
            subject,
            samples,
            fs,
            has_green,
        })
    }

    /// Replaces the inferred sampling rate with a declared one.
    pub fn with_declared_fs(mut self, fs: f64) -> Result<Self, IngestError> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(IngestError::InvalidSamplingRate(fs));
        }
        self.fs = fs;
        Ok(self)
    }

    pub fn site(&self) -> &Site {
        &self.site
    }

    pub fn subject(&self) -> &SubjectMeta {
        &self.subject
    }

    pub fn samples(&self) -> &[PpgSample] {
        &self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn has_green(&self) -> bool {
        self.has_green
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |l| l.t) - self.samples[0].t
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn red(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.red).collect()
    }

    pub fn infrared(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.infrared).collect()
    }

    pub fn green(&self) -> Option<Vec<f64>> {
        self.has_green
            .then(|| self.samples.iter().map(|s| s.green.unwrap_or(0.0)).collect())
    }

    pub fn button(&self) -> Vec<bool> {
        self.samples.iter().map(|s| s.button).collect()
    }

    /// Serialises to the canonical CSV schema.
    ///
    /// Timestamps are written with microsecond resolution; counts use the
    /// shortest representation that parses back to the identical `f64`.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.samples.len() * 40);
        out.push_str(if self.has_green {
            "t_s,red,ir,green,button\n"
        } else {
            "t_s,red,ir,button\n"
        });
        for s in &self.samples {
            let _ = write!(out, "{:.6},{},{},", s.t, s.red, s.infrared);
            if let Some(g) = s.green.filter(|_| self.has_green) {
                let _ = write!(out, "{g},");
            }
            out.push_str(if s.button { "1\n" } else { "0\n" });
        }
        out
    }
}

fn check_sample(row: usize, s: &PpgSample) -> Result<(), IngestError> {
    let bad = |column: &str, reason: &str| IngestError::InvalidValue {
        row,
        column: column.into(),
        reason: reason.into(),
    };
    if !(s.t.is_finite() && s.t >= 0.0) {
        return Err(bad("t", "timestamp must be finite and non-negative"));
    }
    for (name, v) in [("red", Some(s.red)), ("ir", Some(s.infrared)), ("green", s.green)] {
        if let Some(v) = v {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(name, "count must be finite and non-negative"));
            }
        }
    }
    Ok(())
}

/// Reciprocal of the median inter-sample interval.
pub fn infer_fs(t: &[f64]) -> Result<f64, IngestError> {
    if t.len() < 2 {
        return Err(IngestError::TooFewSamples(t.len()));
    }
    let mut dt: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    dt.sort_by(f64::total_cmp);
    let n = dt.len();
    let median = if n % 2 == 1 {
        dt[n / 2]
    } else {
        0.5 * (dt[n / 2 - 1] + dt[n / 2])
    };
    let fs = 1.0 / median;
    if fs.is_finite() && fs > 0.0 {
        Ok(fs)
    } else {
        Err(IngestError::InvalidSamplingRate(fs))
    }
}

/// Parses CSV text into a recording using `columns` to locate fields.
pub fn parse_recording(
    text: &str,
    columns: &ColumnMap,
    site: Site,
    subject: SubjectMeta,
) -> Result<PpgRecording, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| IngestError::Csv(e.to_string()))?.clone();
    let find = |logical: &str, name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(logical.to_string()))
    };
    let t_col = find("t", &columns.t)?;
    let red_col = find("red", &columns.red)?;
    let ir_col = find("ir", &columns.ir)?;
    let button_col = find("button", &columns.button)?;
    let green_col = columns
        .green
        .as_deref()
        .and_then(|g| headers.iter().position(|h| h == g));

    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // Row numbers are 1-based data rows (header excluded).
        let row = i + 1;
        let record = record.map_err(|e| IngestError::Csv(format!("row {row}: {e}")))?;
        let cell = |col: usize, name: &str| -> Result<f64, IngestError> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>().map_err(|_| IngestError::NonNumericCell {
                row,
                column: name.to_string(),
                value: raw.to_string(),
            })
        };
        let t = cell(t_col, &columns.t)?;
        let red = cell(red_col, &columns.red)?;
        let infrared = cell(ir_col, &columns.ir)?;
        let green = match green_col {
            Some(c) => Some(cell(c, columns.green.as_deref().unwrap_or("green"))?),
            None => None,
        };
        let button = match record.get(button_col).unwrap_or("") {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                let v: f64 = other.parse().map_err(|_| IngestError::NonNumericCell {
                    row,
                    column: columns.button.clone(),
                    value: other.to_string(),
                })?;
                v != 0.0
            }
        };
        if let Some(prev) = samples.last().map(|s: &PpgSample| s.t) {
            if t <= prev {
                return Err(IngestError::NonMonotoneTime { row, t, prev });
            }
        }
        let sample = PpgSample {
            t,
            red,
            infrared,
            green,
            button,
        };
        check_sample(row, &sample)?;
        samples.push(sample);
    }
    PpgRecording::new(site, subject, samples)
}

/// A pressed-button interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventMarker {
    pub press_t: f64,
    pub release_t: f64,
}

impl EventMarker {
    pub fn duration(&self) -> f64 {
        self.release_t - self.press_t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DebounceConfig {
    pub min_press_s: f64,
    pub merge_gap_s: f64,
}

impl Default for DebounceConfig {
    fn default() -> Self {
        Self {
            min_press_s: 1.0,
            merge_gap_s: 0.2,
        }
    }
}

/// Pressed runs of the button channel, merged across short gaps and with
/// short presses discarded.
///
/// A marker spans from the first to the last pressed sample of its run.
pub fn extract_button_intervals(rec: &PpgRecording, debounce: DebounceConfig) -> Vec<EventMarker> {
    let mut runs: Vec<EventMarker> = Vec::new();
    let mut open: Option<(f64, f64)> = None;
    for s in rec.samples() {
        match (&mut open, s.button) {
            (Some((_, last)), true) => *last = s.t,
            (None, true) => open = Some((s.t, s.t)),
            (Some((start, last)), false) => {
                runs.push(EventMarker {
                    press_t: *start,
                    release_t: *last,
                });
                open = None;
            }
            (None, false) => {}
        }
    }
    if let Some((start, last)) = open {
        runs.push(EventMarker {
            press_t: start,
            release_t: last,
        });
    }

    let mut merged: Vec<EventMarker> = Vec::with_capacity(runs.len());
    for run in runs {
        match merged.last_mut() {
            Some(prev) if run.press_t - prev.release_t < debounce.merge_gap_s => {
                prev.release_t = run.release_t;
            }
            _ => merged.push(run),
        }
    }
    merged
        .into_iter()
        .filter(|m| m.release_t > m.press_t && m.duration() >= debounce.min_press_s)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Fatal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Dropout { at_t: f64, gap_s: f64 },
    Saturated { channel: String, count: usize },
    TooShort { duration_s: f64 },
    FlatChannel { channel: String },
}

impl Violation {
    pub fn severity(&self) -> Severity {
        match self {
            Violation::TooShort { .. } => Severity::Fatal,
            _ => Severity::Warning,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dropout { at_t, gap_s } => write!(f, "dropout of {gap_s:.3} s at t = {at_t:.3} s"),
            Violation::Saturated { channel, count } => {
                write!(f, "{count} saturated samples on {channel}")
            }
            Violation::TooShort { duration_s } => {
                write!(f, "recording lasts {duration_s:.3} s, below {MIN_DURATION_S} s")
            }
            Violation::FlatChannel { channel } => write!(f, "channel {channel} is constant"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_usable(&self) -> bool {
        self.violations.iter().all(|v| v.severity() != Severity::Fatal)
    }

    pub fn fatal(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.severity() == Severity::Fatal)
    }
}

pub fn validate_recording(rec: &PpgRecording, adc_max: f64) -> ValidationReport {
    let mut violations = Vec::new();
    let duration = rec.duration();
    if duration < MIN_DURATION_S {
        violations.push(Violation::TooShort { duration_s: duration });
    }
    for w in rec.samples().windows(2) {
        let gap = w[1].t - w[0].t;
        if gap > DROPOUT_GAP_S {
            violations.push(Violation::Dropout { at_t: w[0].t, gap_s: gap });
        }
    }
    let mut channels = vec![("red", rec.red()), ("ir", rec.infrared())];
    if let Some(g) = rec.green() {
        channels.push(("green", g));
    }
    for (name, values) in &channels {
        let saturated = values.iter().filter(|&&v| v >= adc_max).count();
        if saturated > 0 {
            violations.push(Violation::Saturated {
                channel: (*name).into(),
                count: saturated,
            });
        }
        let first = values[0];
        if values.iter().all(|&v| v == first) {
            violations.push(Violation::FlatChannel {
                channel: (*name).into(),
            });
        }
    }
    ValidationReport { violations }
}
