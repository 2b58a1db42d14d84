//! Pipeline parameters. Every field has a default, so a partial JSON file
//! (or none at all) is a valid configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::{DcConfig, FilterSpec, PeakConfig};
use crate::error::{Error, Result};
use crate::ingest::{ColumnMap, DebounceConfig, DEFAULT_ADC_MAX};
use crate::oximetry::CalibrationCurve;
use crate::protocol::{SegmentConfig, TroughConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub columns: ColumnMap,
    /// Overrides the sampling rate inferred from timestamps.
    pub declared_fs: Option<f64>,
    pub adc_max: f64,
    pub debounce: DebounceConfig,
    pub bandpass: FilterSpec,
    pub dc: DcConfig,
    pub peaks: PeakConfig,
    /// Width of the centred moving average applied to SpO₂.
    pub smooth_s: f64,
    pub calibration: CalibrationCurve,
    /// Floor on the infrared AC/DC ratio below which R is not computed.
    pub low_amplitude_eps: f64,
    /// Longest low-amplitude gap bridged by interpolating R.
    pub bridge_gap_s: f64,
    pub segments: SegmentConfig,
    pub trough: TroughConfig,
    /// Resting window length ending at the first button press.
    pub resting_window_s: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            columns: ColumnMap::default(),
            declared_fs: None,
            adc_max: DEFAULT_ADC_MAX,
            debounce: DebounceConfig::default(),
            bandpass: FilterSpec::band_pass(1.0, 30.0, 4),
            dc: DcConfig::default(),
            peaks: PeakConfig::default(),
            smooth_s: 3.0,
            calibration: CalibrationCurve::default(),
            low_amplitude_eps: 1e-6,
            bridge_gap_s: 2.0,
            segments: SegmentConfig::default(),
            trough: TroughConfig::default(),
            resting_window_s: 60.0,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.calibration.validate().map_err(|e| Error::Config(e.to_string()))?;
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.smooth_s >= 0.0 && self.smooth_s.is_finite()) {
            return bad("smooth_s must be finite and non-negative");
        }
        let [lo, hi] = self.peaks.hr_range_bpm;
        if !(lo > 0.0 && hi > lo) {
            return bad("hr_range_bpm must satisfy 0 < min < max");
        }
        if !(self.peaks.prominence_fraction > 0.0 && self.peaks.prominence_fraction < 1.0) {
            return bad("prominence_fraction must lie in (0, 1)");
        }
        if !(self.low_amplitude_eps > 0.0) {
            return bad("low_amplitude_eps must be positive");
        }
        if !(self.resting_window_s >= 30.0) {
            return bad("resting_window_s must be at least 30 s");
        }
        self.trough.validate().map_err(Error::Config)?;
        if let Some(fs) = self.declared_fs {
            if !(fs > 0.0 && fs.is_finite()) {
                return bad("declared_fs must be positive");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_gives_defaults() {
        assert_eq!(PipelineConfig::from_json("{}").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = PipelineConfig::default();
        cfg.smooth_s = 2.5;
        cfg.calibration.intercept = 110.0;
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(PipelineConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(PipelineConfig::from_json(r#"{"calibration":{"intercept":104,"slope":-1}}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"smooth_s":-1}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"resting_window_s":10}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"nonsense":"#).is_err());
    }
}
