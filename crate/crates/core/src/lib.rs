//! Pulse-oximetry toolkit for dual-site (ear canal / finger) PPG recordings.
//!
//! The pipeline turns raw red/infrared photodiode counts into an SpO₂ trace
//! via the ratio of ratios, then measures breath-hold desaturation delays per
//! measurement site and summarises a cohort. A synthetic generator with an
//! embedded ground truth drives the end-to-end tests.
//!
//! ```text
//! ingest ─► dsp (band-pass, peaks, envelopes, DC) ─► oximetry (R, SpO₂)
//!                                                      │
//!                              protocol (holds, troughs, delays) ◄┘
//!                                                      │
//!                                  stats ◄── report (subject, cohort)
//! ```

// Validation uses `!(x > 0.0)` style checks so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dsp;
pub mod error;
pub mod ingest;
pub mod oximetry;
pub mod protocol;
pub mod report;
pub mod stats;
pub mod synth;

pub use config::PipelineConfig;
pub use error::{Error, Result};
