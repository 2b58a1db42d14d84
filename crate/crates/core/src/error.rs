use thiserror::Error;

use crate::dsp::DspError;
use crate::ingest::IngestError;
use crate::oximetry::OximetryError;
use crate::protocol::ProtocolError;
use crate::stats::StatsError;
use crate::synth::SynthError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error for pipeline compositions.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Oximetry(#[from] OximetryError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// True for failures caused by the filesystem rather than by the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. }) || matches!(self, Error::Synth(SynthError::Io { .. }))
    }
}
