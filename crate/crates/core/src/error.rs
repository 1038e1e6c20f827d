//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by ingestion and analysis operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid decibel value {0}: must be finite")]
    InvalidDecibel(f64),

    #[error("lmax {lmax} dB is below leq {leq} dB")]
    LmaxBelowLeq { leq: f64, lmax: f64 },

    #[error("timestamp {0} is not aligned to a 5-minute boundary")]
    MisalignedTimestamp(String),

    #[error("coordinate out of range: lat {lat}, lon {lon}")]
    CoordinateOutOfRange { lat: f64, lon: f64 },

    #[error("invalid period split: require start < split < end, got {0}")]
    InvalidPeriodSplit(String),

    #[error("timestamp {0} lies outside the analysis window")]
    OutOfWindow(String),

    #[error("invalid band scheme: {0}")]
    InvalidBandScheme(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("insufficient data for {context}: need at least {required}, got {actual}")]
    InsufficientData {
        context: &'static str,
        required: usize,
        actual: usize,
    },

    #[error("degenerate design: time values have zero variance")]
    DegenerateDesign,

    #[error("diagnostic undefined: {0}")]
    UndefinedDiagnostic(&'static str),

    #[error("duplicate station id {0}")]
    DuplicateStation(String),

    #[error("mixed station ids in a single-station operation: {0} vs {1}")]
    MixedStations(String, String),

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
