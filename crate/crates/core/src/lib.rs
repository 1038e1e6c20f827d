//! Multi-station environmental noise analytics.
//!
//! Takes 5-minute sound-level records (equivalent continuous level and
//! maximum level per slot) through the full analysis chain:
//!
//! - energy-correct hourly aggregation and per-band daily series,
//! - least-squares trends with slope significance,
//! - penalized change-point detection (Gaussian segment likelihood, BIC
//!   penalty, pruned exact search for multiple changes),
//! - a cross-correlation linearity diagnostic with a ±1.96/√n band,
//! - threshold exceedance accounting per pre/during period,
//! - great-circle radius joins against traffic detectors and schools, and
//!   the traffic-noise regression,
//! - a deterministic report pipeline emitting CSV/JSON bundles, plus a
//!   seeded synthetic-data generator for end-to-end verification.

pub mod aggregate;
pub mod changepoint;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod exceedance;
pub mod ingest;
pub mod model;
pub mod report;
pub mod spatial;
pub mod stats;
pub mod synthgen;
pub mod trend;

pub use aggregate::{
    aggregate_hourly, build_band_series, energy_average, percentile_summary, BandDailySeries,
    CoverageMode, PercentileSummary,
};
pub use changepoint::{
    detect_multiple, detect_single, ChangePointParams, ChangePointResult, DetectionMode, Verdict,
};
pub use config::AnalysisConfig;
pub use diagnostics::{linearity_test, LinearityDiagnostic, LinearityVerdict, VerdictRule};
pub use error::{Error, Result};
pub use exceedance::{exceedance_report, period_summary, ExceedanceRow};
pub use ingest::{audit_gaps, parse_samples, IngestReport, SchoolPoint, TrafficPoint};
pub use model::{
    band_of, period_of, BandScheme, Decibel, GeoPoint, HourlyMetrics, NoiseSample, Period,
    PeriodSplit, Station, StationId, TimeBand,
};
pub use report::{run_pipeline, InputPaths, Manifest, PipelineError};
pub use spatial::{haversine_m, noise_traffic_fit, points_within, FitSummary, StationTraffic};
pub use synthgen::{generate, GroundTruth, ScenarioSpec, StationScenario};
pub use trend::{band_trends, hourly_trend, ols_fit, Metric, TrendResult};
