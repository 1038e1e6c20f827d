//! Run configuration.
//!
//! Plain-text `key = value` config with `#` comments. Every knob has a
//! default and every default can be overridden; the effective config is
//! echoed into each report bundle so a run is always reproducible from its
//! own output.
//!
//! Defaults:
//!   analysis_start       2020-01-01T00:00   start of the record
//!   split_instant        2020-03-25T00:00   Dublin lockdown midnight
//!   analysis_end         2020-05-12T00:00   exclusive end (11 May fully in)
//!   threshold_db         55                 WHO harmful-noise guideline
//!   radius_m             500                station neighborhood radius
//!   day_start_hour       7                  bands: day 07-19, evening
//!   evening_start_hour   19                 19-23, night 23-07
//!   night_start_hour     23
//!   max_lag              50                 linearity lags 0..=50
//!   alpha                0.05               two-sided slope test level
//!   min_segment_len      5                  change-point segment floor
//!   variance_floor       1e-8               Gaussian cost variance floor
//!   penalty_dim          3                  parameters charged per change
//!   changepoint_mode     single             or `multiple`
//!   coverage_mode        inclusive          or `strict` (< 50% hours out)
//!   linearity_rule       strict             or `fraction95`
//!   city_center_stations (empty)            comma-separated station ids

use std::collections::BTreeSet;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::aggregate::CoverageMode;
use crate::changepoint::{ChangePointParams, DetectionMode};
use crate::diagnostics::VerdictRule;
use crate::error::{Error, Result};
use crate::model::{format_timestamp, parse_timestamp, BandScheme, PeriodSplit, StationId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub analysis_start: NaiveDateTime,
    pub split_instant: NaiveDateTime,
    pub analysis_end: NaiveDateTime,
    pub threshold_db: f64,
    pub radius_m: f64,
    pub day_start_hour: u32,
    pub evening_start_hour: u32,
    pub night_start_hour: u32,
    pub max_lag: usize,
    pub alpha: f64,
    pub min_segment_len: usize,
    pub variance_floor: f64,
    pub penalty_dim: f64,
    pub changepoint_mode: DetectionMode,
    pub coverage_mode: CoverageMode,
    pub linearity_rule: VerdictRule,
    pub city_center_stations: Vec<StationId>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let split = PeriodSplit::default();
        AnalysisConfig {
            analysis_start: split.analysis_start,
            split_instant: split.split_instant,
            analysis_end: split.analysis_end,
            threshold_db: crate::exceedance::DEFAULT_THRESHOLD_DB,
            radius_m: crate::spatial::DEFAULT_RADIUS_M,
            day_start_hour: 7,
            evening_start_hour: 19,
            night_start_hour: 23,
            max_lag: crate::diagnostics::DEFAULT_MAX_LAG,
            alpha: crate::trend::DEFAULT_ALPHA,
            min_segment_len: 5,
            variance_floor: 1e-8,
            penalty_dim: 3.0,
            changepoint_mode: DetectionMode::Single,
            coverage_mode: CoverageMode::Inclusive,
            linearity_rule: VerdictRule::Strict,
            city_center_stations: Vec::new(),
        }
    }
}

impl AnalysisConfig {
    pub fn period_split(&self) -> Result<PeriodSplit> {
        PeriodSplit::new(self.analysis_start, self.split_instant, self.analysis_end)
    }

    pub fn band_scheme(&self) -> Result<BandScheme> {
        BandScheme::new(
            self.day_start_hour,
            self.evening_start_hour,
            self.night_start_hour,
        )
    }

    pub fn changepoint_params(&self) -> ChangePointParams {
        ChangePointParams {
            min_segment_len: self.min_segment_len,
            variance_floor: self.variance_floor,
            penalty_dim: self.penalty_dim,
        }
    }

    pub fn is_city_center(&self, id: &StationId) -> bool {
        self.city_center_stations.iter().any(|s| s == id)
    }

    /// Sanity-check cross-field invariants.
    pub fn validate(&self) -> Result<()> {
        self.period_split()?;
        self.band_scheme()?;
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.min_segment_len == 0 {
            return Err(Error::Config("min_segment_len must be positive".into()));
        }
        if self.variance_floor <= 0.0 || self.penalty_dim < 0.0 {
            return Err(Error::Config(
                "variance_floor must be positive and penalty_dim non-negative".into(),
            ));
        }
        if self.radius_m < 0.0 || self.threshold_db.is_nan() {
            return Err(Error::Config("bad radius or threshold".into()));
        }
        Ok(())
    }

    /// Render as the key-value text format; `parse` of the output yields an
    /// equal config.
    pub fn to_kv_string(&self) -> String {
        let stations: Vec<&str> = self.city_center_stations.iter().map(|s| s.as_str()).collect();
        format!(
            "analysis_start = {}\n\
             split_instant = {}\n\
             analysis_end = {}\n\
             threshold_db = {}\n\
             radius_m = {}\n\
             day_start_hour = {}\n\
             evening_start_hour = {}\n\
             night_start_hour = {}\n\
             max_lag = {}\n\
             alpha = {}\n\
             min_segment_len = {}\n\
             variance_floor = {}\n\
             penalty_dim = {}\n\
             changepoint_mode = {}\n\
             coverage_mode = {}\n\
             linearity_rule = {}\n\
             city_center_stations = {}\n",
            format_timestamp(self.analysis_start),
            format_timestamp(self.split_instant),
            format_timestamp(self.analysis_end),
            self.threshold_db,
            self.radius_m,
            self.day_start_hour,
            self.evening_start_hour,
            self.night_start_hour,
            self.max_lag,
            self.alpha,
            self.min_segment_len,
            self.variance_floor,
            self.penalty_dim,
            match self.changepoint_mode {
                DetectionMode::Single => "single",
                DetectionMode::Multiple => "multiple",
            },
            match self.coverage_mode {
                CoverageMode::Inclusive => "inclusive",
                CoverageMode::Strict => "strict",
            },
            match self.linearity_rule {
                VerdictRule::Strict => "strict",
                VerdictRule::Fraction95 => "fraction95",
            },
            stations.join(","),
        )
    }

    /// Parse the key-value format. Unknown keys are rejected; omitted keys
    /// keep their defaults.
    pub fn parse(text: &str) -> Result<AnalysisConfig> {
        let mut cfg = AnalysisConfig::default();
        let mut seen = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("duplicate key {key}")));
            }
            apply_key(&mut cfg, key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn apply_key(cfg: &mut AnalysisConfig, key: &str, value: &str) -> Result<()> {
    let bad = |what: &str| Error::Config(format!("bad {what} value {value:?}"));
    match key {
        "analysis_start" => cfg.analysis_start = parse_timestamp(value).ok_or_else(|| bad(key))?,
        "split_instant" => cfg.split_instant = parse_timestamp(value).ok_or_else(|| bad(key))?,
        "analysis_end" => cfg.analysis_end = parse_timestamp(value).ok_or_else(|| bad(key))?,
        "threshold_db" => cfg.threshold_db = value.parse().map_err(|_| bad(key))?,
        "radius_m" => cfg.radius_m = value.parse().map_err(|_| bad(key))?,
        "day_start_hour" => cfg.day_start_hour = value.parse().map_err(|_| bad(key))?,
        "evening_start_hour" => cfg.evening_start_hour = value.parse().map_err(|_| bad(key))?,
        "night_start_hour" => cfg.night_start_hour = value.parse().map_err(|_| bad(key))?,
        "max_lag" => cfg.max_lag = value.parse().map_err(|_| bad(key))?,
        "alpha" => cfg.alpha = value.parse().map_err(|_| bad(key))?,
        "min_segment_len" => cfg.min_segment_len = value.parse().map_err(|_| bad(key))?,
        "variance_floor" => cfg.variance_floor = value.parse().map_err(|_| bad(key))?,
        "penalty_dim" => cfg.penalty_dim = value.parse().map_err(|_| bad(key))?,
        "changepoint_mode" => {
            cfg.changepoint_mode = match value {
                "single" => DetectionMode::Single,
                "multiple" => DetectionMode::Multiple,
                _ => return Err(bad(key)),
            }
        }
        "coverage_mode" => {
            cfg.coverage_mode = match value {
                "inclusive" => CoverageMode::Inclusive,
                "strict" => CoverageMode::Strict,
                _ => return Err(bad(key)),
            }
        }
        "linearity_rule" => {
            cfg.linearity_rule = match value {
                "strict" => VerdictRule::Strict,
                "fraction95" => VerdictRule::Fraction95,
                _ => return Err(bad(key)),
            }
        }
        "city_center_stations" => {
            cfg.city_center_stations = value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(StationId::new)
                .collect();
        }
        _ => return Err(Error::Config(format!("unknown key {key}"))),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::date_time;

    #[test]
    fn defaults_match_documented_values() {
        let cfg = AnalysisConfig::default();
        assert_eq!(cfg.analysis_start, date_time(2020, 1, 1, 0, 0));
        assert_eq!(cfg.split_instant, date_time(2020, 3, 25, 0, 0));
        assert_eq!(cfg.analysis_end, date_time(2020, 5, 12, 0, 0));
        assert_eq!(cfg.threshold_db, 55.0);
        assert_eq!(cfg.radius_m, 500.0);
        assert_eq!(cfg.max_lag, 50);
        assert_eq!(cfg.alpha, 0.05);
        assert_eq!(cfg.min_segment_len, 5);
        assert_eq!(cfg.variance_floor, 1e-8);
        assert_eq!(cfg.penalty_dim, 3.0);
        assert_eq!(cfg.changepoint_mode, DetectionMode::Single);
        assert_eq!(cfg.coverage_mode, CoverageMode::Inclusive);
        assert_eq!(cfg.linearity_rule, VerdictRule::Strict);
        assert!(cfg.city_center_stations.is_empty());
        cfg.validate().unwrap();
    }

    #[test]
    fn kv_round_trip() {
        let cfg = AnalysisConfig {
            threshold_db: 50.0,
            coverage_mode: CoverageMode::Strict,
            changepoint_mode: DetectionMode::Multiple,
            linearity_rule: VerdictRule::Fraction95,
            city_center_stations: vec![StationId::new("3"), StationId::new("4")],
            ..Default::default()
        };
        let text = cfg.to_kv_string();
        let reparsed = AnalysisConfig::parse(&text).unwrap();
        assert_eq!(reparsed, cfg);
    }

    #[test]
    fn partial_override_and_comments() {
        let text = "# tighter run\nthreshold_db = 60\nmax_lag = 25 # fewer lags\n";
        let cfg = AnalysisConfig::parse(text).unwrap();
        assert_eq!(cfg.threshold_db, 60.0);
        assert_eq!(cfg.max_lag, 25);
        assert_eq!(cfg.radius_m, 500.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(AnalysisConfig::parse("unknown_key = 1\n").is_err());
        assert!(AnalysisConfig::parse("alpha = 1.5\n").is_err());
        assert!(AnalysisConfig::parse("threshold_db\n").is_err());
        assert!(AnalysisConfig::parse("alpha = 0.05\nalpha = 0.01\n").is_err());
        // split outside window
        assert!(AnalysisConfig::parse("split_instant = 2021-01-01T00:00\n").is_err());
        // inverted bands
        assert!(AnalysisConfig::parse("day_start_hour = 20\n").is_err());
    }
}
