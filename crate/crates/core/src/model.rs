//! Shared domain types: sound levels, samples, hourly metrics, time bands,
//! the pre/during period split, stations and coordinates.
//!
//! All types here are immutable value objects and safe to share across
//! threads. Timestamps are local civil time throughout; band boundaries like
//! "11 PM" are wall-clock concepts and no UTC conversion is ever applied.

use std::cmp::Ordering;
use std::fmt;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds per 5-minute logging slot.
pub const SLOT_SECONDS: i64 = 300;

/// Plausible sound-level range checked at ingestion, in dB.
pub const PLAUSIBLE_DB_RANGE: (f64, f64) = (0.0, 140.0);

/// A sound pressure level in decibels.
///
/// Construction rejects non-finite values. The plausibility range
/// [0, 140] dB is *not* enforced here: ingestion flags implausible rows so
/// they stay auditable instead of silently vanishing.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Decibel(f64);

impl Decibel {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() {
            Ok(Decibel(value))
        } else {
            Err(Error::InvalidDecibel(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Whether the level falls inside the plausible ingestion range.
    pub fn is_plausible(self) -> bool {
        let (lo, hi) = PLAUSIBLE_DB_RANGE;
        self.0 >= lo && self.0 <= hi
    }
}

impl fmt::Display for Decibel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} dB", self.0)
    }
}

/// Station identifier.
///
/// Ordering is numeric-aware: ids that parse as integers sort numerically
/// (so "2" comes before "10"), everything else falls back to lexicographic.
/// This keeps multi-station report output in natural station order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StationId(pub String);

impl StationId {
    pub fn new(id: impl Into<String>) -> Self {
        StationId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn sort_key(&self) -> (u8, u64, &str) {
        match self.0.parse::<u64>() {
            Ok(n) => (0, n, self.0.as_str()),
            Err(_) => (1, 0, self.0.as_str()),
        }
    }
}

impl Ord for StationId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for StationId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for StationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// WGS-84 coordinate, latitude in degrees north, longitude in signed
/// degrees east. Sources that print western longitudes as positive °W
/// (as station gazetteers around Dublin do) must be negated on entry;
/// [`GeoPoint::from_west`] does exactly that.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if lat.is_finite() && lon.is_finite() && (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon)
        {
            Ok(GeoPoint { lat, lon })
        } else {
            Err(Error::CoordinateOutOfRange { lat, lon })
        }
    }

    /// Build from a latitude °N and a longitude printed as positive °W,
    /// converting to the signed-east convention used everywhere else.
    pub fn from_west(lat: f64, lon_west: f64) -> Result<Self> {
        GeoPoint::new(lat, -lon_west)
    }
}

/// A monitoring station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub station_id: StationId,
    pub name: String,
    pub location: GeoPoint,
}

/// One 5-minute record from a monitoring station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSample {
    pub station_id: StationId,
    /// Local civil time, aligned to a 5-minute boundary.
    pub timestamp: NaiveDateTime,
    /// Equivalent continuous level over the 5 minutes.
    pub leq: Decibel,
    /// Maximum level within the 5 minutes.
    pub lmax: Decibel,
}

impl NoiseSample {
    pub fn new(
        station_id: StationId,
        timestamp: NaiveDateTime,
        leq: Decibel,
        lmax: Decibel,
    ) -> Result<Self> {
        if lmax.value() < leq.value() {
            return Err(Error::LmaxBelowLeq {
                leq: leq.value(),
                lmax: lmax.value(),
            });
        }
        if !is_slot_aligned(timestamp) {
            return Err(Error::MisalignedTimestamp(timestamp.to_string()));
        }
        Ok(NoiseSample {
            station_id,
            timestamp,
            leq,
            lmax,
        })
    }
}

/// Whether a timestamp sits exactly on the 5-minute grid.
pub fn is_slot_aligned(ts: NaiveDateTime) -> bool {
    ts.and_utc().timestamp().rem_euclid(SLOT_SECONDS) == 0
}

/// Per station-hour metrics derived from the 5-minute samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyMetrics {
    pub station_id: StationId,
    /// Start of the hour, local civil time.
    pub hour_start: NaiveDateTime,
    /// Energy average of the hour's leq samples.
    pub avg: Decibel,
    /// Largest lmax within the hour.
    pub max: Decibel,
    /// Smallest leq within the hour.
    pub min: Decibel,
    /// Number of contributing 5-minute samples (1..=12; empty hours are
    /// never emitted).
    pub n_samples: usize,
}

impl HourlyMetrics {
    /// Hours with under 50% slot coverage are usable but flagged; strict
    /// coverage mode drops them.
    pub fn is_low_coverage(&self) -> bool {
        self.n_samples < 6
    }
}

/// Time-of-day band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TimeBand {
    Night,
    Day,
    Evening,
}

impl TimeBand {
    pub const ALL: [TimeBand; 3] = [TimeBand::Night, TimeBand::Day, TimeBand::Evening];

    pub fn label(self) -> &'static str {
        match self {
            TimeBand::Night => "night",
            TimeBand::Day => "day",
            TimeBand::Evening => "evening",
        }
    }
}

impl fmt::Display for TimeBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Hour-of-day boundaries carving the 24-hour cycle into the three bands.
///
/// Day covers `[day_start, evening_start)`, Evening
/// `[evening_start, night_start)`, and Night wraps around midnight covering
/// `[night_start, 24) ∪ [0, day_start)`. Boundary hours belong to the band
/// they begin, so the bands partition all 24 hours exactly once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandScheme {
    pub day_start: u32,
    pub evening_start: u32,
    pub night_start: u32,
}

impl BandScheme {
    pub fn new(day_start: u32, evening_start: u32, night_start: u32) -> Result<Self> {
        if day_start < evening_start && evening_start < night_start && night_start <= 23 {
            Ok(BandScheme {
                day_start,
                evening_start,
                night_start,
            })
        } else {
            Err(Error::InvalidBandScheme(format!(
                "require day < evening < night <= 23, got {day_start}/{evening_start}/{night_start}"
            )))
        }
    }

    pub fn band_of_hour(&self, hour: u32) -> TimeBand {
        debug_assert!(hour < 24);
        if hour >= self.night_start || hour < self.day_start {
            TimeBand::Night
        } else if hour < self.evening_start {
            TimeBand::Day
        } else {
            TimeBand::Evening
        }
    }

    pub fn band_of(&self, ts: NaiveDateTime) -> TimeBand {
        self.band_of_hour(ts.hour())
    }

    /// Number of hours in a band under this scheme.
    pub fn width(&self, band: TimeBand) -> usize {
        match band {
            TimeBand::Day => (self.evening_start - self.day_start) as usize,
            TimeBand::Evening => (self.night_start - self.evening_start) as usize,
            TimeBand::Night => (24 - self.night_start + self.day_start) as usize,
        }
    }

    /// The civil date a band-hour is attributed to. Night hours before the
    /// day start belong to the *previous* date's night, so the night
    /// starting at 23:00 on date D is one contiguous block attributed to D.
    pub fn band_date(&self, ts: NaiveDateTime) -> NaiveDate {
        if ts.hour() < self.day_start {
            ts.date().pred_opt().expect("date out of range")
        } else {
            ts.date()
        }
    }
}

impl Default for BandScheme {
    /// Night 23:00–07:00, Day 07:00–19:00, Evening 19:00–23:00.
    fn default() -> Self {
        BandScheme {
            day_start: 7,
            evening_start: 19,
            night_start: 23,
        }
    }
}

/// Band of a timestamp under the default scheme.
pub fn band_of(ts: NaiveDateTime) -> TimeBand {
    BandScheme::default().band_of(ts)
}

/// Analysis window and the instant splitting it into pre and during periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodSplit {
    pub analysis_start: NaiveDateTime,
    pub split_instant: NaiveDateTime,
    pub analysis_end: NaiveDateTime,
}

impl PeriodSplit {
    pub fn new(
        analysis_start: NaiveDateTime,
        split_instant: NaiveDateTime,
        analysis_end: NaiveDateTime,
    ) -> Result<Self> {
        if analysis_start < split_instant && split_instant < analysis_end {
            Ok(PeriodSplit {
                analysis_start,
                split_instant,
                analysis_end,
            })
        } else {
            Err(Error::InvalidPeriodSplit(format!(
                "{analysis_start} / {split_instant} / {analysis_end}"
            )))
        }
    }

    pub fn contains(&self, ts: NaiveDateTime) -> bool {
        self.analysis_start <= ts && ts <= self.analysis_end
    }
}

impl Default for PeriodSplit {
    /// 1 Jan 2020 through end of 11 May 2020, split at the 25 Mar 2020
    /// lockdown midnight.
    fn default() -> Self {
        PeriodSplit {
            analysis_start: date_time(2020, 1, 1, 0, 0),
            split_instant: date_time(2020, 3, 25, 0, 0),
            analysis_end: date_time(2020, 5, 12, 0, 0),
        }
    }
}

/// Which side of the split a timestamp falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Period {
    Pre,
    During,
}

impl Period {
    pub fn label(self) -> &'static str {
        match self {
            Period::Pre => "pre",
            Period::During => "during",
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Assign an in-window timestamp to its period: `Pre` strictly before the
/// split instant, `During` from the split instant onward.
pub fn period_of(ts: NaiveDateTime, split: &PeriodSplit) -> Result<Period> {
    if !split.contains(ts) {
        return Err(Error::OutOfWindow(ts.to_string()));
    }
    Ok(if ts < split.split_instant {
        Period::Pre
    } else {
        Period::During
    })
}

/// Convenience constructor for local civil timestamps.
pub fn date_time(year: i32, month: u32, day: u32, hour: u32, minute: u32) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(year, month, day)
        .expect("valid date")
        .and_hms_opt(hour, minute, 0)
        .expect("valid time")
}

/// Parse a local civil timestamp, with or without seconds.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .ok()
}

/// Format a timestamp the way the CSV interfaces expect (minute precision).
pub fn format_timestamp(ts: NaiveDateTime) -> String {
    ts.format("%Y-%m-%dT%H:%M").to_string()
}

/// Calendar date helper mirroring `date_time`.
pub fn date(year: i32, month: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(year, month, day).expect("valid date")
}

#[allow(unused)]
fn _assert_send_sync() {
    fn check<T: Send + Sync>() {}
    check::<NoiseSample>();
    check::<HourlyMetrics>();
    check::<PeriodSplit>();
    check::<Station>();
}
