//! Parsing, validation and gap auditing of the four input files.
//!
//! All files are UTF-8 CSV with a header row and comma separators; LF and
//! CRLF both work. Timestamps are ISO-8601 local civil time. Rows that
//! violate an invariant are flagged with a reason code and kept out of the
//! accepted set — never silently dropped — so `rows_read` always equals
//! `rows_accepted + rows_flagged`.
//!
//! Formats:
//!   samples.csv   station_id,timestamp,leq_db,lmax_db
//!   stations.csv  station_id,name,lat,lon        (lon signed degrees east)
//!   traffic.csv   lat,lon,night_count,day_count,evening_count
//!   schools.csv   name,lat,lon

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use chrono::{NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    format_timestamp, parse_timestamp, Decibel, GeoPoint, NoiseSample, PeriodSplit, Station,
    StationId, SLOT_SECONDS,
};

/// Maximum distance from a 5-minute boundary a timestamp may drift and
/// still be snapped to it; loggers drift, but past this the slot is
/// ambiguous.
pub const SNAP_TOLERANCE_SECONDS: i64 = 60;

/// Why a row was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlagReason {
    Malformed,
    DbOutOfRange,
    LmaxBelowLeq,
    Duplicate,
    MisalignedTimestamp,
    CoordinateOutOfRange,
    NegativeCount,
}

impl FlagReason {
    pub fn code(self) -> &'static str {
        match self {
            FlagReason::Malformed => "malformed",
            FlagReason::DbOutOfRange => "db-out-of-range",
            FlagReason::LmaxBelowLeq => "lmax<leq",
            FlagReason::Duplicate => "duplicate",
            FlagReason::MisalignedTimestamp => "misaligned-timestamp",
            FlagReason::CoordinateOutOfRange => "coordinate-out-of-range",
            FlagReason::NegativeCount => "negative-count",
        }
    }
}

/// One rejected row, retrievable for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowFlag {
    /// 1-based line number in the source file (header is line 1).
    pub line: u64,
    pub reason: FlagReason,
    pub detail: String,
}

/// A missing 5-minute slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub station_id: StationId,
    pub slot_start: NaiveDateTime,
}

/// Outcome of parsing a samples file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_accepted: usize,
    pub rows_flagged: usize,
    pub flags: Vec<RowFlag>,
    /// Filled by the gap audit; empty straight after parsing.
    pub gaps: Vec<Gap>,
}

/// Per-band mean hourly vehicle counts at one detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandCounts {
    pub night: f64,
    pub day: f64,
    pub evening: f64,
}

/// A traffic detector with its per-band counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficPoint {
    pub location: GeoPoint,
    pub counts: BandCounts,
}

/// A school location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchoolPoint {
    pub name: String,
    pub location: GeoPoint,
}

fn reader_for<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// Snap a timestamp to the nearest 5-minute boundary if it is within the
/// tolerance; `None` when the slot assignment would be ambiguous.
fn snap_to_slot(ts: NaiveDateTime) -> Option<NaiveDateTime> {
    let secs = ts.and_utc().timestamp();
    let rem = secs.rem_euclid(SLOT_SECONDS);
    let snapped = if rem == 0 {
        return Some(ts);
    } else if rem <= SNAP_TOLERANCE_SECONDS {
        secs - rem
    } else if rem >= SLOT_SECONDS - SNAP_TOLERANCE_SECONDS {
        secs + (SLOT_SECONDS - rem)
    } else {
        return None;
    };
    Some(Utc.timestamp_opt(snapped, 0).single()?.naive_utc())
}

/// Parse a samples stream into validated, sorted, deduplicated samples plus
/// the audit report.
///
/// Timestamps within 60 s of a 5-minute boundary are snapped onto it;
/// anything further off is flagged as misaligned. Later rows that land on
/// an already-occupied (station, slot) are flagged as duplicates and the
/// first occurrence wins. Output is sorted by (station, timestamp).
pub fn parse_samples<R: Read>(input: R) -> Result<(Vec<NoiseSample>, IngestReport)> {
    let mut reader = reader_for(input);
    let mut report = IngestReport::default();
    let mut rows: Vec<(u64, NoiseSample)> = Vec::new();

    for record in reader.records() {
        let record = record?; // stream-level failure is fatal
        report.rows_read += 1;
        let line = line_of(&record);

        match parse_sample_record(&record) {
            Ok(sample) => rows.push((line, sample)),
            Err((reason, detail)) => report.flags.push(RowFlag {
                line,
                reason,
                detail,
            }),
        }
    }

    // Sort by (station, timestamp) keeping file order within a slot so the
    // first-read row wins the duplicate rule.
    rows.sort_by(|a, b| {
        (&a.1.station_id, a.1.timestamp, a.0).cmp(&(&b.1.station_id, b.1.timestamp, b.0))
    });

    let mut samples: Vec<NoiseSample> = Vec::with_capacity(rows.len());
    for (line, sample) in rows {
        let dup = samples
            .last()
            .is_some_and(|prev| prev.station_id == sample.station_id && prev.timestamp == sample.timestamp);
        if dup {
            report.flags.push(RowFlag {
                line,
                reason: FlagReason::Duplicate,
                detail: format!("{} {}", sample.station_id, format_timestamp(sample.timestamp)),
            });
        } else {
            samples.push(sample);
        }
    }

    report.flags.sort_by_key(|f| f.line);
    report.rows_flagged = report.flags.len();
    report.rows_accepted = samples.len();
    Ok((samples, report))
}

fn parse_sample_record(
    record: &csv::StringRecord,
) -> std::result::Result<NoiseSample, (FlagReason, String)> {
    let malformed = |msg: &str| (FlagReason::Malformed, msg.to_string());
    if record.len() != 4 {
        return Err(malformed(&format!("expected 4 fields, got {}", record.len())));
    }
    let station_id = StationId::new(&record[0]);
    if station_id.as_str().is_empty() {
        return Err(malformed("empty station_id"));
    }
    let raw_ts =
        parse_timestamp(&record[1]).ok_or_else(|| malformed(&format!("bad timestamp {:?}", &record[1])))?;
    let leq: f64 = record[2]
        .parse()
        .map_err(|_| malformed(&format!("bad leq {:?}", &record[2])))?;
    let lmax: f64 = record[3]
        .parse()
        .map_err(|_| malformed(&format!("bad lmax {:?}", &record[3])))?;

    let leq = Decibel::new(leq).map_err(|e| malformed(&e.to_string()))?;
    let lmax = Decibel::new(lmax).map_err(|e| malformed(&e.to_string()))?;

    if !leq.is_plausible() || !lmax.is_plausible() {
        return Err((
            FlagReason::DbOutOfRange,
            format!("leq {} lmax {}", leq.value(), lmax.value()),
        ));
    }
    if lmax.value() < leq.value() {
        return Err((
            FlagReason::LmaxBelowLeq,
            format!("leq {} lmax {}", leq.value(), lmax.value()),
        ));
    }
    let timestamp = snap_to_slot(raw_ts).ok_or((
        FlagReason::MisalignedTimestamp,
        format!("{raw_ts} is over {SNAP_TOLERANCE_SECONDS}s from a 5-minute boundary"),
    ))?;

    NoiseSample::new(station_id, timestamp, leq, lmax)
        .map_err(|e| (FlagReason::Malformed, e.to_string()))
}

/// Serialize accepted samples back to the documented CSV format. Parsing
/// the output reproduces the input samples exactly.
pub fn write_samples_csv<W: Write>(samples: &[NoiseSample], out: &mut W) -> Result<()> {
    writeln!(out, "station_id,timestamp,leq_db,lmax_db")?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{}",
            s.station_id,
            format_timestamp(s.timestamp),
            s.leq.value(),
            s.lmax.value()
        )?;
    }
    Ok(())
}

/// Every missing 5-minute slot per station over `[analysis_start,
/// analysis_end)`, for exactly the stations listed. Slot boundaries are
/// anchored at the window start.
pub fn audit_gaps_for(
    samples: &[NoiseSample],
    stations: &[StationId],
    window: &PeriodSplit,
) -> Vec<Gap> {
    let mut have: BTreeMap<&StationId, BTreeSet<NaiveDateTime>> = BTreeMap::new();
    for s in samples {
        have.entry(&s.station_id).or_default().insert(s.timestamp);
    }

    let mut ordered: Vec<&StationId> = stations.iter().collect();
    ordered.sort();
    ordered.dedup();

    let mut gaps = Vec::new();
    for station in ordered {
        let seen = have.get(station);
        let mut slot = window.analysis_start;
        while slot < window.analysis_end {
            if !seen.is_some_and(|set| set.contains(&slot)) {
                gaps.push(Gap {
                    station_id: station.clone(),
                    slot_start: slot,
                });
            }
            slot += chrono::Duration::seconds(SLOT_SECONDS);
        }
    }
    gaps
}

/// Gap audit over the stations that appear in the sample set.
pub fn audit_gaps(samples: &[NoiseSample], window: &PeriodSplit) -> Vec<Gap> {
    let stations: BTreeSet<StationId> = samples.iter().map(|s| s.station_id.clone()).collect();
    let stations: Vec<StationId> = stations.into_iter().collect();
    audit_gaps_for(samples, &stations, window)
}

/// Load the station gazetteer. Duplicate station ids are fatal; rows with
/// out-of-range coordinates are flagged and skipped.
pub fn load_stations<R: Read>(input: R) -> Result<(Vec<Station>, Vec<RowFlag>)> {
    let mut reader = reader_for(input);
    let mut stations: Vec<Station> = Vec::new();
    let mut flags = Vec::new();
    let mut seen: BTreeSet<StationId> = BTreeSet::new();

    for record in reader.records() {
        let record = record?;
        let line = line_of(&record);
        if record.len() != 4 {
            flags.push(RowFlag {
                line,
                reason: FlagReason::Malformed,
                detail: format!("expected 4 fields, got {}", record.len()),
            });
            continue;
        }
        let station_id = StationId::new(&record[0]);
        let name = record[1].to_string();
        let coords: std::result::Result<(f64, f64), _> =
            record[2].parse().and_then(|lat| record[3].parse().map(|lon| (lat, lon)));
        let (lat, lon) = match coords {
            Ok(c) => c,
            Err(_) => {
                flags.push(RowFlag {
                    line,
                    reason: FlagReason::Malformed,
                    detail: format!("bad coordinates {:?},{:?}", &record[2], &record[3]),
                });
                continue;
            }
        };
        let location = match GeoPoint::new(lat, lon) {
            Ok(p) => p,
            Err(e) => {
                flags.push(RowFlag {
                    line,
                    reason: FlagReason::CoordinateOutOfRange,
                    detail: e.to_string(),
                });
                continue;
            }
        };
        if !seen.insert(station_id.clone()) {
            return Err(Error::DuplicateStation(station_id.to_string()));
        }
        stations.push(Station {
            station_id,
            name,
            location,
        });
    }
    Ok((stations, flags))
}

/// Load traffic detectors with per-band counts.
pub fn load_traffic<R: Read>(input: R) -> Result<(Vec<TrafficPoint>, Vec<RowFlag>)> {
    let mut reader = reader_for(input);
    let mut points = Vec::new();
    let mut flags = Vec::new();

    for record in reader.records() {
        let record = record?;
        let line = line_of(&record);
        let parsed: Option<Vec<f64>> = (record.len() == 5)
            .then(|| record.iter().map(|f| f.parse().ok()).collect())
            .flatten();
        let fields = match parsed {
            Some(f) => f,
            None => {
                flags.push(RowFlag {
                    line,
                    reason: FlagReason::Malformed,
                    detail: "expected 5 numeric fields".to_string(),
                });
                continue;
            }
        };
        let location = match GeoPoint::new(fields[0], fields[1]) {
            Ok(p) => p,
            Err(e) => {
                flags.push(RowFlag {
                    line,
                    reason: FlagReason::CoordinateOutOfRange,
                    detail: e.to_string(),
                });
                continue;
            }
        };
        let counts = BandCounts {
            night: fields[2],
            day: fields[3],
            evening: fields[4],
        };
        if [counts.night, counts.day, counts.evening]
            .iter()
            .any(|c| !c.is_finite() || *c < 0.0)
        {
            flags.push(RowFlag {
                line,
                reason: FlagReason::NegativeCount,
                detail: format!("{:?}", counts),
            });
            continue;
        }
        points.push(TrafficPoint { location, counts });
    }
    Ok((points, flags))
}

/// Load school locations.
pub fn load_schools<R: Read>(input: R) -> Result<(Vec<SchoolPoint>, Vec<RowFlag>)> {
    let mut reader = reader_for(input);
    let mut points = Vec::new();
    let mut flags = Vec::new();

    for record in reader.records() {
        let record = record?;
        let line = line_of(&record);
        if record.len() != 3 {
            flags.push(RowFlag {
                line,
                reason: FlagReason::Malformed,
                detail: format!("expected 3 fields, got {}", record.len()),
            });
            continue;
        }
        let name = record[0].to_string();
        let coords: std::result::Result<(f64, f64), _> =
            record[1].parse().and_then(|lat| record[2].parse().map(|lon| (lat, lon)));
        let (lat, lon) = match coords {
            Ok(c) => c,
            Err(_) => {
                flags.push(RowFlag {
                    line,
                    reason: FlagReason::Malformed,
                    detail: "bad coordinates".to_string(),
                });
                continue;
            }
        };
        match GeoPoint::new(lat, lon) {
            Ok(location) => points.push(SchoolPoint { name, location }),
            Err(e) => flags.push(RowFlag {
                line,
                reason: FlagReason::CoordinateOutOfRange,
                detail: e.to_string(),
            }),
        }
    }
    Ok((points, flags))
}
