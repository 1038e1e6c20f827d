//! Energy-based aggregation of sound levels.
//!
//! Decibels are logarithmic, so averages are taken over acoustic energy:
//! the average of levels N_1..N_n is `10·log10(Σ 10^(N_i/10) / n)`, the
//! constant level carrying the same total energy as the fluctuating signal.
//! Arithmetic means of dB values are never used for levels.

use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BandScheme, Decibel, HourlyMetrics, NoiseSample, StationId, TimeBand};

/// Energy average of a non-empty sequence of levels.
///
/// The result always lies within `[min(levels), max(levels)]` and is at
/// least the arithmetic mean (Jensen), with equality only for constant
/// input.
pub fn energy_average(levels: &[Decibel]) -> Result<Decibel> {
    if levels.is_empty() {
        return Err(Error::EmptyInput("energy_average of zero levels"));
    }
    let mean_power: f64 = levels
        .iter()
        .map(|l| 10f64.powf(l.value() / 10.0))
        .sum::<f64>()
        / levels.len() as f64;
    Decibel::new(10.0 * mean_power.log10())
}

/// Metrics for the samples of a single station-hour.
///
/// All samples must share one station and one clock hour; zero samples is
/// an error so that empty hours surface as missing rather than as zeros.
pub fn hourly_aggregate(samples: &[NoiseSample]) -> Result<HourlyMetrics> {
    let first = samples
        .first()
        .ok_or(Error::EmptyInput("hourly_aggregate of zero samples"))?;
    let hour_start = hour_floor(first.timestamp);
    for s in samples {
        if s.station_id != first.station_id {
            return Err(Error::MixedStations(
                first.station_id.to_string(),
                s.station_id.to_string(),
            ));
        }
        debug_assert_eq!(hour_floor(s.timestamp), hour_start);
    }

    let leqs: Vec<Decibel> = samples.iter().map(|s| s.leq).collect();
    let avg = energy_average(&leqs)?;
    let max = samples
        .iter()
        .map(|s| s.lmax.value())
        .fold(f64::NEG_INFINITY, f64::max);
    let min = samples
        .iter()
        .map(|s| s.leq.value())
        .fold(f64::INFINITY, f64::min);

    Ok(HourlyMetrics {
        station_id: first.station_id.clone(),
        hour_start,
        avg,
        max: Decibel::new(max)?,
        min: Decibel::new(min)?,
        n_samples: samples.len(),
    })
}

/// Group sorted samples by (station, hour) and aggregate each group.
/// Hours without samples simply do not appear in the output.
pub fn aggregate_hourly(samples: &[NoiseSample]) -> Result<Vec<HourlyMetrics>> {
    let mut groups: BTreeMap<(StationId, NaiveDateTime), Vec<NoiseSample>> = BTreeMap::new();
    for s in samples {
        groups
            .entry((s.station_id.clone(), hour_floor(s.timestamp)))
            .or_default()
            .push(s.clone());
    }
    groups.values().map(|g| hourly_aggregate(g)).collect()
}

/// Whether low-coverage hours participate in downstream analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoverageMode {
    /// Keep every hour with at least one sample (default).
    Inclusive,
    /// Drop hours with under 50% slot coverage.
    Strict,
}

/// Apply the coverage policy.
pub fn filter_coverage(hourly: Vec<HourlyMetrics>, mode: CoverageMode) -> Vec<HourlyMetrics> {
    match mode {
        CoverageMode::Inclusive => hourly,
        CoverageMode::Strict => hourly.into_iter().filter(|h| !h.is_low_coverage()).collect(),
    }
}

/// One calendar day of a station's band series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandDayEntry {
    pub date: NaiveDate,
    /// Energy average of the band's hourly averages.
    pub avg: Decibel,
    /// Largest hourly maximum in the band.
    pub max: Decibel,
    /// Smallest hourly minimum in the band.
    pub min: Decibel,
    pub n_hours: usize,
}

/// Daily series of one band for one station. Dates with zero in-band hours
/// are omitted entirely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandDailySeries {
    pub station_id: StationId,
    pub band: TimeBand,
    pub entries: Vec<BandDayEntry>,
}

/// Roll a single station's hourly metrics up to per-date band metrics.
///
/// The night starting at 23:00 on date D runs through 06:00 the next
/// morning and is attributed to date D, keeping each night one contiguous
/// block.
pub fn build_band_series(
    hourly: &[HourlyMetrics],
    band: TimeBand,
    scheme: &BandScheme,
) -> Result<BandDailySeries> {
    let station_id = match hourly.first() {
        Some(h) => h.station_id.clone(),
        None => {
            return Err(Error::EmptyInput("build_band_series of zero hours"));
        }
    };
    let mut days: BTreeMap<NaiveDate, Vec<&HourlyMetrics>> = BTreeMap::new();
    for h in hourly {
        if h.station_id != station_id {
            return Err(Error::MixedStations(
                station_id.to_string(),
                h.station_id.to_string(),
            ));
        }
        if scheme.band_of(h.hour_start) == band {
            days.entry(scheme.band_date(h.hour_start)).or_default().push(h);
        }
    }

    let mut entries = Vec::with_capacity(days.len());
    for (date, hours) in days {
        let avgs: Vec<Decibel> = hours.iter().map(|h| h.avg).collect();
        let avg = energy_average(&avgs)?;
        let max = hours
            .iter()
            .map(|h| h.max.value())
            .fold(f64::NEG_INFINITY, f64::max);
        let min = hours
            .iter()
            .map(|h| h.min.value())
            .fold(f64::INFINITY, f64::min);
        debug_assert!(hours.len() <= scheme.width(band));
        entries.push(BandDayEntry {
            date,
            avg,
            max: Decibel::new(max)?,
            min: Decibel::new(min)?,
            n_hours: hours.len(),
        });
    }

    Ok(BandDailySeries {
        station_id,
        band,
        entries,
    })
}

/// Five-number percentile summary used for box-plot style reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentileSummary {
    pub p5: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
}

/// Percentiles by linear interpolation between closest ranks (the "type 7"
/// rule: rank h = (n−1)p + 1 on the sorted values, interpolating between
/// floor(h) and ceil(h)).
pub fn percentile_summary(values: &[Decibel]) -> Result<PercentileSummary> {
    if values.is_empty() {
        return Err(Error::EmptyInput("percentile_summary of zero values"));
    }
    let mut sorted: Vec<f64> = values.iter().map(|d| d.value()).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite dB values"));
    let q = |p: f64| -> f64 {
        let h = (sorted.len() as f64 - 1.0) * p;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    };
    Ok(PercentileSummary {
        p5: q(0.05),
        p25: q(0.25),
        p50: q(0.50),
        p75: q(0.75),
        p95: q(0.95),
    })
}

fn hour_floor(ts: NaiveDateTime) -> NaiveDateTime {
    ts.with_minute(0)
        .and_then(|t| t.with_second(0))
        .and_then(|t| t.with_nanosecond(0))
        .expect("valid truncation")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{date_time, StationId};
    use approx::assert_abs_diff_eq;

    fn db(v: f64) -> Decibel {
        Decibel::new(v).unwrap()
    }

    fn dbs(vs: &[f64]) -> Vec<Decibel> {
        vs.iter().map(|&v| db(v)).collect()
    }

    // Independent high-precision evaluation of the energy mean, frozen:
    // 10·log10((10^5 + 10^6)/2) = 57.40362689494244
    const EA_50_60: f64 = 57.40362689494244;
    // 10·log10((11·10^5 + 10^6)/12) = 52.430380486862944
    const EA_11X50_60: f64 = 52.430380486862944;

    #[test]
    fn energy_average_oracle_values() {
        assert_abs_diff_eq!(
            energy_average(&dbs(&[50.0, 60.0])).unwrap().value(),
            EA_50_60,
            epsilon = 1e-9
        );
        let mut v = vec![50.0; 11];
        v.push(60.0);
        assert_abs_diff_eq!(
            energy_average(&dbs(&v)).unwrap().value(),
            EA_11X50_60,
            epsilon = 1e-9
        );
    }

    #[test]
    fn energy_average_fixed_points() {
        // Constant input is a fixed point; single sample is the identity.
        assert_eq!(
            energy_average(&dbs(&[50.0, 50.0, 50.0])).unwrap().value(),
            50.0
        );
        assert_eq!(energy_average(&dbs(&[48.3])).unwrap().value(), 48.3);
        assert!(energy_average(&[]).is_err());
    }

    #[test]
    fn energy_average_jensen_and_bounds() {
        let mut rng_state = 0x9E3779B97F4A7C15u64;
        let mut next = move || {
            // splitmix64, plenty for a spread of test levels
            rng_state = rng_state.wrapping_add(0x9E3779B97F4A7C15);
            let mut z = rng_state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            (z ^ (z >> 31)) as f64 / u64::MAX as f64
        };
        for _ in 0..500 {
            let n = 2 + (next() * 14.0) as usize;
            let levels: Vec<f64> = (0..n).map(|_| 30.0 + 60.0 * next()).collect();
            let ea = energy_average(&dbs(&levels)).unwrap().value();
            let amean = levels.iter().sum::<f64>() / n as f64;
            let lo = levels.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(ea >= amean - 1e-9, "Jensen violated: {ea} < {amean}");
            assert!(ea >= lo - 1e-9 && ea <= hi + 1e-9);
        }
    }

    #[test]
    fn energy_average_monotone_in_each_sample() {
        let base = [52.0, 55.0, 61.0, 47.5];
        let ea0 = energy_average(&dbs(&base)).unwrap().value();
        for i in 0..base.len() {
            let mut raised = base;
            raised[i] += 3.0;
            let ea1 = energy_average(&dbs(&raised)).unwrap().value();
            assert!(ea1 > ea0);
        }
    }

    fn sample(id: &str, ts: NaiveDateTime, leq: f64, lmax: f64) -> NoiseSample {
        NoiseSample::new(StationId::new(id), ts, db(leq), db(lmax)).unwrap()
    }

    #[test]
    fn hourly_aggregate_examples() {
        let t0 = date_time(2020, 1, 1, 10, 0);
        let full: Vec<NoiseSample> = (0..12)
            .map(|i| sample("S1", t0 + chrono::Duration::minutes(5 * i), 55.0, 60.0))
            .collect();
        let m = hourly_aggregate(&full).unwrap();
        assert_eq!(m.avg.value(), 55.0);
        assert_eq!(m.max.value(), 60.0);
        assert_eq!(m.min.value(), 55.0);
        assert_eq!(m.n_samples, 12);
        assert_eq!(m.hour_start, t0);

        let two = vec![
            sample("S1", t0, 50.0, 52.0),
            sample("S1", t0 + chrono::Duration::minutes(5), 60.0, 70.0),
        ];
        let m = hourly_aggregate(&two).unwrap();
        assert_abs_diff_eq!(m.avg.value(), EA_50_60, epsilon = 1e-9);
        assert_eq!(m.max.value(), 70.0);
        assert_eq!(m.min.value(), 50.0);

        let one = vec![sample("S1", t0, 48.3, 59.1)];
        let m = hourly_aggregate(&one).unwrap();
        assert_eq!(m.avg.value(), 48.3);
        assert_eq!(m.max.value(), 59.1);
        assert_eq!(m.min.value(), 48.3);

        assert!(hourly_aggregate(&[]).is_err());
    }

    #[test]
    fn hourly_min_avg_max_ordering() {
        let t0 = date_time(2020, 2, 2, 3, 0);
        let samples = vec![
            sample("S1", t0, 44.0, 52.0),
            sample("S1", t0 + chrono::Duration::minutes(5), 51.5, 58.0),
            sample("S1", t0 + chrono::Duration::minutes(10), 49.0, 49.5),
        ];
        let m = hourly_aggregate(&samples).unwrap();
        assert!(m.min.value() <= m.avg.value() && m.avg.value() <= m.max.value());
    }

    #[test]
    fn band_series_examples() {
        let scheme = BandScheme::default();
        // Constant 55 dB hourly series over two full days.
        let mut hourly = Vec::new();
        for day in 1..=2 {
            for hour in 0..24 {
                hourly.push(HourlyMetrics {
                    station_id: StationId::new("S1"),
                    hour_start: date_time(2020, 1, day, hour, 0),
                    avg: db(55.0),
                    max: db(55.0),
                    min: db(55.0),
                    n_samples: 12,
                });
            }
        }
        for band in TimeBand::ALL {
            let series = build_band_series(&hourly, band, &scheme).unwrap();
            for e in &series.entries {
                assert_eq!(e.avg.value(), 55.0);
                assert_eq!(e.max.value(), 55.0);
                assert_eq!(e.min.value(), 55.0);
            }
        }
        // Evening of a full day has exactly its 4 hours.
        let evening = build_band_series(&hourly, TimeBand::Evening, &scheme).unwrap();
        assert_eq!(evening.entries[0].n_hours, 4);
    }

    #[test]
    fn band_series_day_band_eq1() {
        let scheme = BandScheme::default();
        // Day band of one date: eleven hours at 50, one at 60.
        let mut hourly = Vec::new();
        for (i, hour) in (7..19).enumerate() {
            let level = if i == 11 { 60.0 } else { 50.0 };
            hourly.push(HourlyMetrics {
                station_id: StationId::new("S1"),
                hour_start: date_time(2020, 1, 5, hour, 0),
                avg: db(level),
                max: db(level),
                min: db(level),
                n_samples: 12,
            });
        }
        let series = build_band_series(&hourly, TimeBand::Day, &scheme).unwrap();
        assert_eq!(series.entries.len(), 1);
        assert_eq!(series.entries[0].n_hours, 12);
        assert_abs_diff_eq!(series.entries[0].avg.value(), EA_11X50_60, epsilon = 1e-9);
    }

    #[test]
    fn band_series_night_spans_midnight() {
        let scheme = BandScheme::default();
        let mut hourly = Vec::new();
        // Night of Jan 3: 23:00 Jan 3 plus 00:00-06:00 Jan 4.
        hourly.push(HourlyMetrics {
            station_id: StationId::new("S1"),
            hour_start: date_time(2020, 1, 3, 23, 0),
            avg: db(50.0),
            max: db(50.0),
            min: db(50.0),
            n_samples: 12,
        });
        for hour in 0..7 {
            hourly.push(HourlyMetrics {
                station_id: StationId::new("S1"),
                hour_start: date_time(2020, 1, 4, hour, 0),
                avg: db(50.0),
                max: db(50.0),
                min: db(50.0),
                n_samples: 12,
            });
        }
        let series = build_band_series(&hourly, TimeBand::Night, &scheme).unwrap();
        assert_eq!(series.entries.len(), 1);
        assert_eq!(series.entries[0].date, crate::model::date(2020, 1, 3));
        assert_eq!(series.entries[0].n_hours, 8);
    }

    #[test]
    fn percentile_examples() {
        let v: Vec<Decibel> = (1..=100).map(|i| db(i as f64)).collect();
        let s = percentile_summary(&v).unwrap();
        assert_abs_diff_eq!(s.p50, 50.5, epsilon = 1e-12);

        let s = percentile_summary(&dbs(&[55.0; 7])).unwrap();
        for p in [s.p5, s.p25, s.p50, s.p75, s.p95] {
            assert_eq!(p, 55.0);
        }

        let s = percentile_summary(&dbs(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_abs_diff_eq!(s.p25, 1.75, epsilon = 1e-12);
        assert!(s.p5 <= s.p25 && s.p25 <= s.p50 && s.p50 <= s.p75 && s.p75 <= s.p95);
        assert!(percentile_summary(&[]).is_err());
    }

    #[test]
    fn percentile_permutation_invariant() {
        let a = dbs(&[61.0, 44.0, 58.0, 51.0, 47.0]);
        let b = dbs(&[47.0, 51.0, 58.0, 44.0, 61.0]);
        assert_eq!(percentile_summary(&a).unwrap(), percentile_summary(&b).unwrap());
    }

    #[test]
    fn composition_over_equal_hours() {
        // Energy-averaging 5-min samples into hours and hours into a total
        // matches one flat energy average when every hour has equal count.
        let t0 = date_time(2020, 1, 1, 0, 0);
        let mut samples = Vec::new();
        let mut k = 0u32;
        for hour in 0..6 {
            for slot in 0..12 {
                let level = 45.0 + ((k * 37) % 20) as f64;
                samples.push(sample(
                    "S1",
                    t0 + chrono::Duration::minutes((hour * 60 + slot * 5) as i64),
                    level,
                    level + 4.0,
                ));
                k += 1;
            }
        }
        let hourly = aggregate_hourly(&samples).unwrap();
        let hour_avgs: Vec<Decibel> = hourly.iter().map(|h| h.avg).collect();
        let nested = energy_average(&hour_avgs).unwrap().value();
        let all: Vec<Decibel> = samples.iter().map(|s| s.leq).collect();
        let flat = energy_average(&all).unwrap().value();
        assert_abs_diff_eq!(nested, flat, epsilon = 1e-9);
    }
}
