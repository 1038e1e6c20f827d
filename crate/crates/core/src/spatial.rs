//! Great-circle radius joins and the noise-vs-traffic regression.
//!
//! Distances use the haversine formula on a sphere of mean radius
//! 6,371,008.8 m; at the 500 m neighborhood scale the difference from an
//! ellipsoid is immaterial. Point sets here are small, so joins are plain
//! linear scans.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{SchoolPoint, TrafficPoint};
use crate::model::{GeoPoint, Station, StationId, TimeBand};
use crate::trend::ols_fit;

/// IUGG mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Default join radius in meters.
pub const DEFAULT_RADIUS_M: f64 = 500.0;

/// Great-circle distance between two points, in meters.
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let lat_a = a.lat.to_radians();
    let lat_b = b.lat.to_radians();
    let d_lat = (b.lat - a.lat).to_radians();
    let d_lon = (b.lon - a.lon).to_radians();

    let s_lat = (d_lat / 2.0).sin();
    let s_lon = (d_lon / 2.0).sin();
    let h = s_lat * s_lat + lat_a.cos() * lat_b.cos() * s_lon * s_lon;
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Anything that sits somewhere on the globe.
pub trait Located {
    fn location(&self) -> GeoPoint;
}

impl Located for GeoPoint {
    fn location(&self) -> GeoPoint {
        *self
    }
}

impl Located for Station {
    fn location(&self) -> GeoPoint {
        self.location
    }
}

impl Located for TrafficPoint {
    fn location(&self) -> GeoPoint {
        self.location
    }
}

impl Located for SchoolPoint {
    fn location(&self) -> GeoPoint {
        self.location
    }
}

/// Points within `radius_m` of `center`, boundary inclusive.
pub fn points_within<T: Located>(center: GeoPoint, points: &[T], radius_m: f64) -> Vec<&T> {
    points
        .iter()
        .filter(|p| haversine_m(center, p.location()) <= radius_m)
        .collect()
}

/// Mean traffic counts near one station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationTraffic {
    pub station_id: StationId,
    pub n_points_in_radius: usize,
    /// Arithmetic means per band; `None` when no detector falls inside the
    /// radius — absence of detectors is not zero traffic.
    pub means: Option<TrafficMeans>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficMeans {
    pub night: f64,
    pub day: f64,
    pub evening: f64,
}

impl TrafficMeans {
    pub fn for_band(&self, band: TimeBand) -> f64 {
        match band {
            TimeBand::Night => self.night,
            TimeBand::Day => self.day,
            TimeBand::Evening => self.evening,
        }
    }
}

/// Per-band arithmetic mean of the detector counts within the radius of
/// each station. Counts are linear quantities, unlike dB, so the plain
/// mean is the right aggregate.
pub fn station_traffic(
    stations: &[Station],
    traffic: &[TrafficPoint],
    radius_m: f64,
) -> Vec<StationTraffic> {
    stations
        .iter()
        .map(|station| {
            let near = points_within(station.location, traffic, radius_m);
            let means = if near.is_empty() {
                None
            } else {
                let n = near.len() as f64;
                Some(TrafficMeans {
                    night: near.iter().map(|p| p.counts.night).sum::<f64>() / n,
                    day: near.iter().map(|p| p.counts.day).sum::<f64>() / n,
                    evening: near.iter().map(|p| p.counts.evening).sum::<f64>() / n,
                })
            };
            StationTraffic {
                station_id: station.station_id.clone(),
                n_points_in_radius: near.len(),
                means,
            }
        })
        .collect()
}

/// Number of schools within the radius of each station.
pub fn school_count(
    stations: &[Station],
    schools: &[SchoolPoint],
    radius_m: f64,
) -> Vec<(StationId, usize)> {
    stations
        .iter()
        .map(|s| {
            (
                s.station_id.clone(),
                points_within(s.location, schools, radius_m).len(),
            )
        })
        .collect()
}

/// Two-variable fit summary for the traffic-noise scatter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

/// OLS of mean noise on mean traffic with the coefficient of determination
/// R² = 1 − RSS/TSS. A response with no variance explains nothing and
/// reports R² = 0.
pub fn noise_traffic_fit(points: &[(f64, f64)]) -> Result<FitSummary> {
    let n = points.len();
    if n < 3 {
        return Err(Error::InsufficientData {
            context: "noise_traffic_fit",
            required: 3,
            actual: n,
        });
    }
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let fit = ols_fit(&y, &x, crate::trend::DEFAULT_ALPHA)?;

    let y_mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();
    let rss: f64 = points
        .iter()
        .map(|&(xi, yi)| {
            let r = yi - fit.intercept - fit.slope * xi;
            r * r
        })
        .sum();
    let r_squared = if tss <= 0.0 {
        0.0
    } else {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    };

    Ok(FitSummary {
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared,
        n,
    })
}
