//! Ordinary least squares trend fitting with slope significance.
//!
//! Fits y = β0 + β1·t by the closed-form normal equations and tests
//! H0: β1 = 0 with a two-sided Student-t test on n−2 degrees of freedom.

use serde::{Deserialize, Serialize};

use crate::aggregate::BandDailySeries;
use crate::error::{Error, Result};
use crate::model::{StationId, TimeBand};
use crate::stats::student_t_two_sided_p;

/// Default significance level for the slope test.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Residual sums below this (relative to the response scale) are treated
/// as an exact fit, where the usual t machinery degenerates.
const EXACT_FIT_REL_TOL: f64 = 1e-12;

/// Outcome of a single OLS fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendResult {
    /// Slope, in response units per time-step of the `t` axis supplied by
    /// the caller (dB per band-day for band series, dB per hour for hourly
    /// series).
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub t_stat: f64,
    pub p_value: f64,
    /// p < alpha for the alpha this fit was run at.
    pub significant: bool,
    pub n: usize,
    /// Residual variance was indistinguishable from zero.
    pub exact_fit: bool,
}

impl TrendResult {
    pub fn significant_at(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Least-squares line through (t_i, y_i) with slope inference at level
/// `alpha`.
///
/// Requires n ≥ 3 and non-constant t. A perfectly fit line (zero residual
/// variance) reports `exact_fit` with p = 0 for a nonzero slope; a constant
/// series fits exactly with slope 0 and carries no evidence against H0, so
/// its p is 1.
pub fn ols_fit(y: &[f64], t: &[f64], alpha: f64) -> Result<TrendResult> {
    let n = y.len();
    if n < 3 || t.len() != n {
        return Err(Error::InsufficientData {
            context: "ols_fit",
            required: 3,
            actual: n.min(t.len()),
        });
    }
    let nf = n as f64;
    let t_mean = t.iter().sum::<f64>() / nf;
    let y_mean = y.iter().sum::<f64>() / nf;

    let mut s_tt = 0.0;
    let mut s_ty = 0.0;
    for i in 0..n {
        let dt = t[i] - t_mean;
        s_tt += dt * dt;
        s_ty += dt * (y[i] - y_mean);
    }
    if s_tt <= 0.0 {
        return Err(Error::DegenerateDesign);
    }

    let slope = s_ty / s_tt;
    let intercept = y_mean - slope * t_mean;

    let rss: f64 = (0..n)
        .map(|i| {
            let r = y[i] - intercept - slope * t[i];
            r * r
        })
        .sum();

    let y_scale = y.iter().map(|v| v * v).sum::<f64>().max(1.0);
    let exact_fit = rss <= EXACT_FIT_REL_TOL * y_scale;

    let (slope_se, t_stat, p_value) = if exact_fit {
        if slope == 0.0 {
            // A constant series: the zero slope is exact but uninformative.
            (0.0, 0.0, 1.0)
        } else {
            (0.0, f64::INFINITY, 0.0)
        }
    } else {
        let s2 = rss / (nf - 2.0);
        let se = (s2 / s_tt).sqrt();
        let t_stat = slope / se;
        (se, t_stat, student_t_two_sided_p(t_stat, nf - 2.0))
    };

    Ok(TrendResult {
        slope,
        intercept,
        slope_se,
        t_stat,
        p_value,
        significant: p_value < alpha,
        n,
        exact_fit,
    })
}

/// Which hourly metric a band-series trend is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    Avg,
    Max,
    Min,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Avg, Metric::Max, Metric::Min];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Avg => "avg",
            Metric::Max => "max",
            Metric::Min => "min",
        }
    }
}

/// One cell of the station × band × metric trend matrix. `result` is None
/// when the cell's series was too short to fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCell {
    pub station_id: StationId,
    pub band: TimeBand,
    pub metric: Metric,
    pub result: Option<TrendResult>,
}

/// Trend of a single station's hourly average series, the alternative
/// granularity to [`band_trends`]. The time axis is hours since the first
/// entry, so the slope reads as dB per hour.
pub fn hourly_trend(hours: &[crate::model::HourlyMetrics], alpha: f64) -> Result<TrendResult> {
    let first = hours.first().ok_or(Error::InsufficientData {
        context: "hourly_trend",
        required: 3,
        actual: 0,
    })?;
    let t: Vec<f64> = hours
        .iter()
        .map(|h| (h.hour_start - first.hour_start).num_seconds() as f64 / 3600.0)
        .collect();
    let y: Vec<f64> = hours.iter().map(|h| h.avg.value()).collect();
    ols_fit(&y, &t, alpha)
}

/// Fit a trend per (station, band, metric) over band-daily series.
///
/// The time axis is calendar days since each series' first entry, so gaps
/// in the record keep their true spacing and slopes read as dB per day.
/// Cells with insufficient data are marked unavailable and the run
/// continues.
pub fn band_trends(series: &[BandDailySeries], alpha: f64) -> Vec<TrendCell> {
    let mut cells = Vec::with_capacity(series.len() * Metric::ALL.len());
    for s in series {
        let t: Vec<f64> = match s.entries.first() {
            Some(first) => s
                .entries
                .iter()
                .map(|e| (e.date - first.date).num_days() as f64)
                .collect(),
            None => Vec::new(),
        };
        for metric in Metric::ALL {
            let y: Vec<f64> = s
                .entries
                .iter()
                .map(|e| match metric {
                    Metric::Avg => e.avg.value(),
                    Metric::Max => e.max.value(),
                    Metric::Min => e.min.value(),
                })
                .collect();
            let result = ols_fit(&y, &t, alpha).ok();
            cells.push(TrendCell {
                station_id: s.station_id.clone(),
                band: s.band,
                metric,
                result,
            });
        }
    }
    cells
}
