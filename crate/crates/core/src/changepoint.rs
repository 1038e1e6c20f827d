//! Change-point detection on noise series.
//!
//! A change at τ splits a series into `y[..=τ-1]` and `y[τ..]` (τ counts the
//! points left of the split). The split minimizes the sum of per-segment
//! costs plus a penalty γ = d·log n, and no change is declared when even the
//! best split fails to beat the unsplit cost. The segment cost is the
//! negative maximized Gaussian log-likelihood with per-segment mean and
//! variance, which responds to both level and spread changes:
//!
//!   C(y_i..y_j) = (m/2)·(log 2π + log σ̂² + 1),  m = j−i+1,
//!
//! with σ̂² the MLE variance floored to keep constant segments finite.
//! Multiple change points use pruned exact dynamic programming with the
//! same cost, giving linear expected runtime.

use std::collections::BTreeMap;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HourlyMetrics, StationId};

/// Tuning knobs for detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangePointParams {
    /// Shortest admissible segment; the variance MLE needs several points.
    pub min_segment_len: usize,
    /// Lower bound on σ̂² (dB²) so constant segments keep finite cost.
    pub variance_floor: f64,
    /// Extra model parameters charged per change point: location plus one
    /// additional mean and one additional variance.
    pub penalty_dim: f64,
}

impl ChangePointParams {
    /// BIC-style penalty for a series of length n.
    pub fn penalty(&self, n: usize) -> f64 {
        self.penalty_dim * (n as f64).ln()
    }
}

impl Default for ChangePointParams {
    fn default() -> Self {
        ChangePointParams {
            min_segment_len: 5,
            variance_floor: 1e-8,
            penalty_dim: 3.0,
        }
    }
}

/// Prefix sums of y and y², giving any segment's Gaussian cost in O(1).
#[derive(Debug, Clone)]
pub struct SegmentStats {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    variance_floor: f64,
}

impl SegmentStats {
    pub fn new(y: &[f64], variance_floor: f64) -> Self {
        let mut sum = Vec::with_capacity(y.len() + 1);
        let mut sum_sq = Vec::with_capacity(y.len() + 1);
        sum.push(0.0);
        sum_sq.push(0.0);
        for &v in y {
            sum.push(sum.last().unwrap() + v);
            sum_sq.push(sum_sq.last().unwrap() + v * v);
        }
        SegmentStats {
            sum,
            sum_sq,
            variance_floor,
        }
    }

    pub fn len(&self) -> usize {
        self.sum.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Segment mean over the inclusive index range [i, j].
    pub fn mean(&self, i: usize, j: usize) -> f64 {
        let m = (j - i + 1) as f64;
        (self.sum[j + 1] - self.sum[i]) / m
    }

    /// MLE variance over [i, j], floored.
    pub fn variance(&self, i: usize, j: usize) -> f64 {
        let m = (j - i + 1) as f64;
        let mean = self.mean(i, j);
        let raw = (self.sum_sq[j + 1] - self.sum_sq[i]) / m - mean * mean;
        raw.max(self.variance_floor)
    }
}

/// Negative maximized Gaussian log-likelihood of the segment [i, j]
/// (inclusive, 0-based).
pub fn gaussian_cost(stats: &SegmentStats, i: usize, j: usize) -> f64 {
    assert!(i <= j && j < stats.len(), "segment [{i}, {j}] out of range");
    let m = (j - i + 1) as f64;
    let var = stats.variance(i, j);
    0.5 * m * ((2.0 * std::f64::consts::PI).ln() + var.ln() + 1.0)
}

/// Split verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Change,
    NoChange,
}

/// Outcome of single change-point detection.
///
/// `tau` is the size of the left segment, present only under a `Change`
/// verdict; the cost fields always describe the best candidate split so a
/// `NoChange` outcome stays auditable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePointResult {
    pub tau: Option<usize>,
    pub cost_left: f64,
    pub cost_right: f64,
    pub cost_unsplit: f64,
    pub penalty: f64,
    pub verdict: Verdict,
    /// Timestamp of the first post-change observation, filled in by
    /// [`changepoint_report`].
    pub changed_at: Option<NaiveDateTime>,
}

/// Best single split of `y`, or `NoChange` when no split beats the unsplit
/// cost by more than the penalty. Ties go to the smallest τ.
pub fn detect_single(y: &[f64], params: &ChangePointParams) -> Result<ChangePointResult> {
    let n = y.len();
    let min_len = params.min_segment_len;
    if n < 2 * min_len {
        return Err(Error::InsufficientData {
            context: "detect_single",
            required: 2 * min_len,
            actual: n,
        });
    }

    let stats = SegmentStats::new(y, params.variance_floor);
    let penalty = params.penalty(n);
    let cost_unsplit = gaussian_cost(&stats, 0, n - 1);

    let mut best_tau = min_len;
    let mut best_split = f64::INFINITY;
    let mut best_left = 0.0;
    let mut best_right = 0.0;
    for tau in min_len..=(n - min_len) {
        let left = gaussian_cost(&stats, 0, tau - 1);
        let right = gaussian_cost(&stats, tau, n - 1);
        let total = left + right;
        if total < best_split {
            best_split = total;
            best_tau = tau;
            best_left = left;
            best_right = right;
        }
    }

    let verdict = if best_split + penalty >= cost_unsplit {
        Verdict::NoChange
    } else {
        Verdict::Change
    };

    Ok(ChangePointResult {
        tau: match verdict {
            Verdict::Change => Some(best_tau),
            Verdict::NoChange => None,
        },
        cost_left: best_left,
        cost_right: best_right,
        cost_unsplit,
        penalty,
        verdict,
        changed_at: None,
    })
}

/// All change points of `y` by pruned exact dynamic programming, charging
/// the penalty once per change point. Returns left-segment sizes, sorted
/// ascending; an empty list means no change.
///
/// The Gaussian cost is subadditive, so candidates whose partial objective
/// already exceeds the current optimum can never re-enter the optimal
/// segmentation and are dropped, which keeps expected runtime linear.
pub fn detect_multiple(y: &[f64], params: &ChangePointParams) -> Result<Vec<usize>> {
    let n = y.len();
    let min_len = params.min_segment_len;
    if n < 2 * min_len {
        return Err(Error::InsufficientData {
            context: "detect_multiple",
            required: 2 * min_len,
            actual: n,
        });
    }

    let stats = SegmentStats::new(y, params.variance_floor);
    let penalty = params.penalty(n);

    // f[t]: minimal penalized cost of segmenting y[..t]; f[0] = -γ so the
    // first segment is not charged.
    let mut f = vec![f64::INFINITY; n + 1];
    f[0] = -penalty;
    let mut prev = vec![0usize; n + 1];
    let mut candidates: Vec<usize> = vec![0];

    let mut partials: Vec<f64> = Vec::new();
    for t in min_len..=n {
        let mut best = f64::INFINITY;
        let mut best_s = 0;
        partials.clear();
        for &s in &candidates {
            if t - s < min_len {
                partials.push(f64::NEG_INFINITY);
                continue;
            }
            let partial = f[s] + gaussian_cost(&stats, s, t - 1);
            partials.push(partial);
            if partial + penalty < best {
                best = partial + penalty;
                best_s = s;
            }
        }
        f[t] = best;
        prev[t] = best_s;

        let mut keep = partials.iter().map(|&p| p <= f[t]);
        candidates.retain(|_| keep.next().unwrap());
        candidates.push(t);
    }

    let mut taus = Vec::new();
    let mut t = n;
    while t > 0 {
        let s = prev[t];
        if s > 0 {
            taus.push(s);
        }
        t = s;
    }
    taus.reverse();
    Ok(taus)
}

/// The penalized single-split objective C(left) + C(right) + γ at every
/// admissible τ, for plotting against the unsplit cost.
pub fn objective_curve(y: &[f64], params: &ChangePointParams) -> Result<Vec<(usize, f64)>> {
    let n = y.len();
    let min_len = params.min_segment_len;
    if n < 2 * min_len {
        return Err(Error::InsufficientData {
            context: "objective_curve",
            required: 2 * min_len,
            actual: n,
        });
    }
    let stats = SegmentStats::new(y, params.variance_floor);
    let penalty = params.penalty(n);
    Ok((min_len..=(n - min_len))
        .map(|tau| {
            (
                tau,
                gaussian_cost(&stats, 0, tau - 1) + gaussian_cost(&stats, tau, n - 1) + penalty,
            )
        })
        .collect())
}

/// Penalized objective of a given segmentation: Σ segment costs plus γ per
/// change point. Used to cross-check the pruned search against exhaustive
/// alternatives.
pub fn segmentation_objective(y: &[f64], taus: &[usize], params: &ChangePointParams) -> f64 {
    let stats = SegmentStats::new(y, params.variance_floor);
    let n = y.len();
    let mut cost = params.penalty(n) * taus.len() as f64;
    let mut start = 0usize;
    for &tau in taus {
        cost += gaussian_cost(&stats, start, tau - 1);
        start = tau;
    }
    cost + gaussian_cost(&stats, start, n - 1)
}

/// Per-station detection outcome with the change mapped back to the clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationChangePoint {
    pub station_id: StationId,
    pub result: std::result::Result<ChangePointResult, String>,
    /// Change instants under multiple-change detection; `None` in
    /// single-change mode.
    pub multiple: Option<Vec<NaiveDateTime>>,
}

/// Detection mode for the station report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectionMode {
    Single,
    Multiple,
}

/// Run detection on each station's hourly average series and map τ back to
/// the hour it starts: the change instant is the hour_start of the first
/// post-change observation. Per-station failures are reported as messages
/// and the run continues.
pub fn changepoint_report(
    hourly_by_station: &BTreeMap<StationId, Vec<HourlyMetrics>>,
    params: &ChangePointParams,
    mode: DetectionMode,
) -> Vec<StationChangePoint> {
    hourly_by_station
        .iter()
        .map(|(station_id, hours)| {
            let y: Vec<f64> = hours.iter().map(|h| h.avg.value()).collect();
            let single = detect_single(&y, params).map(|mut r| {
                r.changed_at = r.tau.map(|tau| hours[tau].hour_start);
                r
            });
            let multiple = match mode {
                DetectionMode::Single => None,
                DetectionMode::Multiple => detect_multiple(&y, params)
                    .map(|taus| taus.iter().map(|&tau| hours[tau].hour_start).collect())
                    .ok(),
            };
            StationChangePoint {
                station_id: station_id.clone(),
                result: single.map_err(|e| e.to_string()),
                multiple,
            }
        })
        .collect()
}
