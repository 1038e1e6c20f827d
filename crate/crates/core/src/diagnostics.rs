//! Linearity diagnostic based on the cross-correlation between a centered
//! series and its square.
//!
//! For a linear system the cross-correlation ϕ_{y′,y′²}(τ) of y′ = y − ȳ
//! with (y′)² is statistically zero at every lag, so a series whose ϕ stays
//! inside ±1.96/√n can be treated as linear. The numerator sums over the
//! N−τ overlapping terms; the denominator uses sums of squared deviations
//! over the full series, the normalization that keeps |ϕ| ≤ 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default largest lag examined.
pub const DEFAULT_MAX_LAG: usize = 50;

/// How the per-lag band translates into a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictRule {
    /// Linear only when every lag stays inside the band.
    Strict,
    /// Linear when at least 95% of lags stay inside the band, reading the
    /// band as a pointwise 95% interval.
    Fraction95,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinearityVerdict {
    Linear,
    Nonlinear,
}

/// ϕ per lag together with the confidence band and the verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearityDiagnostic {
    /// ϕ(τ) for τ = 0..=max_lag.
    pub phi: Vec<f64>,
    /// 1.96/√n.
    pub bound: f64,
    pub verdict: LinearityVerdict,
    pub n: usize,
    pub rule: VerdictRule,
}

impl LinearityDiagnostic {
    /// Fraction of lags inside the band.
    pub fn inside_fraction(&self) -> f64 {
        let inside = self.phi.iter().filter(|p| p.abs() <= self.bound).count();
        inside as f64 / self.phi.len() as f64
    }
}

/// Subtract the mean: y′ = y − ȳ.
pub fn center(y: &[f64]) -> Result<Vec<f64>> {
    if y.len() < 2 {
        return Err(Error::InsufficientData {
            context: "center",
            required: 2,
            actual: y.len(),
        });
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    Ok(y.iter().map(|v| v - mean).collect())
}

/// Normalized cross-correlation of the centered series with its square at
/// lag τ. Errors when either deviation sum is zero, which makes the
/// diagnostic undefined (for example a constant or a ±c alternating
/// series, whose square is constant).
pub fn phi(y_centered: &[f64], lag: usize) -> Result<f64> {
    let n = y_centered.len();
    if n < 2 || lag > n - 2 {
        return Err(Error::InsufficientData {
            context: "phi",
            required: lag + 2,
            actual: n,
        });
    }
    let mean_c = y_centered.iter().sum::<f64>() / n as f64;
    let sq: Vec<f64> = y_centered.iter().map(|v| v * v).collect();
    let mean_sq = sq.iter().sum::<f64>() / n as f64;

    let denom_y: f64 = y_centered.iter().map(|v| (v - mean_c) * (v - mean_c)).sum();
    let denom_sq: f64 = sq.iter().map(|v| (v - mean_sq) * (v - mean_sq)).sum();
    if denom_y <= 0.0 || denom_sq <= 0.0 {
        return Err(Error::UndefinedDiagnostic(
            "zero variance in the centered series or its square",
        ));
    }

    let mut num = 0.0;
    for t in 0..(n - lag) {
        num += (y_centered[t] - mean_c) * (sq[t + lag] - mean_sq);
    }
    Ok(num / (denom_y.sqrt() * denom_sq.sqrt()))
}

/// Evaluate ϕ for all lags 0..=max_lag and apply the band ±1.96/√n.
///
/// Requires n ≥ max_lag + 2 and n ≥ 30, the regime where the normal band
/// is trustworthy.
pub fn linearity_test(y: &[f64], max_lag: usize, rule: VerdictRule) -> Result<LinearityDiagnostic> {
    let n = y.len();
    let required = (max_lag + 2).max(30);
    if n < required {
        return Err(Error::InsufficientData {
            context: "linearity_test",
            required,
            actual: n,
        });
    }
    let centered = center(y)?;
    let mut phis = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        phis.push(phi(&centered, lag)?);
    }
    let bound = 1.96 / (n as f64).sqrt();
    let inside = phis.iter().filter(|p| p.abs() <= bound).count();
    let linear = match rule {
        VerdictRule::Strict => inside == phis.len(),
        VerdictRule::Fraction95 => inside as f64 >= 0.95 * phis.len() as f64,
    };
    Ok(LinearityDiagnostic {
        phi: phis,
        bound,
        verdict: if linear {
            LinearityVerdict::Linear
        } else {
            LinearityVerdict::Nonlinear
        },
        n,
        rule,
    })
}
