//! Streaming moments, concentration half-widths and theoretical sample budgets.

use crate::error::{CfcmError, Result};

/// Welford running mean and population variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance; zero until two values are seen.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }

    /// Sample variance (divides by `count - 1`).
    pub fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    /// Chan's parallel merge.
    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        let n = self.count + other.count;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.count as f64 * other.count as f64 / n as f64);
        self.count = n;
    }
}

const FIXED_SCALE: f64 = (1u64 << 24) as f64;
const FIXED_CLAMP: f64 = (1u64 << 20) as f64;

/// First and second moments of a stream, accumulated in fixed point so that
/// sums are exact and independent of merge order. Values are clamped to
/// `|x| <= 2^20` and quantized to `2^-24`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedMoments {
    count: u64,
    sum: i128,
    sum_sq: i128,
    min: i64,
    max: i64,
}

impl Default for FixedMoments {
    fn default() -> Self {
        FixedMoments {
            count: 0,
            sum: 0,
            sum_sq: 0,
            min: i64::MAX,
            max: i64::MIN,
        }
    }
}

impl FixedMoments {
    pub fn push(&mut self, x: f64) {
        let q = if x.is_finite() {
            (x.clamp(-FIXED_CLAMP, FIXED_CLAMP) * FIXED_SCALE).round() as i64
        } else {
            0
        };
        self.count += 1;
        self.sum += q as i128;
        self.sum_sq += (q as i128) * (q as i128);
        self.min = self.min.min(q);
        self.max = self.max.max(q);
    }

    pub fn merge(&mut self, other: &FixedMoments) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        self.sum as f64 / self.count as f64 / FIXED_SCALE
    }

    /// Population variance, computed from exact integer sums.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as i128;
        // n * sum_sq - sum^2 is exact when it fits; fall back to floats otherwise
        let num = n
            .checked_mul(self.sum_sq)
            .and_then(|a| self.sum.checked_mul(self.sum).map(|b| a - b));
        let var_scaled = match num {
            Some(v) => v as f64 / (n as f64 * n as f64),
            None => {
                let m = self.sum as f64 / n as f64;
                self.sum_sq as f64 / n as f64 - m * m
            }
        };
        (var_scaled / (FIXED_SCALE * FIXED_SCALE)).max(0.0)
    }

    /// Width of the observed value range.
    pub fn range(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.max - self.min) as f64 / FIXED_SCALE
        }
    }

    /// Largest observed magnitude.
    pub fn max_abs(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.max.unsigned_abs().max(self.min.unsigned_abs()) as f64 / FIXED_SCALE
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// Empirical Bernstein: variance-adaptive.
    Bernstein,
    /// Hoeffding for variables confined to an interval of width `X_sup`.
    Hoeffding,
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(CfcmError::invalid(format!(
            "confidence level delta={delta} must lie in (0,1)"
        )))
    }
}

/// Empirical Bernstein half-width
/// `sqrt(2 var ln(3/delta) / count) + 3 x_sup ln(3/delta) / count`.
pub fn bernstein_halfwidth(count: u64, variance: f64, x_sup: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(bernstein_with_log(count, variance, x_sup, (3.0 / delta).ln()))
}

/// The Bernstein half-width with the confidence term `ln(3/delta)` given directly.
pub fn bernstein_with_log(count: u64, variance: f64, x_sup: f64, log_term: f64) -> f64 {
    if count == 0 {
        return f64::INFINITY;
    }
    let c = count as f64;
    (2.0 * variance.max(0.0) * log_term / c).sqrt() + 3.0 * x_sup * log_term / c
}

/// Hoeffding half-width `x_sup * sqrt(ln(2/delta) / (2 count))` for values in a
/// range of width `x_sup`.
pub fn hoeffding_halfwidth(count: u64, x_sup: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if count == 0 {
        return Ok(f64::INFINITY);
    }
    Ok(x_sup * ((2.0 / delta).ln() / (2.0 * count as f64)).sqrt())
}

pub fn confidence_halfwidth(count: u64, variance: f64, x_sup: f64, delta: f64, kind: BoundKind) -> Result<f64> {
    match kind {
        BoundKind::Bernstein => bernstein_halfwidth(count, variance, x_sup, delta),
        BoundKind::Hoeffding => hoeffding_halfwidth(count, x_sup, delta),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetKind {
    /// Single-root phase: `18 eps^-2 tau^2 d_s^2 (1 - 1/n)^-4 ln(2n)`.
    FirstNode,
    /// Marginal gains rooted at S: `2 (eps/15)^-2 tau^2 d^(2 tau + 2) ln(2n)`.
    ForestDelta,
    /// Same as `ForestDelta` with leading constant 8, degree taken over S and T.
    SchurDelta,
}

pub const DEFAULT_R_MAX: u64 = 1 << 24;

/// Unclamped theoretical forest count, as a float (it overflows quickly).
/// The degree is taken as at least 1: with every remaining neighbor grounded
/// the forests are still random, and a zero would collapse the budget.
pub fn sample_budget_raw(kind: BudgetKind, eps: f64, tau: usize, degree: usize, n: usize) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(CfcmError::invalid(format!("eps={eps} must lie in (0,1)")));
    }
    if n < 2 {
        return Err(CfcmError::invalid("budget needs at least two nodes"));
    }
    let tau = tau as f64;
    let d = degree.max(1) as f64;
    let log2n = (2.0 * n as f64).ln();
    let shrink = 1.0 - 1.0 / n as f64;
    Ok(match kind {
        BudgetKind::FirstNode => 18.0 / (eps * eps) * tau * tau * d * d * shrink.powi(-4) * log2n,
        BudgetKind::ForestDelta | BudgetKind::SchurDelta => {
            let lead = if kind == BudgetKind::ForestDelta { 2.0 } else { 8.0 };
            let e = eps / 15.0;
            lead / (e * e) * tau * tau * d.powf(2.0 * tau + 2.0) * log2n
        }
    })
}

/// Ceiling of the theoretical budget, clamped to `[1, r_max]`.
pub fn sample_budget(kind: BudgetKind, eps: f64, tau: usize, degree: usize, n: usize, r_max: u64) -> Result<u64> {
    let raw = sample_budget_raw(kind, eps, tau, degree, n)?;
    let r = raw.ceil();
    Ok(if r.is_nan() || r >= r_max as f64 {
        r_max
    } else {
        (r as u64).clamp(1, r_max.max(1))
    })
}
