//! Robust and streaming summary statistics.
//!
//! Quantiles use the Hazen plotting position `(i - 0.5) / n`: for a level
//! `q` the fractional rank is `h = q * n + 0.5`, clamped to `[1, n]`, and the
//! result interpolates linearly between the neighbouring order statistics.

use serde::{Deserialize, Serialize};

/// Errors raised by the summary statistics helpers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Hazen `q`-quantile of `values`. `q` is clamped into `[0, 1]`.
pub fn hazen_quantile(values: &[f64], q: f64) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(hazen_quantile_sorted(&sorted, q))
}

/// Same as [`hazen_quantile`] for input already sorted ascending and nonempty.
pub(crate) fn hazen_quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    let q = if q.is_nan() { 0.5 } else { q.clamp(0.0, 1.0) };
    let h = (q * n as f64 + 0.5).clamp(1.0, n as f64);
    let lo = h.floor();
    let frac = h - lo;
    let lo = lo as usize - 1;
    let hi = (lo + 1).min(n - 1);
    if frac == 0.0 || lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn hazen_median(values: &[f64]) -> Result<f64, StatsError> {
    hazen_quantile(values, 0.5)
}

/// Hazen interquartile range `Q75 - Q25`.
pub fn hazen_iqr(values: &[f64]) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(hazen_iqr_sorted(&sorted))
}

pub(crate) fn hazen_iqr_sorted(sorted: &[f64]) -> f64 {
    (hazen_quantile_sorted(sorted, 0.75) - hazen_quantile_sorted(sorted, 0.25)).max(0.0)
}

/// `median + 1.5 * IQR` of a multiset, the outlier fence used for graph pruning.
pub(crate) fn upper_fence(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(hazen_quantile_sorted(&sorted, 0.5) + 1.5 * hazen_iqr_sorted(&sorted))
}

/// Coefficient of variation (population std over mean).
///
/// Returns `None` for an empty input or a nonpositive mean.
pub fn coefficient_of_variation(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if !mean.is_finite() || mean <= 0.0 {
        return None;
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some(var.sqrt() / mean)
}

/// Per-feature running mean and sum of squared deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfordState {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl WelfordState {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn m2(&self) -> &[f64] {
        &self.m2
    }

    pub fn update(&mut self, x: &[f64]) -> Result<(), StatsError> {
        if x.len() != self.dim() {
            return Err(StatsError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        self.count += 1;
        let n = self.count as f64;
        for ((mean, m2), &value) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = value - *mean;
            *mean += delta / n;
            *m2 += delta * (value - *mean);
            if *m2 < 0.0 {
                *m2 = 0.0;
            }
        }
        Ok(())
    }

    /// Sample standard deviation per feature (`n - 1` denominator); all zeros
    /// before two samples have been seen.
    pub fn std(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.dim()];
        }
        let denom = (self.count - 1) as f64;
        self.m2.iter().map(|m2| (m2 / denom).sqrt()).collect()
    }
}
