//! Quantitative metrics to binary labels, band target functions and
//! percentile thresholds.
//!
//! All metrics are "smaller is better" and comparisons are inclusive, so a
//! metric sitting exactly on its threshold is valid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulator::S11Curve;

/// Slack applied to band edges so grid frequencies such as `2.3` computed
/// as `8 * 230 / 800` are not dropped by rounding.
pub const BAND_EDGE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CriteriaError {
    #[error("expected {expected} metrics, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("no sweep sample inside band [{lo}, {hi}] GHz")]
    EmptyBand { lo: f64, hi: f64 },
    #[error("percentile of an empty list")]
    EmptyList,
    #[error("percentile {0} outside (0, 100]")]
    BadPercentile(f64),
    #[error("non-finite value {0}")]
    NonFinite(f64),
}

/// Performance metrics of one design in dB, e.g. `|S11|` at the goal
/// frequencies or one band target per band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PerformanceVector(pub Vec<f64>);

impl PerformanceVector {
    pub fn new(values: Vec<f64>) -> Result<Self, CriteriaError> {
        if let Some(&v) = values.iter().find(|v| !v.is_finite()) {
            return Err(CriteriaError::NonFinite(v));
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Validity rule over a [`PerformanceVector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CriterionSpec {
    /// Valid iff every `p_i <= c_i`.
    PerMetric { thresholds: Vec<f64> },
    /// Valid iff `sum w_i p_i <= c`.
    WeightedSum { weights: Vec<f64>, threshold: f64 },
}

impl CriterionSpec {
    pub fn metric_count(&self) -> usize {
        match self {
            CriterionSpec::PerMetric { thresholds } => thresholds.len(),
            CriterionSpec::WeightedSum { weights, .. } => weights.len(),
        }
    }

    fn check_len(&self, p: &PerformanceVector) -> Result<(), CriteriaError> {
        if p.len() != self.metric_count() {
            return Err(CriteriaError::LengthMismatch {
                expected: self.metric_count(),
                got: p.len(),
            });
        }
        Ok(())
    }

    /// `true` means valid.
    pub fn label(&self, p: &PerformanceVector) -> Result<bool, CriteriaError> {
        self.check_len(p)?;
        Ok(match self {
            CriterionSpec::PerMetric { thresholds } => p.0.iter().zip(thresholds).all(|(v, c)| v <= c),
            CriterionSpec::WeightedSum { weights, threshold } => weighted(weights, &p.0) <= *threshold,
        })
    }

    /// Weighted sum for [`CriterionSpec::WeightedSum`], `None` otherwise.
    pub fn score(&self, p: &PerformanceVector) -> Result<Option<f64>, CriteriaError> {
        self.check_len(p)?;
        Ok(match self {
            CriterionSpec::PerMetric { .. } => None,
            CriterionSpec::WeightedSum { weights, .. } => Some(weighted(weights, &p.0)),
        })
    }

    /// Thresholds as a list (one entry for weighted sums).
    pub fn thresholds(&self) -> Vec<f64> {
        match self {
            CriterionSpec::PerMetric { thresholds } => thresholds.clone(),
            CriterionSpec::WeightedSum { threshold, .. } => vec![*threshold],
        }
    }

    /// `true` when every threshold of `self` is `<=` the matching one of
    /// `other` and at least one is strictly lower.
    pub fn strictly_tighter_than(&self, other: &CriterionSpec) -> bool {
        let (a, b) = (self.thresholds(), other.thresholds());
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x <= y) && a.iter().zip(&b).any(|(x, y)| x < y)
    }
}

fn weighted(w: &[f64], p: &[f64]) -> f64 {
    w.iter().zip(p).map(|(w, p)| w * p).sum()
}

/// Mean positive excess of `|S11|` over `level` across the sweep samples
/// inside `[lo, hi]`. Zero when the band is fully matched.
pub fn band_target(curve: &S11Curve, band: (f64, f64), level: f64) -> Result<f64, CriteriaError> {
    let (lo, hi) = band;
    let mut n = 0usize;
    let mut total = 0.0;
    for (&f, &s) in curve.freqs().iter().zip(curve.s11()) {
        if f >= lo - BAND_EDGE_TOL && f <= hi + BAND_EDGE_TOL {
            n += 1;
            total += (s - level).max(0.0);
        }
    }
    if n == 0 {
        return Err(CriteriaError::EmptyBand { lo, hi });
    }
    Ok(total / n as f64)
}

/// Nearest-rank percentile: the smallest value with at least `q`% of the
/// list at or below it. The result is always a member of `values`.
pub fn percentile_threshold(values: &[f64], q: f64) -> Result<f64, CriteriaError> {
    if values.is_empty() {
        return Err(CriteriaError::EmptyList);
    }
    if !(q > 0.0 && q <= 100.0) {
        return Err(CriteriaError::BadPercentile(q));
    }
    if let Some(&v) = values.iter().find(|v| !v.is_finite()) {
        return Err(CriteriaError::NonFinite(v));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}
