//! Design goals: which metrics are extracted from a sweep and when a design
//! counts as having reached the target.

use serde::{Deserialize, Serialize};

use crate::criteria::{band_target, CriterionSpec, PerformanceVector};
use crate::simulator::{S11Curve, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GoalKind {
    /// `sum_i |S11|(f_i) <= threshold`.
    PointSum { freqs: Vec<f64>, threshold: f64 },
    /// `|S11|(f_i) <= thresholds[i]` for every point.
    PerPoint { freqs: Vec<f64>, thresholds: Vec<f64> },
    /// Every band target at `level` is zero.
    Band { bands: Vec<(f64, f64)>, level: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: GoalKind,
    /// Number of distinct goal-meeting designs that ends a run.
    pub required_valid: usize,
}

impl GoalSpec {
    /// `|S11| <= -10 dB` at both 2.4 and 5.9 GHz.
    pub fn dual_resonance() -> Self {
        Self {
            name: "dual_resonance".into(),
            kind: GoalKind::PerPoint {
                freqs: vec![2.4, 5.9],
                thresholds: vec![-10.0, -10.0],
            },
            required_valid: 1,
        }
    }

    /// `|S11|(2.4) + |S11|(5.9) <= -20 dB`.
    pub fn dual_resonance_sum() -> Self {
        Self {
            name: "dual_resonance_sum".into(),
            kind: GoalKind::PointSum {
                freqs: vec![2.4, 5.9],
                threshold: -20.0,
            },
            required_valid: 1,
        }
    }

    /// `|S11| <= -10 dB` over 2.3-2.5 GHz and 5.1-7.2 GHz.
    pub fn broadband() -> Self {
        Self {
            name: "broadband".into(),
            kind: GoalKind::Band {
                bands: vec![(2.3, 2.5), (5.1, 7.2)],
                level: -10.0,
            },
            required_valid: 1,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "dual_resonance" => Some(Self::dual_resonance()),
            "dual_resonance_sum" => Some(Self::dual_resonance_sum()),
            "broadband" => Some(Self::broadband()),
            _ => None,
        }
    }

    pub fn metric_count(&self) -> usize {
        match &self.kind {
            GoalKind::PointSum { freqs, .. } | GoalKind::PerPoint { freqs, .. } => freqs.len(),
            GoalKind::Band { bands, .. } => bands.len(),
        }
    }

    /// Metric names used as column headers in exports.
    pub fn metric_names(&self) -> Vec<String> {
        match &self.kind {
            GoalKind::PointSum { freqs, .. } | GoalKind::PerPoint { freqs, .. } => {
                freqs.iter().map(|f| format!("s11_at_{f}ghz")).collect()
            }
            GoalKind::Band { bands, .. } => bands.iter().map(|(a, b)| format!("band_{a}_{b}ghz")).collect(),
        }
    }

    /// Point goals read the nearest sweep sample; band goals compute the
    /// band target per band.
    pub fn metrics(&self, curve: &S11Curve) -> Result<PerformanceVector, SimError> {
        let values = match &self.kind {
            GoalKind::PointSum { freqs, .. } | GoalKind::PerPoint { freqs, .. } => freqs
                .iter()
                .map(|&f| curve.at_nearest(f))
                .collect::<Result<Vec<_>, _>>()?,
            GoalKind::Band { bands, level } => bands
                .iter()
                .map(|&b| band_target(curve, b, *level))
                .collect::<Result<Vec<_>, _>>()?,
        };
        Ok(PerformanceVector::new(values)?)
    }

    /// Scalar to minimize: the plain sum of the metrics (the total target
    /// function for band goals).
    pub fn score(&self, p: &PerformanceVector) -> f64 {
        p.sum()
    }

    pub fn is_met(&self, p: &PerformanceVector) -> bool {
        match &self.kind {
            GoalKind::PointSum { threshold, .. } => p.sum() <= *threshold,
            GoalKind::PerPoint { thresholds, .. } => p.0.iter().zip(thresholds).all(|(v, c)| v <= c),
            GoalKind::Band { .. } => p.0.iter().all(|&v| v <= 0.0),
        }
    }

    /// The goal itself expressed as a labeling criterion.
    pub fn as_criterion(&self) -> CriterionSpec {
        match &self.kind {
            GoalKind::PointSum { freqs, threshold } => CriterionSpec::WeightedSum {
                weights: vec![1.0; freqs.len()],
                threshold: *threshold,
            },
            GoalKind::PerPoint { thresholds, .. } => CriterionSpec::PerMetric {
                thresholds: thresholds.clone(),
            },
            GoalKind::Band { bands, .. } => CriterionSpec::PerMetric {
                thresholds: vec![0.0; bands.len()],
            },
        }
    }
}
