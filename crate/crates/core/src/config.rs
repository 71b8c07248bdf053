//! Evaluation configuration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::longitudinal::ToleranceConfig;
use crate::matching::Matcher;
use crate::records::ClassLabel;
use crate::scalar::Scalar;

/// Distinct scores are used as cutoffs up to this many; beyond it the
/// default schedule switches to this many quantiles.
pub const DEFAULT_MAX_CUTOFFS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid tolerance: {0}")]
    Tolerance(String),
    #[error("IoU threshold for {class} must be in (0, 1), got {value}")]
    IouThreshold { class: String, value: f64 },
    #[error("invalid range bins: {0}")]
    RangeBins(String),
    #[error("invalid cutoff schedule: {0}")]
    CutoffSchedule(String),
}

/// Half-open range interval `[min, max)` in meters; `max = None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeBin<T> {
    pub min: T,
    pub max: Option<T>,
}

impl<T: Scalar> RangeBin<T> {
    pub fn new(min: T, max: Option<T>) -> Self {
        Self { min, max }
    }

    pub fn everything() -> Self {
        Self { min: T::zero(), max: None }
    }

    pub fn contains(&self, range: T) -> bool {
        range >= self.min && self.max.is_none_or(|m| range < m)
    }

    /// `"0-30"`, `"50-inf"`; the full range is `"all"`.
    pub fn label(&self) -> String {
        match self.max {
            None if self.min == T::zero() => "all".to_string(),
            None => format!("{}-inf", self.min),
            Some(m) => format!("{}-{}", self.min, m),
        }
    }
}

/// How score cutoffs for the PR curve are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CutoffSchedule<T> {
    /// Every distinct prediction score, falling back to `max_cutoffs`
    /// quantiles when there are more. Cutoff 0 is always appended.
    DistinctScores { max_cutoffs: usize },
    /// `n` score quantiles plus cutoff 0.
    Quantiles { n: usize },
    /// Fixed, strictly decreasing cutoffs in `[0, 1]`.
    Explicit { cutoffs: Vec<T> },
}

impl<T> Default for CutoffSchedule<T> {
    fn default() -> Self {
        CutoffSchedule::DistinctScores { max_cutoffs: DEFAULT_MAX_CUTOFFS }
    }
}

impl<T: Scalar> CutoffSchedule<T> {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            CutoffSchedule::DistinctScores { max_cutoffs: n } | CutoffSchedule::Quantiles { n } => {
                if *n < 2 {
                    return Err(ConfigError::CutoffSchedule(format!("need at least 2 quantiles, got {n}")));
                }
            }
            CutoffSchedule::Explicit { cutoffs } => {
                if cutoffs.is_empty() {
                    return Err(ConfigError::CutoffSchedule("explicit schedule is empty".into()));
                }
                if cutoffs.iter().any(|c| !(*c >= T::zero() && *c <= T::one())) {
                    return Err(ConfigError::CutoffSchedule("cutoffs must lie in [0, 1]".into()));
                }
                if cutoffs.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(ConfigError::CutoffSchedule("cutoffs must be strictly decreasing".into()));
                }
            }
        }
        Ok(())
    }

    /// Concrete cutoffs for a set of scores, strictly decreasing.
    pub fn cutoffs(&self, scores: &[T]) -> Vec<T> {
        let mut distinct: Vec<T> = scores.to_vec();
        distinct.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        distinct.dedup();
        let mut out = match self {
            CutoffSchedule::Explicit { cutoffs } => return cutoffs.clone(),
            CutoffSchedule::DistinctScores { max_cutoffs } if distinct.len() <= *max_cutoffs => distinct,
            CutoffSchedule::DistinctScores { max_cutoffs: n } | CutoffSchedule::Quantiles { n } => {
                quantiles(&distinct, *n)
            }
        };
        if out.last().is_none_or(|&c| c > T::zero()) {
            out.push(T::zero());
        }
        out
    }
}

/// `n` evenly spaced order statistics of a descending sequence.
fn quantiles<T: Scalar>(descending: &[T], n: usize) -> Vec<T> {
    if descending.len() <= n {
        return descending.to_vec();
    }
    let last = descending.len() - 1;
    let mut out: Vec<T> = (0..n)
        .map(|k| descending[((k * last) as f64 / (n - 1) as f64).round() as usize])
        .collect();
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig<T> {
    pub tolerance: ToleranceConfig<T>,
    /// Per-class IoU thresholds for both 3D AP and LET matching.
    pub iou_thresholds: BTreeMap<ClassLabel, T>,
    /// Threshold for classes missing from `iou_thresholds`.
    pub default_iou_threshold: T,
    pub matcher: Matcher,
    pub cutoff_schedule: CutoffSchedule<T>,
    /// Contiguous bins covering `[0, inf)`.
    pub range_bins: Vec<RangeBin<T>>,
}

impl<T: Scalar> Default for EvalConfig<T> {
    /// 10% tolerance with a 0.5 m floor, IoU 0.5 / 0.3 / 0.3 for vehicles,
    /// pedestrians and cyclists, and range bins [0, 30), [30, 50), [50, inf).
    fn default() -> Self {
        let iou_thresholds = BTreeMap::from([
            (ClassLabel::Vehicle, T::lit(0.5)),
            (ClassLabel::Pedestrian, T::lit(0.3)),
            (ClassLabel::Cyclist, T::lit(0.3)),
        ]);
        Self {
            tolerance: ToleranceConfig::default(),
            iou_thresholds,
            default_iou_threshold: T::lit(0.5),
            matcher: Matcher::Hungarian,
            cutoff_schedule: CutoffSchedule::default(),
            range_bins: vec![
                RangeBin::new(T::zero(), Some(T::lit(30.0))),
                RangeBin::new(T::lit(30.0), Some(T::lit(50.0))),
                RangeBin::new(T::lit(50.0), None),
            ],
        }
    }
}

impl<T: Scalar> EvalConfig<T> {
    pub fn iou_threshold(&self, class: &ClassLabel) -> T {
        self.iou_thresholds.get(class).copied().unwrap_or(self.default_iou_threshold)
    }

    /// Same config with every class threshold replaced by `threshold`.
    pub fn with_uniform_iou_threshold(mut self, threshold: T) -> Self {
        for v in self.iou_thresholds.values_mut() {
            *v = threshold;
        }
        self.default_iou_threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.tolerance.validate().map_err(|e| ConfigError::Tolerance(e.to_string()))?;
        let check = |class: &str, v: T| {
            if v > T::zero() && v < T::one() {
                Ok(())
            } else {
                Err(ConfigError::IouThreshold { class: class.to_string(), value: v.as_f64() })
            }
        };
        for (class, &v) in &self.iou_thresholds {
            check(class.as_str(), v)?;
        }
        check("default", self.default_iou_threshold)?;
        self.cutoff_schedule.validate()?;
        validate_bins(&self.range_bins)
    }
}

fn validate_bins<T: Scalar>(bins: &[RangeBin<T>]) -> Result<(), ConfigError> {
    let first = bins.first().ok_or_else(|| ConfigError::RangeBins("no bins".into()))?;
    if first.min != T::zero() {
        return Err(ConfigError::RangeBins(format!("first bin must start at 0, starts at {}", first.min)));
    }
    for pair in bins.windows(2) {
        match pair[0].max {
            Some(m) if m == pair[1].min && m > pair[0].min => {}
            _ => {
                return Err(ConfigError::RangeBins(format!(
                    "bin {} is not followed contiguously by {}",
                    pair[0].label(),
                    pair[1].label()
                )))
            }
        }
    }
    let last = bins.last().expect("non-empty");
    if last.max.is_some() {
        return Err(ConfigError::RangeBins("last bin must be unbounded".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = EvalConfig::<f64>::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.iou_threshold(&ClassLabel::Vehicle), 0.5);
        assert_eq!(cfg.iou_threshold(&ClassLabel::Cyclist), 0.3);
        assert_eq!(cfg.iou_threshold(&ClassLabel::Other("sign".into())), 0.5);
        let labels: Vec<_> = cfg.range_bins.iter().map(RangeBin::label).collect();
        assert_eq!(labels, ["0-30", "30-50", "50-inf"]);
    }

    #[test]
    fn bins_must_tile_the_half_line() {
        let mut cfg = EvalConfig::<f64>::default();
        cfg.range_bins = vec![RangeBin::new(0.0, Some(30.0)), RangeBin::new(40.0, None)];
        assert!(matches!(cfg.validate(), Err(ConfigError::RangeBins(_))));
        cfg.range_bins = vec![RangeBin::new(0.0, Some(30.0))];
        assert!(cfg.validate().is_err());
        cfg.range_bins = vec![RangeBin::new(5.0, None)];
        assert!(cfg.validate().is_err());
        cfg.range_bins = vec![RangeBin::everything()];
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn thresholds_must_be_open_unit_interval() {
        let mut cfg = EvalConfig::<f64>::default();
        cfg.iou_thresholds.insert(ClassLabel::Vehicle, 1.0);
        assert!(matches!(cfg.validate(), Err(ConfigError::IouThreshold { .. })));
    }

    #[test]
    fn explicit_schedule_validation() {
        let ok = CutoffSchedule::Explicit { cutoffs: vec![0.9, 0.5, 0.0] };
        assert!(ok.validate().is_ok());
        assert!(CutoffSchedule::<f64>::Explicit { cutoffs: vec![] }.validate().is_err());
        assert!(CutoffSchedule::Explicit { cutoffs: vec![0.5, 0.5] }.validate().is_err());
        assert!(CutoffSchedule::Explicit { cutoffs: vec![1.5, 0.5] }.validate().is_err());
    }

    #[test]
    fn distinct_scores_schedule() {
        let s = CutoffSchedule::<f64>::default();
        assert_eq!(s.cutoffs(&[0.3, 0.9, 0.3, 0.5]), vec![0.9, 0.5, 0.3, 0.0]);
        assert_eq!(s.cutoffs(&[1.0, 0.0]), vec![1.0, 0.0]);
        assert_eq!(s.cutoffs(&[]), vec![0.0]);
    }

    #[test]
    fn many_scores_fall_back_to_quantiles() {
        let scores: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let c = CutoffSchedule::default().cutoffs(&scores);
        assert_eq!(c.len(), 200);
        assert_eq!(c[0], 0.999);
        assert_eq!(*c.last().unwrap(), 0.0);
        assert!(c.windows(2).all(|w| w[0] > w[1]));
        let q = CutoffSchedule::Quantiles { n: 5 }.cutoffs(&scores);
        assert_eq!(q, vec![0.999, 0.749, 0.499, 0.25, 0.0]);
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = EvalConfig::<f64>::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: EvalConfig<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        // missing fields fall back to defaults
        let partial: EvalConfig<f64> = serde_json::from_str(r#"{"matcher": "greedy"}"#).unwrap();
        assert_eq!(partial.matcher, Matcher::Greedy);
        assert_eq!(partial.range_bins, cfg.range_bins);
    }
}
