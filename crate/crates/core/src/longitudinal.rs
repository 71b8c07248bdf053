//! Longitudinal error tolerance: decomposition of center errors along the
//! line of sight, the longitudinal affinity ramp, line-of-sight alignment of
//! predictions and the resulting LET-IoU.
//!
//! All positions are in a sensor-centered frame: the sensor sits at the
//! origin and the line of sight to a point is the ray from the origin
//! through it. Callers with ego-frame data subtract the sensor origin first.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou_3d, Box3D, Vec3};
use crate::scalar::Scalar;

/// Centers closer than this to the sensor (meters) have no line of sight.
pub const MIN_RANGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LetError {
    #[error("ground truth center is {range} m from the sensor; at least 1e-6 m required")]
    DegenerateGroundTruth { range: f64 },
    #[error("prediction center is {range} m from the sensor; at least 1e-6 m required")]
    DegeneratePrediction { range: f64 },
    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),
}

/// Range-proportional longitudinal tolerance with an absolute floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig<T> {
    /// Fraction of the ground-truth range, in `(0, 1]`.
    pub longitudinal_tolerance_percentage: T,
    /// Floor in meters, `>= 0`.
    pub min_longitudinal_tolerance_meter: T,
}

impl<T: Scalar> ToleranceConfig<T> {
    pub fn new(percentage: T, min_meters: T) -> Result<Self, LetError> {
        let cfg = Self {
            longitudinal_tolerance_percentage: percentage,
            min_longitudinal_tolerance_meter: min_meters,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), LetError> {
        let p = self.longitudinal_tolerance_percentage;
        let m = self.min_longitudinal_tolerance_meter;
        if !(p > T::zero() && p <= T::one()) {
            return Err(LetError::InvalidTolerance(format!("percentage must be in (0, 1], got {p}")));
        }
        if !(m >= T::zero() && m.is_finite()) {
            return Err(LetError::InvalidTolerance(format!(
                "minimum tolerance must be finite and >= 0 m, got {m}"
            )));
        }
        Ok(())
    }
}

impl<T: Scalar> Default for ToleranceConfig<T> {
    /// 10% of range, 0.5 m floor.
    fn default() -> Self {
        Self {
            longitudinal_tolerance_percentage: T::lit(0.1),
            min_longitudinal_tolerance_meter: T::lit(0.5),
        }
    }
}

/// Center error split into components along and across the line of sight
/// to the ground truth. `longitudinal + lateral == localization`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorDecomposition<T> {
    pub localization: Vec3<T>,
    pub longitudinal: Vec3<T>,
    pub lateral: Vec3<T>,
}

fn line_of_sight<T: Scalar>(p: Vec3<T>) -> Option<(T, Vec3<T>)> {
    let range = p.norm();
    (range >= T::lit(MIN_RANGE)).then(|| (range, p * range.recip()))
}

fn gt_line_of_sight<T: Scalar>(gt: Vec3<T>) -> Result<(T, Vec3<T>), LetError> {
    line_of_sight(gt).ok_or_else(|| LetError::DegenerateGroundTruth { range: gt.norm().as_f64() })
}

pub fn decompose_error<T: Scalar>(pred: Vec3<T>, gt: Vec3<T>) -> Result<ErrorDecomposition<T>, LetError> {
    let (_, u_gt) = gt_line_of_sight(gt)?;
    let localization = pred - gt;
    // orthogonal projection onto the line of sight
    let longitudinal = u_gt * localization.dot(u_gt);
    let lateral = localization - longitudinal;
    Ok(ErrorDecomposition { localization, longitudinal, lateral })
}

/// `max(percentage * range, floor)`.
pub fn longitudinal_tolerance<T: Scalar>(range_to_gt: T, cfg: &ToleranceConfig<T>) -> T {
    (cfg.longitudinal_tolerance_percentage * range_to_gt).max(cfg.min_longitudinal_tolerance_meter)
}

/// Linear ramp from 1 (no longitudinal error) to 0 (error at or beyond the
/// tolerance).
pub fn longitudinal_affinity<T: Scalar>(
    pred: Vec3<T>,
    gt: Vec3<T>,
    cfg: &ToleranceConfig<T>,
) -> Result<T, LetError> {
    let (range, u_gt) = gt_line_of_sight(gt)?;
    let lon_error = (pred - gt).dot(u_gt).abs();
    Ok(affinity_ramp(lon_error, longitudinal_tolerance(range, cfg)))
}

pub(crate) fn affinity_ramp<T: Scalar>(lon_error: T, tolerance: T) -> T {
    if lon_error <= T::zero() {
        return T::one();
    }
    if tolerance <= T::zero() {
        return T::zero();
    }
    T::one() - (lon_error / tolerance).min(T::one())
}

/// Moves the prediction along its own line of sight to the point closest to
/// `gt_center`. Dimensions and heading are untouched.
pub fn align_prediction<T: Scalar>(pred: &Box3D<T>, gt_center: Vec3<T>) -> Result<Box3D<T>, LetError> {
    let center = pred.center();
    let (_, u_pred) = line_of_sight(center)
        .ok_or_else(|| LetError::DegeneratePrediction { range: center.norm().as_f64() })?;
    Ok(pred.with_center(u_pred * gt_center.dot(u_pred)))
}

/// 3D IoU between the line-of-sight aligned prediction and the ground truth.
/// Does not check the longitudinal tolerance.
pub fn let_iou<T: Scalar>(pred: &Box3D<T>, gt: &Box3D<T>) -> Result<T, LetError> {
    let aligned = align_prediction(pred, gt.center())?;
    Ok(iou_3d(&aligned, gt))
}
