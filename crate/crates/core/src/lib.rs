//! Longitudinal-error-tolerant evaluation of 3D object detectors.
//!
//! The core types are generic over the scalar (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which the IO and simulation layers use.

pub mod config;
pub mod dataset;
pub mod geometry;
pub mod longitudinal;
pub mod matching;
pub mod metrics;
pub mod records;
pub mod scalar;
pub mod synth;

pub use config::{CutoffSchedule, EvalConfig, RangeBin};
pub use geometry::{iou_3d, Box3D, ConvexPolygon2D, Vec3};
pub use longitudinal::{let_iou, longitudinal_affinity, ToleranceConfig};
pub use matching::{Matcher, WeightMatrix};
pub use metrics::{average_precision, evaluate, evaluate_with_workers, MetricsReport, PRPoint, ReportEntry};
pub use records::{ClassLabel, DetectionRecord, FrameRecord, GroundTruthRecord};
pub use scalar::Scalar;

pub type Box3 = Box3D<f64>;
pub type Box3f = Box3D<f32>;
pub type Point3 = Vec3<f64>;
pub type Frame = FrameRecord<f64>;
pub type Frame32 = FrameRecord<f32>;
pub type Config = EvalConfig<f64>;
pub type Report = MetricsReport<f64>;
pub type Report32 = MetricsReport<f32>;
