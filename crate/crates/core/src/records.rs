//! Ground-truth and detection records grouped into frames.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::geometry::{Box3D, Vec3};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassLabel {
    Vehicle,
    Pedestrian,
    Cyclist,
    Other(String),
}

impl ClassLabel {
    pub fn as_str(&self) -> &str {
        match self {
            ClassLabel::Vehicle => "vehicle",
            ClassLabel::Pedestrian => "pedestrian",
            ClassLabel::Cyclist => "cyclist",
            ClassLabel::Other(s) => s,
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "" => return Err("class label must not be empty".into()),
            "vehicle" => ClassLabel::Vehicle,
            "pedestrian" => ClassLabel::Pedestrian,
            "cyclist" => ClassLabel::Cyclist,
            other => ClassLabel::Other(other.to_string()),
        })
    }
}

impl Serialize for ClassLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ClassLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthRecord<T> {
    pub class: ClassLabel,
    pub bbox: Box3D<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord<T> {
    pub class: ClassLabel,
    pub bbox: Box3D<T>,
    /// Confidence in `[0, 1]`.
    pub score: T,
}

/// All records observed from one sensor pose. Boxes are expressed in a frame
/// where the sensor sits at `sensor_origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord<T> {
    pub frame_id: String,
    pub sensor_origin: Vec3<T>,
    pub ground_truths: Vec<GroundTruthRecord<T>>,
    pub predictions: Vec<DetectionRecord<T>>,
}

impl<T: Scalar> FrameRecord<T> {
    pub fn new(frame_id: impl Into<String>) -> Self {
        Self {
            frame_id: frame_id.into(),
            sensor_origin: Vec3::zero(),
            ground_truths: Vec::new(),
            predictions: Vec::new(),
        }
    }
}
