//! Reading and writing datasets, configs and reports.
//!
//! Datasets are two line-delimited JSON files, one for ground truth and one
//! for predictions. Each line is one box:
//!
//! ```text
//! {"frame_id":"000017","class":"vehicle","cx":12.1,"cy":-3.0,"cz":0.2,
//!  "length":4.5,"width":1.9,"height":1.6,"heading":0.03,"score":0.91}
//! ```
//!
//! `score` is required for predictions and forbidden for ground truth.
//! `origin_x`, `origin_y`, `origin_z` optionally give the sensor position for
//! the frame (default origin); every line of a frame must agree on it.
//! Coordinates and sizes are meters, headings radians.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, EvalConfig};
use crate::geometry::{Box3D, Vec3};
use crate::metrics::MetricsReport;
use crate::records::{ClassLabel, DetectionRecord, FrameRecord, GroundTruthRecord};

/// Ground truths closer than this to the sensor have no line of sight.
pub const MIN_GT_RANGE: f64 = 1e-6;

/// Largest accepted heading magnitude. Anything larger is almost certainly
/// in degrees.
pub const MAX_HEADING: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: file not found", .0.display())]
    MissingFile(PathBuf),
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("frame {frame_id}, record {record_index} ({}): {reason}", path.display())]
    Validation { path: PathBuf, frame_id: String, record_index: usize, reason: String },
    #[error("invalid config in {}: {source}", path.display())]
    Config { path: PathBuf, source: ConfigError },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl DatasetError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            DatasetError::MissingFile(path.to_path_buf())
        } else {
            DatasetError::Io { path: path.to_path_buf(), source }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineRecord {
    frame_id: String,
    class: ClassLabel,
    cx: f64,
    cy: f64,
    cz: f64,
    length: f64,
    width: f64,
    height: f64,
    heading: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin_z: Option<f64>,
}

impl LineRecord {
    fn new(frame: &FrameRecord<f64>, class: &ClassLabel, b: &Box3D<f64>, score: Option<f64>) -> Self {
        let o = frame.sensor_origin;
        let origin = |v: f64| (o != Vec3::zero()).then_some(v);
        Self {
            frame_id: frame.frame_id.clone(),
            class: class.clone(),
            cx: b.center().x,
            cy: b.center().y,
            cz: b.center().z,
            length: b.length(),
            width: b.width(),
            height: b.height(),
            heading: b.heading(),
            score,
            origin_x: origin(o.x),
            origin_y: origin(o.y),
            origin_z: origin(o.z),
        }
    }

    fn origin(&self) -> Vec3<f64> {
        Vec3::new(self.origin_x.unwrap_or(0.0), self.origin_y.unwrap_or(0.0), self.origin_z.unwrap_or(0.0))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    GroundTruth,
    Prediction,
}

struct Loader {
    frames: BTreeMap<String, FrameRecord<f64>>,
    /// first line that set each frame's origin
    origin_source: BTreeMap<String, (PathBuf, usize)>,
}

impl Loader {
    fn read(&mut self, path: &Path, kind: Kind) -> Result<(), DatasetError> {
        let file = File::open(path).map_err(|e| DatasetError::io(path, e))?;
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| DatasetError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LineRecord = serde_json::from_str(&line)
                .map_err(|e| DatasetError::Parse { path: path.to_path_buf(), line: line_no, message: e.to_string() })?;
            self.add(path, line_no, kind, rec)?;
        }
        Ok(())
    }

    fn add(&mut self, path: &Path, line_no: usize, kind: Kind, rec: LineRecord) -> Result<(), DatasetError> {
        let invalid = |reason: String| DatasetError::Validation {
            path: path.to_path_buf(),
            frame_id: rec.frame_id.clone(),
            record_index: line_no,
            reason,
        };
        if rec.frame_id.is_empty() {
            return Err(invalid("frame_id must not be empty".into()));
        }
        if rec.heading.is_finite() && rec.heading.abs() > MAX_HEADING {
            return Err(invalid(format!("heading {} is outside [-2pi, 2pi]; headings must be radians", rec.heading)));
        }
        let bbox = Box3D::new(Vec3::new(rec.cx, rec.cy, rec.cz), rec.length, rec.width, rec.height, rec.heading)
            .map_err(|e| invalid(e.to_string()))?;
        let origin = rec.origin();
        if !origin.is_finite() {
            return Err(invalid("sensor origin is not finite".into()));
        }
        let frame = match self.frames.get_mut(&rec.frame_id) {
            Some(frame) => {
                if frame.sensor_origin != origin {
                    let (p, l) = &self.origin_source[&rec.frame_id];
                    return Err(invalid(format!(
                        "sensor origin ({}, {}, {}) differs from ({}, {}, {}) given at {}:{}",
                        origin.x,
                        origin.y,
                        origin.z,
                        frame.sensor_origin.x,
                        frame.sensor_origin.y,
                        frame.sensor_origin.z,
                        p.display(),
                        l
                    )));
                }
                frame
            }
            None => {
                self.origin_source.insert(rec.frame_id.clone(), (path.to_path_buf(), line_no));
                let mut frame = FrameRecord::new(rec.frame_id.clone());
                frame.sensor_origin = origin;
                self.frames.entry(rec.frame_id.clone()).or_insert(frame)
            }
        };
        match kind {
            Kind::GroundTruth => {
                if rec.score.is_some() {
                    return Err(invalid("ground truth records must not carry a score".into()));
                }
                let range = (bbox.center() - origin).norm();
                if range < MIN_GT_RANGE {
                    return Err(invalid(format!("ground truth center is {range} m from the sensor origin")));
                }
                frame.ground_truths.push(GroundTruthRecord { class: rec.class, bbox });
            }
            Kind::Prediction => {
                let score = rec.score.ok_or_else(|| invalid("prediction has no score".into()))?;
                if !(score.is_finite() && (0.0..=1.0).contains(&score)) {
                    return Err(invalid(format!("score {score} is outside [0, 1]")));
                }
                frame.predictions.push(DetectionRecord { class: rec.class, bbox, score });
            }
        }
        Ok(())
    }
}

/// Loads and validates a dataset. Frames come back sorted by `frame_id`.
/// Prediction frames absent from the ground truth become frames with no
/// ground truth.
pub fn load_dataset(gt_path: &Path, pred_path: &Path) -> Result<Vec<FrameRecord<f64>>, DatasetError> {
    let mut loader = Loader { frames: BTreeMap::new(), origin_source: BTreeMap::new() };
    loader.read(gt_path, Kind::GroundTruth)?;
    loader.read(pred_path, Kind::Prediction)?;
    Ok(loader.frames.into_values().collect())
}

fn create(path: &Path) -> Result<BufWriter<File>, DatasetError> {
    File::create(path).map(BufWriter::new).map_err(|e| DatasetError::io(path, e))
}

fn write_lines(path: &Path, lines: impl Iterator<Item = LineRecord>) -> Result<(), DatasetError> {
    let mut out = create(path)?;
    let io = |e| DatasetError::io(path, e);
    for rec in lines {
        serde_json::to_writer(&mut out, &rec).map_err(|e| io(e.into()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Writes a dataset in the line format read by [`load_dataset`]. A frame
/// with neither ground truth nor predictions has no line to live on and is
/// not written.
pub fn save_dataset(frames: &[FrameRecord<f64>], gt_path: &Path, pred_path: &Path) -> Result<(), DatasetError> {
    write_lines(
        gt_path,
        frames.iter().flat_map(|f| f.ground_truths.iter().map(move |g| LineRecord::new(f, &g.class, &g.bbox, None))),
    )?;
    write_lines(
        pred_path,
        frames
            .iter()
            .flat_map(|f| f.predictions.iter().map(move |p| LineRecord::new(f, &p.class, &p.bbox, Some(p.score)))),
    )
}

/// Reads a JSON evaluation config. Missing fields take their defaults.
pub fn load_config(path: &Path) -> Result<EvalConfig<f64>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    let cfg: EvalConfig<f64> = serde_json::from_str(&text)
        .map_err(|e| DatasetError::Parse { path: path.to_path_buf(), line: e.line(), message: e.to_string() })?;
    cfg.validate().map_err(|source| DatasetError::Config { path: path.to_path_buf(), source })?;
    Ok(cfg)
}

/// Pretty-printed JSON; fields appear in declaration order and maps are
/// ordered, so equal reports give identical bytes.
pub fn report_to_string(report: &MetricsReport<f64>) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report values are finite");
    s.push('\n');
    s
}

pub fn write_report(report: &MetricsReport<f64>, path: &Path) -> Result<(), DatasetError> {
    std::fs::write(path, report_to_string(report)).map_err(|e| DatasetError::io(path, e))
}

pub fn read_report(path: &Path) -> Result<MetricsReport<f64>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| DatasetError::Parse { path: path.to_path_buf(), line: e.line(), message: e.to_string() })
}

pub const PR_CSV_HEADER: [&str; 7] = ["class", "range_bin", "cutoff", "recall", "precision", "p_l", "mean_affinity"];

/// PR curves of every report entry as CSV, one row per curve point.
pub fn write_pr_csv<W: Write>(report: &MetricsReport<f64>, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PR_CSV_HEADER)?;
    for e in &report.entries {
        for p in &e.pr_curve {
            w.write_record([
                e.class.to_string(),
                e.range_bin.clone(),
                p.score_cutoff.to_string(),
                p.recall.to_string(),
                p.precision.to_string(),
                p.weighted_precision.to_string(),
                p.mean_affinity.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn export_pr_csv(report: &MetricsReport<f64>, path: &Path) -> Result<(), DatasetError> {
    let out = create(path)?;
    write_pr_csv(report, out).map_err(|e| {
        let source = match e.into_kind() {
            csv::ErrorKind::Io(io) => io,
            other => std::io::Error::other(format!("{other:?}")),
        };
        DatasetError::io(path, source)
    })
}
