//! Synthetic scenes and a noisy detector with range-proportional radial
//! error and range-independent lateral error.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, WeightedIndex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{bev_footprint, convex_intersection_area, Box3D, ConvexPolygon2D, Vec3};
use crate::records::{ClassLabel, DetectionRecord, FrameRecord, GroundTruthRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error("frame {frame}: could not place object {object} after {attempts} attempts")]
    PlacementFailure { frame: usize, object: usize, attempts: usize },
}

/// Class frequency and mean box size (meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPrior {
    pub class: ClassLabel,
    pub weight: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl ClassPrior {
    pub fn new(class: ClassLabel, weight: f64, length: f64, width: f64, height: f64) -> Self {
        Self { class, weight, length, width, height }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub frames: usize,
    /// Inclusive range; the count is uniform over it.
    pub min_objects_per_frame: usize,
    pub max_objects_per_frame: usize,
    /// Object ranges are uniform over `[min_range, max_range]` meters, with
    /// uniform azimuth.
    pub min_range: f64,
    pub max_range: f64,
    pub classes: Vec<ClassPrior>,
    /// Relative std of ground-truth sizes around the class prior.
    pub size_sigma_fraction: f64,
    /// Sensor height above the ground plane (m); boxes rest on the ground.
    pub sensor_height: f64,
    pub max_placement_attempts: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            frames: 100,
            min_objects_per_frame: 5,
            max_objects_per_frame: 20,
            min_range: 5.0,
            max_range: 80.0,
            classes: vec![
                ClassPrior::new(ClassLabel::Vehicle, 0.6, 4.5, 1.9, 1.6),
                ClassPrior::new(ClassLabel::Pedestrian, 0.25, 0.8, 0.8, 1.75),
                ClassPrior::new(ClassLabel::Cyclist, 0.15, 1.8, 0.7, 1.7),
            ],
            size_sigma_fraction: 0.05,
            sensor_height: 1.7,
            max_placement_attempts: 1000,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.min_objects_per_frame > self.max_objects_per_frame {
            return bad("min_objects_per_frame exceeds max_objects_per_frame".into());
        }
        if !(self.min_range > 0.0 && self.min_range <= self.max_range && self.max_range.is_finite()) {
            return bad(format!("range interval [{}, {}] must satisfy 0 < min <= max", self.min_range, self.max_range));
        }
        if self.classes.is_empty() {
            return bad("no classes".into());
        }
        for c in &self.classes {
            if !(c.weight > 0.0 && c.length > 0.0 && c.width > 0.0 && c.height > 0.0)
                || ![c.weight, c.length, c.width, c.height].iter().all(|v| v.is_finite())
            {
                return bad(format!("class {} needs a positive weight and positive sizes", c.class));
            }
        }
        if !(self.size_sigma_fraction >= 0.0 && self.size_sigma_fraction < 0.5) {
            return bad(format!("size_sigma_fraction {} must be in [0, 0.5)", self.size_sigma_fraction));
        }
        if !self.sensor_height.is_finite() {
            return bad("sensor_height must be finite".into());
        }
        if self.max_placement_attempts == 0 {
            return bad("max_placement_attempts must be positive".into());
        }
        Ok(())
    }
}

/// Detector error model. Sigmas are standard deviations of zero-mean
/// Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Radial error std as a fraction of the ground-truth range.
    pub longitudinal_sigma_fraction: f64,
    /// Error std perpendicular to the line of sight (m).
    pub lateral_sigma: f64,
    /// Relative std of each box dimension.
    pub dims_sigma_fraction: f64,
    /// Heading error std (rad).
    pub heading_sigma: f64,
    /// Probability that a ground-truth object yields no detection.
    pub miss_rate: f64,
    /// Mean number of spurious detections per frame (Poisson).
    pub false_positive_rate_per_frame: f64,
    /// Std of the additive score jitter.
    pub score_jitter: f64,
    /// Spurious detections score uniformly in `[0, false_positive_max_score)`.
    pub false_positive_max_score: f64,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            longitudinal_sigma_fraction: 0.0,
            lateral_sigma: 0.0,
            dims_sigma_fraction: 0.0,
            heading_sigma: 0.0,
            miss_rate: 0.0,
            false_positive_rate_per_frame: 0.0,
            score_jitter: 0.0,
            false_positive_max_score: 0.4,
        }
    }

    /// Monocular-camera-like errors: depth error grows with range.
    pub fn camera_like() -> Self {
        Self {
            longitudinal_sigma_fraction: 0.08,
            lateral_sigma: 0.2,
            dims_sigma_fraction: 0.05,
            heading_sigma: 0.05,
            miss_rate: 0.1,
            false_positive_rate_per_frame: 0.5,
            score_jitter: 0.05,
            false_positive_max_score: 0.4,
        }
    }

    /// LiDAR-like errors: small in every direction.
    pub fn lidar_like() -> Self {
        Self { longitudinal_sigma_fraction: 0.005, lateral_sigma: 0.05, ..Self::camera_like() }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let sigmas = [
            ("longitudinal_sigma_fraction", self.longitudinal_sigma_fraction),
            ("lateral_sigma", self.lateral_sigma),
            ("dims_sigma_fraction", self.dims_sigma_fraction),
            ("heading_sigma", self.heading_sigma),
            ("score_jitter", self.score_jitter),
            ("false_positive_rate_per_frame", self.false_positive_rate_per_frame),
        ];
        for (name, v) in sigmas {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SynthError::InvalidNoise(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.miss_rate) {
            return Err(SynthError::InvalidNoise(format!("miss_rate {} must be in [0, 1]", self.miss_rate)));
        }
        if !(self.false_positive_max_score > 0.0 && self.false_positive_max_score <= 1.0) {
            return Err(SynthError::InvalidNoise(format!(
                "false_positive_max_score {} must be in (0, 1]",
                self.false_positive_max_score
            )));
        }
        Ok(())
    }
}

fn normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
}

fn frame_id(index: usize) -> String {
    format!("{index:06}")
}

fn overlaps(candidate: &ConvexPolygon2D<f64>, radius: f64, center: Vec3<f64>, placed: &[(ConvexPolygon2D<f64>, f64, Vec3<f64>)]) -> bool {
    placed.iter().any(|(poly, r, c)| {
        let (dx, dy) = (center.x - c.x, center.y - c.y);
        let reach = radius + r;
        dx * dx + dy * dy < reach * reach && convex_intersection_area(candidate, poly) > 0.0
    })
}

/// Frames of mutually non-overlapping ground-truth boxes (zero BEV
/// intersection within a frame). Sensor at the origin, ground plane at
/// `z = -sensor_height`.
pub fn generate_ground_truth(spec: &SceneSpec) -> Result<Vec<FrameRecord<f64>>, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let class_index = WeightedIndex::new(spec.classes.iter().map(|c| c.weight)).expect("validated weights");
    let mut frames = Vec::with_capacity(spec.frames);
    for f in 0..spec.frames {
        let count = rng.gen_range(spec.min_objects_per_frame..=spec.max_objects_per_frame);
        let mut frame = FrameRecord::new(frame_id(f));
        let mut placed = Vec::with_capacity(count);
        for object in 0..count {
            let prior = &spec.classes[class_index.sample(&mut rng)];
            let size = |mean: f64, rng: &mut ChaCha8Rng| mean * (1.0 + normal(rng, spec.size_sigma_fraction)).max(0.2);
            let (l, w, h) = (size(prior.length, &mut rng), size(prior.width, &mut rng), size(prior.height, &mut rng));
            let mut attempts = 0;
            let bbox = loop {
                if attempts == spec.max_placement_attempts {
                    return Err(SynthError::PlacementFailure { frame: f, object, attempts });
                }
                attempts += 1;
                let range = rng.gen_range(spec.min_range..=spec.max_range);
                let azimuth = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                let heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                let center = Vec3::new(range * azimuth.cos(), range * azimuth.sin(), h / 2.0 - spec.sensor_height);
                let candidate = Box3D::new(center, l, w, h, heading).expect("positive sizes");
                let footprint = bev_footprint(&candidate);
                let radius = 0.5 * l.hypot(w);
                if !overlaps(&footprint, radius, center, &placed) {
                    placed.push((footprint, radius, center));
                    break candidate;
                }
            };
            frame.ground_truths.push(GroundTruthRecord { class: prior.class.clone(), bbox });
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// Unit vector perpendicular to `u` at a uniform angle around it.
fn random_perpendicular(u: Vec3<f64>, rng: &mut ChaCha8Rng) -> Vec3<f64> {
    let helper = if u.z.abs() < 0.9 { Vec3::new(0.0, 0.0, 1.0) } else { Vec3::new(1.0, 0.0, 0.0) };
    let a = u.cross(helper).normalized().expect("helper not parallel to u");
    let b = u.cross(a);
    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
    a * theta.cos() + b * theta.sin()
}

/// Replaces the predictions of every frame with simulated detections.
///
/// Each kept ground truth is displaced along its line of sight by
/// `N(0, (sigma_frac * range)^2)` and perpendicular to it by
/// `N(0, lateral_sigma^2)`. True detections score
/// `clamp(1 - |radial error| / (3 sigma_frac range) + jitter, 0, 1)`;
/// spurious ones score uniformly low and copy the class and size of a random
/// ground truth.
pub fn simulate_detector(
    frames: &[FrameRecord<f64>],
    noise: &NoiseModel,
    seed: u64,
) -> Result<Vec<FrameRecord<f64>>, SynthError> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let templates: Vec<&GroundTruthRecord<f64>> = frames.iter().flat_map(|f| f.ground_truths.iter()).collect();
    let ranges: Vec<f64> = frames
        .iter()
        .flat_map(|f| f.ground_truths.iter().map(move |g| (g.bbox.center() - f.sensor_origin).norm()))
        .collect();
    let (fp_min, fp_max) = ranges.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    let fp_count = (noise.false_positive_rate_per_frame > 0.0)
        .then(|| Poisson::new(noise.false_positive_rate_per_frame).expect("positive rate"));
    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        let origin = frame.sensor_origin;
        let mut predictions = Vec::new();
        for g in &frame.ground_truths {
            if noise.miss_rate > 0.0 && rng.gen_bool(noise.miss_rate) {
                continue;
            }
            let rel = g.bbox.center() - origin;
            let range = rel.norm();
            let u = rel * (1.0 / range);
            let radial = normal(&mut rng, noise.longitudinal_sigma_fraction * range);
            let lateral = normal(&mut rng, noise.lateral_sigma);
            let direction = random_perpendicular(u, &mut rng);
            let center = g.bbox.center() + u * radial + direction * lateral;
            let jitter = |v: f64, rng: &mut ChaCha8Rng| v * (1.0 + normal(rng, noise.dims_sigma_fraction)).max(0.2);
            let bbox = Box3D::new(
                center,
                jitter(g.bbox.length(), &mut rng),
                jitter(g.bbox.width(), &mut rng),
                jitter(g.bbox.height(), &mut rng),
                g.bbox.heading() + normal(&mut rng, noise.heading_sigma),
            )
            .expect("finite jittered box");
            let penalty = if noise.longitudinal_sigma_fraction > 0.0 {
                radial.abs() / (3.0 * noise.longitudinal_sigma_fraction * range)
            } else {
                0.0
            };
            let score = (1.0 - penalty + normal(&mut rng, noise.score_jitter)).clamp(0.0, 1.0);
            predictions.push(DetectionRecord { class: g.class.clone(), bbox, score });
        }
        let spurious = fp_count.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        for _ in 0..spurious {
            let Some(template) = templates.choose(&mut rng) else { break };
            let range = if fp_max > fp_min { rng.gen_range(fp_min..=fp_max) } else { fp_max };
            let azimuth = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let t = template.bbox;
            let center = origin + Vec3::new(range * azimuth.cos(), range * azimuth.sin(), t.center().z - origin.z);
            let heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let bbox = Box3D::new(center, t.length(), t.width(), t.height(), heading).expect("template box is valid");
            let score = rng.gen_range(0.0..noise.false_positive_max_score);
            predictions.push(DetectionRecord { class: template.class.clone(), bbox, score });
        }
        out.push(FrameRecord { predictions, ..frame.clone() });
    }
    Ok(out)
}

/// Ground truth from `spec` plus detections under `noise`, using the scene
/// seed plus one for the detector.
pub fn synthesize(spec: &SceneSpec, noise: &NoiseModel) -> Result<Vec<FrameRecord<f64>>, SynthError> {
    let gt = generate_ground_truth(spec)?;
    simulate_detector(&gt, noise, spec.seed.wrapping_add(1))
}
