//! Precision/recall accumulation and the AP family: 3D AP, LET-3D-AP and
//! LET-3D-APL.
//!
//! Every score cutoff selects a subset of predictions which is matched
//! against the ground truth from scratch, frame by frame. Matched predictions
//! contribute their longitudinal affinity `a` to the soft true-positive
//! accumulator and `1 - a` to the soft false-positive accumulator; unmatched
//! predictions contribute 1 to the latter. Recall counts matched ground
//! truths without weighting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, EvalConfig, RangeBin};
use crate::geometry::Box3D;
use crate::longitudinal::LetError;
use crate::matching::{baseline_weight_matrix, let_weight_matrix, FrameMatchResult, Matcher, PairScores};
use crate::records::{ClassLabel, FrameRecord};
use crate::scalar::{CompensatedSum, Scalar};

pub const REPORT_SCHEMA_VERSION: &str = "letap-report/1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("frame {frame_id}: {source}")]
    Frame { frame_id: String, source: LetError },
}

/// One point of a PR curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRPoint<T> {
    pub score_cutoff: T,
    /// Soft true-positive accumulator (sum of matched affinities).
    pub tp_p: T,
    /// Soft false-positive accumulator.
    pub fp: T,
    /// Matched ground truths.
    pub tp_g: usize,
    pub fn_count: usize,
    /// Unweighted precision: matched predictions over all predictions.
    pub precision: T,
    pub recall: T,
    /// `mean_affinity * precision`.
    pub weighted_precision: T,
    /// Mean longitudinal affinity of the matched predictions.
    pub mean_affinity: T,
}

/// Integer counts and compensated soft sums for one cutoff. Merging is
/// associative and commutative up to compensated rounding.
#[derive(Debug, Clone, Default)]
pub struct Tally<T> {
    matched: usize,
    unmatched_preds: usize,
    unmatched_gts: usize,
    tp_soft: CompensatedSum<T>,
    fp_soft: CompensatedSum<T>,
}

impl<T: Scalar> Tally<T> {
    pub fn new() -> Self {
        Self {
            matched: 0,
            unmatched_preds: 0,
            unmatched_gts: 0,
            tp_soft: CompensatedSum::new(),
            fp_soft: CompensatedSum::new(),
        }
    }

    pub fn add_frame(&mut self, result: &FrameMatchResult<T>) {
        self.matched += result.matches.len();
        self.unmatched_preds += result.unmatched_preds.len();
        self.unmatched_gts += result.unmatched_gts.len();
        for m in &result.matches {
            self.tp_soft.add(m.affinity);
            self.fp_soft.add(T::one() - m.affinity);
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.matched += other.matched;
        self.unmatched_preds += other.unmatched_preds;
        self.unmatched_gts += other.unmatched_gts;
        self.tp_soft.merge(&other.tp_soft);
        self.fp_soft.merge(&other.fp_soft);
    }

    pub fn point(&self, score_cutoff: T) -> PRPoint<T> {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                T::zero()
            } else {
                T::from_usize(num).unwrap() / T::from_usize(den).unwrap()
            }
        };
        let precision = ratio(self.matched, self.matched + self.unmatched_preds);
        let recall = ratio(self.matched, self.matched + self.unmatched_gts);
        let tp_p = self.tp_soft.value();
        let mean_affinity = if self.matched == 0 {
            T::zero()
        } else {
            (tp_p / T::from_usize(self.matched).unwrap()).min(T::one()).max(T::zero())
        };
        PRPoint {
            score_cutoff,
            tp_p,
            fp: self.fp_soft.value() + T::from_usize(self.unmatched_preds).unwrap(),
            tp_g: self.matched,
            fn_count: self.unmatched_gts,
            precision,
            recall,
            weighted_precision: mean_affinity * precision,
            mean_affinity,
        }
    }
}

/// Accumulates per-frame match results taken at one cutoff.
pub fn accumulate_cutoff<T: Scalar>(results: &[FrameMatchResult<T>], score_cutoff: T) -> PRPoint<T> {
    let mut tally = Tally::new();
    for r in results {
        tally.add_frame(r);
    }
    tally.point(score_cutoff)
}

/// Area under the interpolated PR curve.
///
/// `points` must be sorted by ascending recall. Each precision is replaced
/// by the largest precision at equal or higher recall, then summed over the
/// recall increments starting from zero. With `weighted`, the
/// affinity-weighted precision is used instead.
pub fn average_precision<T: Scalar>(points: &[PRPoint<T>], weighted: bool) -> T {
    let n = points.len();
    let precision = |p: &PRPoint<T>| if weighted { p.weighted_precision } else { p.precision };
    let mut envelope = vec![T::zero(); n];
    let mut running = T::zero();
    for k in (0..n).rev() {
        running = running.max(precision(&points[k]));
        envelope[k] = running;
    }
    // points sharing a recall all take the envelope of the first of them
    for k in 1..n {
        if points[k].recall == points[k - 1].recall {
            envelope[k] = envelope[k - 1];
        }
    }
    let mut area = CompensatedSum::new();
    let mut previous_recall = T::zero();
    for (p, env) in points.iter().zip(envelope) {
        let step = p.recall - previous_recall;
        if step > T::zero() {
            area.add(step * env);
            previous_recall = p.recall;
        }
    }
    area.value().max(T::zero()).min(T::one())
}

/// The two AP variants computed from one prediction/ground-truth subset.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetCurves<T> {
    /// LET matching; carries both plain and affinity-weighted precision.
    pub let_curve: Vec<PRPoint<T>>,
    /// Plain 3D IoU matching.
    pub baseline_curve: Vec<PRPoint<T>>,
    pub num_ground_truths: usize,
    /// Predictions at or above the lowest cutoff.
    pub num_predictions: usize,
}

/// Which association rule a PR curve uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Association {
    Baseline,
    LongitudinalTolerant,
}

struct PreparedFrame<T> {
    frame_id: String,
    /// sorted by descending score, ties by input order
    preds: Vec<Box3D<T>>,
    scores: Vec<T>,
    gts: Vec<Box3D<T>>,
}

fn prepare<T: Scalar>(frames: &[FrameRecord<T>], class: &ClassLabel, bin: &RangeBin<T>) -> Vec<PreparedFrame<T>> {
    let mut order: Vec<&FrameRecord<T>> = frames.iter().collect();
    order.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
    order
        .into_iter()
        .map(|frame| {
            let origin = frame.sensor_origin;
            let relative = |b: &Box3D<T>| b.translated(-origin);
            let gts = frame
                .ground_truths
                .iter()
                .filter(|g| &g.class == class)
                .map(|g| relative(&g.bbox))
                .filter(|b| bin.contains(b.center().norm()))
                .collect();
            let mut preds: Vec<(Box3D<T>, T)> = frame
                .predictions
                .iter()
                .filter(|p| &p.class == class)
                .map(|p| (relative(&p.bbox), p.score))
                .filter(|(b, _)| bin.contains(b.center().norm()))
                .collect();
            preds.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
            PreparedFrame {
                frame_id: frame.frame_id.clone(),
                scores: preds.iter().map(|p| p.1).collect(),
                preds: preds.into_iter().map(|p| p.0).collect(),
                gts,
            }
        })
        .collect()
}

/// Cutoffs that select distinct prediction subsets, strictly decreasing.
fn effective_cutoffs<T: Scalar>(cfg: &EvalConfig<T>, frames: &[PreparedFrame<T>]) -> Vec<T> {
    let mut all_scores: Vec<T> = frames.iter().flat_map(|f| f.scores.iter().copied()).collect();
    let cutoffs = cfg.cutoff_schedule.cutoffs(&all_scores);
    all_scores.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let selected = |c: T| all_scores.partition_point(|&s| s >= c);
    let mut out: Vec<T> = Vec::with_capacity(cutoffs.len());
    let mut last_count = None;
    for c in cutoffs {
        let count = selected(c);
        if last_count != Some(count) {
            out.push(c);
            last_count = Some(count);
        }
    }
    out
}

fn frame_tallies<T: Scalar>(
    frame: &PreparedFrame<T>,
    cutoffs: &[T],
    scores: &PairScores<T>,
    matcher: Matcher,
) -> Vec<Tally<T>> {
    let mut out: Vec<Tally<T>> = Vec::with_capacity(cutoffs.len());
    let mut last_n = None;
    for &c in cutoffs {
        let n = frame.scores.partition_point(|&s| s >= c);
        if last_n == Some(n) {
            let previous = out.last().cloned().expect("previous tally");
            out.push(previous);
            continue;
        }
        last_n = Some(n);
        let result = if n == 0 || frame.gts.is_empty() {
            FrameMatchResult::unmatched(n, frame.gts.len())
        } else {
            matcher.match_scores(&scores.top_rows(n))
        };
        let mut tally = Tally::new();
        tally.add_frame(&result);
        out.push(tally);
    }
    out
}

fn to_curve<T: Scalar>(cutoffs: &[T], per_frame: &[Vec<Tally<T>>]) -> Vec<PRPoint<T>> {
    let mut points: Vec<PRPoint<T>> = cutoffs
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let mut total = Tally::new();
            for frame in per_frame {
                total.merge(&frame[k]);
            }
            total.point(c)
        })
        .collect();
    points.sort_by(|a, b| a.recall.partial_cmp(&b.recall).unwrap_or(std::cmp::Ordering::Equal));
    points
}

/// Builds both PR curves for one class and range bin.
pub fn subset_curves<T: Scalar>(
    frames: &[FrameRecord<T>],
    class: &ClassLabel,
    bin: &RangeBin<T>,
    cfg: &EvalConfig<T>,
) -> Result<SubsetCurves<T>, EvalError> {
    cfg.cutoff_schedule.validate()?;
    let prepared = prepare(frames, class, bin);
    let cutoffs = effective_cutoffs(cfg, &prepared);
    let threshold = cfg.iou_threshold(class);
    // per frame: (LET tallies, baseline tallies), one per cutoff
    type FrameTallies<T> = (Vec<Tally<T>>, Vec<Tally<T>>);
    let per_frame: Vec<FrameTallies<T>> = prepared
        .par_iter()
        .map(|frame| {
            let let_scores = let_weight_matrix(&frame.preds, &frame.gts, &cfg.tolerance, threshold)
                .map_err(|source| EvalError::Frame { frame_id: frame.frame_id.clone(), source })?;
            let base_scores = baseline_weight_matrix(&frame.preds, &frame.gts, threshold);
            Ok((
                frame_tallies(frame, &cutoffs, &let_scores, cfg.matcher),
                frame_tallies(frame, &cutoffs, &base_scores, cfg.matcher),
            ))
        })
        .collect::<Result<_, EvalError>>()?;
    let (let_tallies, base_tallies): (Vec<_>, Vec<_>) = per_frame.into_iter().unzip();
    let lowest = cutoffs.last().copied().unwrap_or(T::zero());
    Ok(SubsetCurves {
        let_curve: to_curve(&cutoffs, &let_tallies),
        baseline_curve: to_curve(&cutoffs, &base_tallies),
        num_ground_truths: prepared.iter().map(|f| f.gts.len()).sum(),
        num_predictions: prepared.iter().map(|f| f.scores.partition_point(|&s| s >= lowest)).sum(),
    })
}

/// PR curve for one class and range bin, sorted by ascending recall.
pub fn pr_curve<T: Scalar>(
    frames: &[FrameRecord<T>],
    class: &ClassLabel,
    bin: &RangeBin<T>,
    cfg: &EvalConfig<T>,
    association: Association,
) -> Result<Vec<PRPoint<T>>, EvalError> {
    let curves = subset_curves(frames, class, bin, cfg)?;
    Ok(match association {
        Association::Baseline => curves.baseline_curve,
        Association::LongitudinalTolerant => curves.let_curve,
    })
}

/// Metrics for one class and range bin. Metric fields are `None` when the
/// subset holds no ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry<T> {
    pub class: ClassLabel,
    pub range_bin: String,
    pub range_min: T,
    pub range_max: Option<T>,
    pub num_ground_truths: usize,
    pub num_predictions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ap_3d: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub let_3d_ap: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub let_3d_apl: Option<T>,
    /// LET-3D-APL / LET-3D-AP; omitted when LET-3D-AP is 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mla: Option<T>,
    /// Mean affinity over matched pairs at the lowest cutoff.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_match_affinity: Option<T>,
    pub pr_curve: Vec<PRPoint<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct MetricsReport<T> {
    pub schema_version: String,
    pub config: EvalConfig<T>,
    pub entries: Vec<ReportEntry<T>>,
}

impl<T: Scalar> MetricsReport<T> {
    pub fn entry(&self, class: &ClassLabel, range_bin: &str) -> Option<&ReportEntry<T>> {
        self.entries.iter().find(|e| &e.class == class && e.range_bin == range_bin)
    }
}

fn entry_for<T: Scalar>(
    frames: &[FrameRecord<T>],
    class: &ClassLabel,
    bin: &RangeBin<T>,
    cfg: &EvalConfig<T>,
) -> Result<ReportEntry<T>, EvalError> {
    let curves = subset_curves(frames, class, bin, cfg)?;
    let mut entry = ReportEntry {
        class: class.clone(),
        range_bin: bin.label(),
        range_min: bin.min,
        range_max: bin.max,
        num_ground_truths: curves.num_ground_truths,
        num_predictions: curves.num_predictions,
        ap_3d: None,
        let_3d_ap: None,
        let_3d_apl: None,
        mla: None,
        mean_match_affinity: None,
        pr_curve: Vec::new(),
    };
    if curves.num_ground_truths == 0 {
        return Ok(entry);
    }
    let ap = average_precision(&curves.let_curve, false);
    let apl = average_precision(&curves.let_curve, true);
    entry.ap_3d = Some(average_precision(&curves.baseline_curve, false));
    entry.let_3d_ap = Some(ap);
    entry.let_3d_apl = Some(apl);
    entry.mla = (ap > T::zero()).then(|| (apl / ap).min(T::one()));
    entry.mean_match_affinity = curves
        .let_curve
        .iter()
        .filter(|p| p.tp_g > 0)
        .min_by(|a, b| a.score_cutoff.partial_cmp(&b.score_cutoff).unwrap_or(std::cmp::Ordering::Equal))
        .map(|p| p.mean_affinity);
    entry.pr_curve = curves.let_curve;
    Ok(entry)
}

/// Full evaluation: for every class present in the data, one entry over all
/// ranges followed by one entry per configured range bin.
///
/// Frames are processed in `frame_id` order and per-frame work may run on the
/// current rayon pool; the result does not depend on the pool size.
pub fn evaluate<T: Scalar>(frames: &[FrameRecord<T>], cfg: &EvalConfig<T>) -> Result<MetricsReport<T>, EvalError> {
    cfg.validate()?;
    let mut classes: Vec<ClassLabel> = frames
        .iter()
        .flat_map(|f| {
            f.ground_truths.iter().map(|g| g.class.clone()).chain(f.predictions.iter().map(|p| p.class.clone()))
        })
        .collect();
    classes.sort();
    classes.dedup();
    let mut bins = vec![RangeBin::everything()];
    bins.extend(cfg.range_bins.iter().copied().filter(|b| *b != RangeBin::everything()));
    let mut entries = Vec::new();
    for class in &classes {
        for bin in &bins {
            entries.push(entry_for(frames, class, bin, cfg)?);
        }
    }
    Ok(MetricsReport { schema_version: REPORT_SCHEMA_VERSION.to_string(), config: cfg.clone(), entries })
}

/// [`evaluate`] on a dedicated pool of `workers` threads (0 = all cores).
pub fn evaluate_with_workers<T: Scalar>(
    frames: &[FrameRecord<T>],
    cfg: &EvalConfig<T>,
    workers: usize,
) -> Result<MetricsReport<T>, EvalError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool");
    pool.install(|| evaluate(frames, cfg))
}
