//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use letap::geometry::{Box3D, Vec3};
use letap::matching::{Assignment, WeightMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Point-in-box test done in the box's own frame.
fn contains(b: &Box3D<f64>, p: Vec3<f64>) -> bool {
    let c = b.center();
    let (s, co) = b.heading().sin_cos();
    let (dx, dy) = (p.x - c.x, p.y - c.y);
    let along = dx * co + dy * s;
    let across = -dx * s + dy * co;
    along.abs() <= b.length() / 2.0 && across.abs() <= b.width() / 2.0 && (p.z - c.z).abs() <= b.height() / 2.0
}

fn bounds(b: &Box3D<f64>) -> ([f64; 3], [f64; 3]) {
    let c = b.center();
    let r = 0.5 * b.length().hypot(b.width());
    ([c.x - r, c.y - r, c.z - b.height() / 2.0], [c.x + r, c.y + r, c.z + b.height() / 2.0])
}

/// IoU estimated from `samples` uniform points in a box enclosing both.
pub fn monte_carlo_iou(a: &Box3D<f64>, b: &Box3D<f64>, samples: usize, seed: u64) -> f64 {
    let (alo, ahi) = bounds(a);
    let (blo, bhi) = bounds(b);
    let lo: Vec<f64> = (0..3).map(|k| alo[k].min(blo[k])).collect();
    let hi: Vec<f64> = (0..3).map(|k| ahi[k].max(bhi[k])).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut both, mut either) = (0u64, 0u64);
    for _ in 0..samples {
        let p = Vec3::new(rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1]), rng.gen_range(lo[2]..hi[2]));
        let (ia, ib) = (contains(a, p), contains(b, p));
        both += (ia && ib) as u64;
        either += (ia || ib) as u64;
    }
    if either == 0 {
        0.0
    } else {
        both as f64 / either as f64
    }
}

/// Exhaustive maximum-weight matching over positive entries. Among optimal
/// matchings it keeps the smallest row-to-column vector, where a matched
/// row sorts before an unmatched one.
pub fn brute_force_assignment(w: &WeightMatrix<f64>) -> Assignment {
    let (rows, cols) = (w.rows(), w.cols());
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut current = vec![cols; rows];
    let mut used = vec![false; cols];

    fn recurse(
        w: &WeightMatrix<f64>,
        row: usize,
        total: f64,
        current: &mut Vec<usize>,
        used: &mut Vec<bool>,
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        if row == current.len() {
            let better = match best {
                None => true,
                Some((t, v)) => total > *t || (total == *t && current < v),
            };
            if better {
                *best = Some((total, current.clone()));
            }
            return;
        }
        for j in 0..w.cols() {
            if !used[j] && w.get(row, j) > 0.0 {
                used[j] = true;
                current[row] = j;
                recurse(w, row + 1, total + w.get(row, j), current, used, best);
                used[j] = false;
            }
        }
        current[row] = w.cols();
        recurse(w, row + 1, total, current, used, best);
    }

    recurse(w, 0, 0.0, &mut current, &mut used, &mut best);
    let (_, map) = best.expect("at least the empty matching");
    let pairs: Vec<(usize, usize)> = map.iter().enumerate().filter(|(_, &j)| j < cols).map(|(i, &j)| (i, j)).collect();
    let unmatched_preds = (0..rows).filter(|&i| map[i] == cols).collect();
    let unmatched_gts = (0..cols).filter(|j| !map.contains(j)).collect();
    Assignment { pairs, unmatched_preds, unmatched_gts }
}

/// Weight matrix for matching tests. Half the time entries come from a
/// coarse dyadic grid so exact ties are common; sums of those are exact.
pub fn random_weights(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> WeightMatrix<f64> {
    let dyadic = rng.gen_bool(0.5);
    let density = rng.gen_range(0.3..1.0);
    let data = (0..rows * cols)
        .map(|_| {
            if !rng.gen_bool(density) {
                0.0
            } else if dyadic {
                rng.gen_range(1..=8) as f64 / 8.0
            } else {
                rng.gen_range(0.0..1.0)
            }
        })
        .collect();
    WeightMatrix::new(rows, cols, data).unwrap()
}

pub fn random_box(rng: &mut ChaCha8Rng, spread: f64) -> Box3D<f64> {
    Box3D::new(
        Vec3::new(rng.gen_range(-spread..spread), rng.gen_range(-spread..spread), rng.gen_range(-0.5..0.5)),
        rng.gen_range(0.5..5.0),
        rng.gen_range(0.5..3.0),
        rng.gen_range(0.5..2.5),
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
    .unwrap()
}

/// A second box near `a` so the pair usually overlaps.
pub fn nearby_box(rng: &mut ChaCha8Rng, a: &Box3D<f64>) -> Box3D<f64> {
    let c = a.center();
    Box3D::new(
        Vec3::new(c.x + rng.gen_range(-2.0..2.0), c.y + rng.gen_range(-2.0..2.0), c.z + rng.gen_range(-0.7..0.7)),
        a.length() * rng.gen_range(0.6..1.4),
        a.width() * rng.gen_range(0.6..1.4),
        a.height() * rng.gen_range(0.6..1.4),
        a.heading() + rng.gen_range(-1.0..1.0),
    )
    .unwrap()
}

/// Point with range in `[min_range, max_range]` and uniform direction.
pub fn random_point(rng: &mut ChaCha8Rng, min_range: f64, max_range: f64) -> Vec3<f64> {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v * (rng.gen_range(min_range..max_range) / n);
        }
    }
}
