//! Per-frame bipartite matching between predictions (rows) and ground truths
//! (columns).
//!
//! Both matchers only ever pair entries with a strictly positive weight.
//! The Hungarian matcher maximizes the summed weight; among optimal
//! assignments it returns the one whose pair list, sorted by prediction
//! index, is lexicographically smallest. The greedy matcher repeatedly takes
//! the heaviest remaining pair, breaking ties by smaller `(pred, gt)`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou_3d, Box3D};
use crate::longitudinal::{affinity_ramp, let_iou, longitudinal_tolerance, LetError, ToleranceConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchingError {
    #[error("weight matrix has {len} entries, expected {rows}x{cols}")]
    Shape { rows: usize, cols: usize, len: usize },
    #[error("weight ({row}, {col}) = {value} is outside [0, 1]")]
    OutOfRange { row: usize, col: usize, value: f64 },
}

/// Dense row-major `N_pred x N_gt` matrix of association weights in `[0, 1]`.
/// A zero entry marks an ineligible pair.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> WeightMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, MatchingError> {
        if data.len() != rows * cols {
            return Err(MatchingError::Shape { rows, cols, len: data.len() });
        }
        for (k, &w) in data.iter().enumerate() {
            if !(w >= T::zero() && w <= T::one()) {
                return Err(MatchingError::OutOfRange { row: k / cols.max(1), col: k % cols.max(1), value: w.as_f64() });
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, MatchingError> {
        let cols = rows.first().map_or(0, Vec::len);
        let data: Vec<T> = rows.iter().flatten().copied().collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols + col]
    }

    /// Copy restricted to the first `n` rows.
    pub fn top_rows(&self, n: usize) -> Self {
        let n = n.min(self.rows);
        Self { rows: n, cols: self.cols, data: self.data[..n * self.cols].to_vec() }
    }
}

/// Weights plus the affinity and IoU that produced them, for every pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairScores<T> {
    pub weights: WeightMatrix<T>,
    affinity: Vec<T>,
    iou: Vec<T>,
}

impl<T: Scalar> PairScores<T> {
    pub fn affinity(&self, row: usize, col: usize) -> T {
        self.affinity[row * self.weights.cols + col]
    }

    pub fn iou(&self, row: usize, col: usize) -> T {
        self.iou[row * self.weights.cols + col]
    }

    /// Scores restricted to the first `n` predictions.
    pub fn top_rows(&self, n: usize) -> Self {
        let len = n.min(self.weights.rows) * self.weights.cols;
        Self {
            weights: self.weights.top_rows(n),
            affinity: self.affinity[..len].to_vec(),
            iou: self.iou[..len].to_vec(),
        }
    }
}

/// LET association weights: `a_l * LET-IoU` when the affinity is positive and
/// the LET-IoU exceeds `iou_threshold`, else 0. LET-IoU is only evaluated for
/// pairs with positive affinity.
pub fn let_weight_matrix<T: Scalar>(
    preds: &[Box3D<T>],
    gts: &[Box3D<T>],
    cfg: &ToleranceConfig<T>,
    iou_threshold: T,
) -> Result<PairScores<T>, LetError> {
    let (rows, cols) = (preds.len(), gts.len());
    let mut weights = vec![T::zero(); rows * cols];
    let mut affinity = vec![T::zero(); rows * cols];
    let mut iou = vec![T::zero(); rows * cols];
    let mut gt_axes = Vec::with_capacity(cols);
    for gt in gts {
        let g = gt.center();
        let range = g.norm();
        if range < T::lit(crate::longitudinal::MIN_RANGE) {
            return Err(LetError::DegenerateGroundTruth { range: range.as_f64() });
        }
        gt_axes.push((g * range.recip(), longitudinal_tolerance(range, cfg)));
    }
    for (i, pred) in preds.iter().enumerate() {
        for (j, gt) in gts.iter().enumerate() {
            let (u_gt, tolerance) = gt_axes[j];
            let lon_error = (pred.center() - gt.center()).dot(u_gt).abs();
            let a = affinity_ramp(lon_error, tolerance);
            let k = i * cols + j;
            affinity[k] = a;
            if a > T::zero() {
                let overlap = let_iou(pred, gt)?;
                iou[k] = overlap;
                if overlap > iou_threshold {
                    weights[k] = a * overlap;
                }
            }
        }
    }
    Ok(PairScores { weights: WeightMatrix { rows, cols, data: weights }, affinity, iou })
}

/// Plain 3D IoU weights, gated by `iou_threshold`. Affinity is 1 throughout.
pub fn baseline_weight_matrix<T: Scalar>(preds: &[Box3D<T>], gts: &[Box3D<T>], iou_threshold: T) -> PairScores<T> {
    let (rows, cols) = (preds.len(), gts.len());
    let mut weights = vec![T::zero(); rows * cols];
    let mut iou = vec![T::zero(); rows * cols];
    for (i, pred) in preds.iter().enumerate() {
        for (j, gt) in gts.iter().enumerate() {
            let overlap = iou_3d(pred, gt);
            iou[i * cols + j] = overlap;
            if overlap > iou_threshold {
                weights[i * cols + j] = overlap;
            }
        }
    }
    PairScores { weights: WeightMatrix { rows, cols, data: weights }, affinity: vec![T::one(); rows * cols], iou }
}

/// Matched `(pred, gt)` index pairs sorted by prediction index, plus the
/// leftovers on each side.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

impl Assignment {
    fn from_row_map(rows: usize, cols: usize, row_to_col: &[Option<usize>]) -> Self {
        let mut col_used = vec![false; cols];
        let mut pairs = Vec::new();
        let mut unmatched_preds = Vec::new();
        for (i, m) in row_to_col.iter().enumerate().take(rows) {
            match m {
                Some(j) => {
                    col_used[*j] = true;
                    pairs.push((i, *j));
                }
                None => unmatched_preds.push(i),
            }
        }
        let unmatched_gts = (0..cols).filter(|&j| !col_used[j]).collect();
        Self { pairs, unmatched_preds, unmatched_gts }
    }

    pub fn total_weight<T: Scalar>(&self, w: &WeightMatrix<T>) -> T {
        self.pairs.iter().map(|&(i, j)| w.get(i, j)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair<T> {
    pub pred: usize,
    pub gt: usize,
    pub affinity: T,
    pub iou: T,
    pub weight: T,
}

/// Outcome of matching one frame, class and score cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatchResult<T> {
    pub matches: Vec<MatchedPair<T>>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

impl<T: Scalar> FrameMatchResult<T> {
    pub fn from_assignment(assignment: Assignment, scores: &PairScores<T>) -> Self {
        let matches = assignment
            .pairs
            .iter()
            .map(|&(i, j)| MatchedPair {
                pred: i,
                gt: j,
                affinity: scores.affinity(i, j),
                iou: scores.iou(i, j),
                weight: scores.weights.get(i, j),
            })
            .collect();
        Self { matches, unmatched_preds: assignment.unmatched_preds, unmatched_gts: assignment.unmatched_gts }
    }

    /// Result for a frame where every entry on both sides is unmatched.
    pub fn unmatched(preds: usize, gts: usize) -> Self {
        Self { matches: Vec::new(), unmatched_preds: (0..preds).collect(), unmatched_gts: (0..gts).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matcher {
    #[default]
    Hungarian,
    Greedy,
}

impl Matcher {
    pub fn assign<T: Scalar>(self, w: &WeightMatrix<T>) -> Assignment {
        match self {
            Matcher::Hungarian => hungarian_match(w),
            Matcher::Greedy => greedy_match(w),
        }
    }

    /// Matches and attaches the per-pair scores.
    pub fn match_scores<T: Scalar>(self, scores: &PairScores<T>) -> FrameMatchResult<T> {
        FrameMatchResult::from_assignment(self.assign(&scores.weights), scores)
    }
}

impl std::str::FromStr for Matcher {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hungarian" => Ok(Matcher::Hungarian),
            "greedy" => Ok(Matcher::Greedy),
            other => Err(format!("unknown matcher `{other}` (expected hungarian or greedy)")),
        }
    }
}

/// Greedy matching by descending weight; ties go to the smaller `(pred, gt)`.
pub fn greedy_match<T: Scalar>(w: &WeightMatrix<T>) -> Assignment {
    let mut candidates: Vec<(T, usize, usize)> = Vec::new();
    for i in 0..w.rows {
        for j in 0..w.cols {
            let x = w.get(i, j);
            if x > T::zero() {
                candidates.push((x, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    });
    let mut row_to_col = vec![None; w.rows];
    let mut col_used = vec![false; w.cols];
    for (_, i, j) in candidates {
        if row_to_col[i].is_none() && !col_used[j] {
            row_to_col[i] = Some(j);
            col_used[j] = true;
        }
    }
    Assignment::from_row_map(w.rows, w.cols, &row_to_col)
}

/// Maximum total weight matching with a lexicographic tie-break.
///
/// The positive-weight graph is split into connected components, each solved
/// independently: both the objective and the tie-break decompose over
/// components.
pub fn hungarian_match<T: Scalar>(w: &WeightMatrix<T>) -> Assignment {
    let (rows, cols) = (w.rows, w.cols);
    let mut row_to_col = vec![None; rows];
    // union-find over rows [0, rows) and cols [rows, rows + cols)
    let mut parent: Vec<usize> = (0..rows + cols).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut any_edge = vec![false; rows + cols];
    for i in 0..rows {
        for j in 0..cols {
            if w.get(i, j) > T::zero() {
                any_edge[i] = true;
                any_edge[rows + j] = true;
                let (a, b) = (find(&mut parent, i), find(&mut parent, rows + j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut components: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    let mut slot = vec![usize::MAX; rows + cols];
    for node in 0..rows + cols {
        if !any_edge[node] {
            continue;
        }
        let root = find(&mut parent, node);
        if slot[root] == usize::MAX {
            slot[root] = components.len();
            components.push((Vec::new(), Vec::new()));
        }
        let comp = &mut components[slot[root]];
        if node < rows {
            comp.0.push(node);
        } else {
            comp.1.push(node - rows);
        }
    }
    for (comp_rows, comp_cols) in components {
        let local = solve_component(w, &comp_rows, &comp_cols);
        for (li, lj) in local.into_iter().enumerate() {
            if let Some(lj) = lj {
                row_to_col[comp_rows[li]] = Some(comp_cols[lj]);
            }
        }
    }
    Assignment::from_row_map(rows, cols, &row_to_col)
}

/// Solves one component. Rows and columns are given in ascending global
/// order, so local index order equals global order.
///
/// The component is padded to a square problem of size `p + g`: row `i` may
/// go to its private dummy column `g + i` (unmatched), column `j` may take
/// its private dummy row `p + j`, and dummy rows and columns pair freely.
/// After an optimal solution and duals are found, every optimal assignment
/// is a perfect matching on the tight edges; the lexicographically smallest
/// one is then found by fixing rows in order, trying each row's preferred
/// tight edges first and rerouting along alternating paths.
fn solve_component<T: Scalar>(w: &WeightMatrix<T>, rows: &[usize], cols: &[usize]) -> Vec<Option<usize>> {
    let (p, g) = (rows.len(), cols.len());
    let n = p + g;
    let forbidden = T::lit((n + 1) as f64 * 2.0);
    // cost[r][c], minimization
    let mut cost = vec![forbidden; n * n];
    let mut allowed = vec![false; n * n];
    for li in 0..p {
        for lj in 0..g {
            let x = w.get(rows[li], cols[lj]);
            if x > T::zero() {
                cost[li * n + lj] = -x;
                allowed[li * n + lj] = true;
            }
        }
        cost[li * n + g + li] = T::zero();
        allowed[li * n + g + li] = true;
    }
    for lj in 0..g {
        let r = p + lj;
        cost[r * n + lj] = T::zero();
        allowed[r * n + lj] = true;
        for dc in g..n {
            cost[r * n + dc] = T::zero();
            allowed[r * n + dc] = true;
        }
    }

    let (row_mate, u, v) = min_cost_assignment(&cost, n);

    let tol = T::epsilon() * T::lit(4096.0);
    let mut tight = vec![false; n * n];
    for r in 0..n {
        for c in 0..n {
            tight[r * n + c] = allowed[r * n + c] && (cost[r * n + c] - u[r] - v[c] <= tol || row_mate[r] == c);
        }
    }

    let mut row_of = row_mate.clone();
    let mut col_of = vec![0usize; n];
    for (r, &c) in row_of.iter().enumerate() {
        col_of[c] = r;
    }
    let mut row_fixed = vec![false; n];
    let mut col_fixed = vec![false; n];
    for li in 0..p {
        let preferences = (0..g).chain(std::iter::once(g + li)).filter(|&c| tight[li * n + c]);
        for c in preferences {
            if row_of[li] == c || reroute(li, c, n, &tight, &mut row_of, &mut col_of, &row_fixed, &col_fixed) {
                break;
            }
        }
        row_fixed[li] = true;
        col_fixed[row_of[li]] = true;
    }
    (0..p).map(|li| (row_of[li] < g).then_some(row_of[li])).collect()
}

/// Tries to move row `i` onto column `c` while keeping a perfect matching on
/// tight edges and leaving fixed rows untouched.
#[allow(clippy::too_many_arguments)]
fn reroute(
    i: usize,
    c: usize,
    n: usize,
    tight: &[bool],
    row_of: &mut [usize],
    col_of: &mut [usize],
    row_fixed: &[bool],
    col_fixed: &[bool],
) -> bool {
    let r = col_of[c];
    if row_fixed[r] {
        return false;
    }
    let target = row_of[i];
    // BFS over rows from r looking for a tight edge into `target`
    let mut prev_row = vec![usize::MAX; n];
    let mut seen_row = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    seen_row[r] = true;
    seen_row[i] = true;
    queue.push_back(r);
    let mut end_row = None;
    'search: while let Some(row) = queue.pop_front() {
        for col in 0..n {
            if !tight[row * n + col] || col_fixed[col] || col == c || col == row_of[row] {
                continue;
            }
            if col == target {
                end_row = Some(row);
                break 'search;
            }
            let next = col_of[col];
            if !seen_row[next] && !row_fixed[next] {
                seen_row[next] = true;
                prev_row[next] = row;
                queue.push_back(next);
            }
        }
    }
    let Some(mut row) = end_row else {
        return false;
    };
    // walk back to r; each row hands its column to its predecessor
    let mut col = target;
    loop {
        let old = row_of[row];
        row_of[row] = col;
        col_of[col] = row;
        if row == r {
            break;
        }
        col = old;
        row = prev_row[row];
    }
    row_of[i] = c;
    col_of[c] = i;
    true
}

/// O(n^3) shortest augmenting path assignment on a dense square cost matrix.
/// Returns the column for each row and the row/column potentials.
fn min_cost_assignment<T: Scalar>(cost: &[T], n: usize) -> (Vec<usize>, Vec<T>, Vec<T>) {
    // 1-based internally; index 0 is the virtual source
    let inf = T::infinity();
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] = u[p[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_mate = vec![0usize; n];
    for j in 1..=n {
        row_mate[p[j] - 1] = j - 1;
    }
    (row_mate, u[1..].to_vec(), v[1..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive maximum-weight assignment with the lexicographic tie-break.
    fn brute_force(w: &WeightMatrix<f64>) -> Vec<(usize, usize)> {
        fn rec(
            w: &WeightMatrix<f64>,
            row: usize,
            used: &mut Vec<bool>,
            cur: &mut Vec<(usize, usize)>,
            total: f64,
            best: &mut (f64, Vec<(usize, usize)>),
        ) {
            if row == w.rows() {
                if total > best.0 || (total == best.0 && *cur < best.1) {
                    *best = (total, cur.clone());
                }
                return;
            }
            for j in 0..w.cols() {
                if !used[j] && w.get(row, j) > 0.0 {
                    used[j] = true;
                    cur.push((row, j));
                    rec(w, row + 1, used, cur, total + w.get(row, j), best);
                    cur.pop();
                    used[j] = false;
                }
            }
            rec(w, row + 1, used, cur, total, best);
        }
        let mut best = (f64::NEG_INFINITY, Vec::new());
        rec(w, 0, &mut vec![false; w.cols()], &mut Vec::new(), 0.0, &mut best);
        best.1
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, dyadic: bool) -> WeightMatrix<f64> {
        let data = (0..rows * cols)
            .map(|_| {
                if rng.gen_bool(0.35) {
                    0.0
                } else if dyadic {
                    rng.gen_range(1..=4) as f64 / 4.0
                } else {
                    rng.gen_range(0.01..1.0)
                }
            })
            .collect();
        WeightMatrix::new(rows, cols, data).unwrap()
    }

    fn w(rows: &[&[f64]]) -> WeightMatrix<f64> {
        WeightMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn weight_matrix_validation() {
        assert!(matches!(WeightMatrix::new(2, 2, vec![0.0; 3]), Err(MatchingError::Shape { .. })));
        assert!(matches!(
            WeightMatrix::new(1, 2, vec![0.5, 1.5]),
            Err(MatchingError::OutOfRange { row: 0, col: 1, .. })
        ));
        assert!(WeightMatrix::new(1, 1, vec![f64::NAN]).is_err());
        assert_eq!(WeightMatrix::<f64>::zeros(0, 3).rows(), 0);
    }

    #[test]
    fn singleton() {
        let a = hungarian_match(&w(&[&[1.0]]));
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert!(a.unmatched_preds.is_empty() && a.unmatched_gts.is_empty());
    }

    #[test]
    fn hungarian_beats_greedy_on_crossing_weights() {
        let m = w(&[&[0.9, 0.8], &[0.85, 0.0]]);
        let h = hungarian_match(&m);
        assert_eq!(h.pairs, vec![(0, 1), (1, 0)]);
        assert!((h.total_weight(&m) - 1.65).abs() < 1e-12);
        assert_eq!(brute_force(&m), h.pairs);
        let g = greedy_match(&m);
        assert_eq!(g.pairs, vec![(0, 0)]);
        assert_eq!(g.unmatched_preds, vec![1]);
        assert_eq!(g.unmatched_gts, vec![1]);
    }

    #[test]
    fn all_zero_weights_match_nothing() {
        let m = WeightMatrix::<f64>::zeros(3, 2);
        for a in [hungarian_match(&m), greedy_match(&m)] {
            assert!(a.pairs.is_empty());
            assert_eq!(a.unmatched_preds, vec![0, 1, 2]);
            assert_eq!(a.unmatched_gts, vec![0, 1]);
        }
    }

    #[test]
    fn ties_prefer_smaller_indices() {
        let m = w(&[&[0.5, 0.5], &[0.5, 0.5]]);
        assert_eq!(hungarian_match(&m).pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(greedy_match(&m).pairs, vec![(0, 0), (1, 1)]);
        // total 1.0 either way; matching row 0 is preferred over leaving it out
        let m = w(&[&[0.5, 0.0], &[0.5, 0.0]]);
        assert_eq!(hungarian_match(&m).pairs, vec![(0, 0)]);
        let m = w(&[&[0.0, 0.5], &[0.5, 0.5]]);
        assert_eq!(hungarian_match(&m).pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn hungarian_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..600 {
            let rows = rng.gen_range(0..=6);
            let cols = rng.gen_range(0..=6);
            let m = random_matrix(&mut rng, rows, cols, trial % 2 == 0);
            let h = hungarian_match(&m);
            assert_eq!(h.pairs, brute_force(&m), "trial {trial}: {m:?}");
            assert_eq!(h.unmatched_preds.len() + h.pairs.len(), rows);
            assert_eq!(h.unmatched_gts.len() + h.pairs.len(), cols);
            assert!(h.total_weight(&m) >= greedy_match(&m).total_weight(&m) - 1e-12);
        }
    }

    #[test]
    fn greedy_equals_hungarian_when_diagonally_dominant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let mut data = vec![0.0; 16];
            for i in 0..4 {
                for j in 0..4 {
                    data[i * 4 + j] = if i == j { rng.gen_range(0.8..1.0) } else { rng.gen_range(0.0..0.2) };
                }
            }
            let m = WeightMatrix::new(4, 4, data).unwrap();
            assert_eq!(greedy_match(&m).pairs, brute_force(&m));
            assert_eq!(hungarian_match(&m).pairs, brute_force(&m));
        }
    }

    #[test]
    fn matching_is_permutation_equivariant_for_distinct_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let (rows, cols) = (rng.gen_range(1..8), rng.gen_range(1..8));
            let m = random_matrix(&mut rng, rows, cols, false);
            let mut rp: Vec<usize> = (0..rows).collect();
            let mut cp: Vec<usize> = (0..cols).collect();
            rp.shuffle(&mut rng);
            cp.shuffle(&mut rng);
            let data = (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).map(|(i, j)| m.get(rp[i], cp[j])).collect();
            let shuffled = WeightMatrix::new(rows, cols, data).unwrap();
            for matcher in [Matcher::Hungarian, Matcher::Greedy] {
                let mut back: Vec<_> = matcher.assign(&shuffled).pairs.iter().map(|&(i, j)| (rp[i], cp[j])).collect();
                back.sort();
                assert_eq!(back, matcher.assign(&m).pairs);
            }
        }
    }

    #[test]
    fn matched_pairs_have_positive_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..300 {
            let (rows, cols) = (rng.gen_range(0..10), rng.gen_range(0..10));
            let m = random_matrix(&mut rng, rows, cols, true);
            for a in [hungarian_match(&m), greedy_match(&m)] {
                assert!(a.pairs.iter().all(|&(i, j)| m.get(i, j) > 0.0));
            }
        }
    }

    #[test]
    fn larger_instances_stay_optimal() {
        // compare against the greedy lower bound and an independent O(n^3) solve
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let m = random_matrix(&mut rng, 40, 35, false);
            let h = hungarian_match(&m);
            assert!(h.total_weight(&m) + 1e-12 >= greedy_match(&m).total_weight(&m));
            let n = 40 + 35;
            let mut cost = vec![0.0; n * n];
            for i in 0..40 {
                for j in 0..35 {
                    cost[i * n + j] = -m.get(i, j);
                }
            }
            let (mate, _, _) = min_cost_assignment(&cost, n);
            let reference: f64 = (0..40).filter(|&i| mate[i] < 35).map(|i| m.get(i, mate[i])).sum();
            assert!((h.total_weight(&m) - reference).abs() < 1e-9);
        }
    }

    fn boxed(x: f64, y: f64) -> Box3D<f64> {
        Box3D::new(Vec3::new(x, y, 0.0), 1.0, 1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn let_weights() {
        let cfg = ToleranceConfig::new(0.1, 0.5).unwrap();
        let gt = boxed(20.0, 0.0);
        let s = let_weight_matrix(&[gt], &[gt], &cfg, 0.5).unwrap();
        assert_eq!(s.weights.get(0, 0), 1.0);
        // longitudinal error 2.5 m > 2 m tolerance: ineligible even though LET-IoU would be 1
        let far = let_weight_matrix(&[boxed(22.5, 0.0)], &[gt], &cfg, 0.5).unwrap();
        assert_eq!(far.affinity(0, 0), 0.0);
        assert_eq!(far.weights.get(0, 0), 0.0);
        // 1 m longitudinal error: affinity 0.5, LET-IoU 1
        let near = let_weight_matrix(&[boxed(21.0, 0.0)], &[gt], &cfg, 0.5).unwrap();
        assert!((near.weights.get(0, 0) - 0.5).abs() < 1e-12);
        // 0.25 m lateral shift: aligned center is (20, 0.25) * 400 / 400.0625
        let lateral = boxed(20.0, 0.25);
        let s = let_weight_matrix(&[lateral], &[gt], &cfg, 0.7).unwrap();
        let k = 400.0 / 400.0625;
        let inter = (1.0 - (20.0 - 20.0 * k)) * (1.0 - 0.25 * k);
        assert!((s.iou(0, 0) - inter / (2.0 - inter)).abs() < 1e-12);
        assert!(s.iou(0, 0) < 0.7 && s.affinity(0, 0) > 0.99);
        assert_eq!(s.weights.get(0, 0), 0.0);
    }

    #[test]
    fn baseline_weights() {
        let a = boxed(10.0, 0.0);
        assert_eq!(baseline_weight_matrix(&[a], &[a], 0.3).weights.get(0, 0), 1.0);
        assert_eq!(baseline_weight_matrix(&[boxed(15.0, 0.0)], &[a], 0.3).weights.get(0, 0), 0.0);
        let s = baseline_weight_matrix(&[boxed(10.5, 0.0)], &[a], 0.3);
        assert!((s.weights.get(0, 0) - 1.0 / 3.0).abs() < 1e-12);
    }
}
