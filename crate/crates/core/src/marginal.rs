//! Marginal matching probabilities over collected assignment structures.
//!
//! A structure is one complete one-to-one matching between detections and
//! tracks (complete on the smaller side). [`collect_structures`] gathers the
//! highest-scoring structures by best-first enumeration seeded at the
//! assignment optimum, weights them with a softmax over their total feature
//! distance, and [`marginal_probabilities`] reads off per-pair marginals:
//! the probability mass of all collected structures containing that pair.
//!
//! [`exact_marginals`] is the ground-truth oracle (full enumeration) and the
//! two softmax baselines reproduce the simpler per-row / bidirectional
//! normalizations used for ablations.

use crate::lap::{k_best_complete_assignments, solve_min_assignment};
use crate::mat::Mat;
use crate::num::{real, Real};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarginalError {
    #[error("similarity entries must be finite, got {value} at ({row},{col})")]
    NonFinite { value: f64, row: usize, col: usize },
    #[error("exact enumeration is limited to min(M,N) <= {limit}, got {got}")]
    TooLarge { limit: usize, got: usize },
    #[error("exact enumeration would visit {count} matchings (cap {cap})")]
    TooManyMatchings { count: u128, cap: u128 },
}

/// Row-major flattening of the similarity matrix, clamped to [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector<T> {
    values: Vec<T>,
    rows: usize,
    cols: usize,
}

impl<T: Real> ScoreVector<T> {
    /// Clamp a similarity matrix into [0,1] and flatten it.
    pub fn from_similarity(sim: &Mat<T>) -> Result<Self, MarginalError> {
        for i in 0..sim.rows() {
            for j in 0..sim.cols() {
                if !sim[(i, j)].is_finite() {
                    return Err(MarginalError::NonFinite {
                        value: sim[(i, j)].to_f64().unwrap_or(f64::NAN),
                        row: i,
                        col: j,
                    });
                }
            }
        }
        Ok(Self {
            values: sim
                .iter()
                .map(|s| s.max(T::zero()).min(T::one()))
                .collect(),
            rows: sim.rows(),
            cols: sim.cols(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    fn score(&self, det: usize, track: usize) -> T {
        self.values[det * self.cols + track]
    }
}

/// Scaled feature distances, re-clamped to [0,1]. This is the matrix that
/// feeds distance-based matching; the softmax exponent uses the unclamped
/// scaled values so the scale keeps acting as an inverse temperature.
#[derive(Debug, Clone)]
pub struct CostVector<T> {
    values: Vec<T>,
    rows: usize,
    cols: usize,
}

impl<T: Real> CostVector<T> {
    pub fn from_scores(scores: &ScoreVector<T>, distance_scale: T) -> Self {
        Self {
            values: scores
                .values
                .iter()
                .map(|&s| ((T::one() - s) * distance_scale).min(T::one()))
                .collect(),
            rows: scores.rows,
            cols: scores.cols,
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn as_mat(&self) -> Mat<T> {
        Mat::from_flat(self.rows, self.cols, self.values.clone())
    }
}

/// One binary one-to-one matching; pairs are (detection, track), sorted by
/// detection index and complete on the smaller side.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Structure {
    pairs: Vec<(usize, usize)>,
}

impl Structure {
    fn new(mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        Self { pairs }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn contains(&self, det: usize, track: usize) -> bool {
        self.pairs.binary_search(&(det, track)).is_ok()
    }
}

/// Distinct structures with softmax weights over their total feature
/// distance. The first structure is always the assignment optimum.
#[derive(Debug, Clone)]
pub struct StructureSet<T> {
    structures: Vec<Structure>,
    weights: Vec<T>,
    costs: Vec<T>,
}

impl<T: Real> StructureSet<T> {
    fn empty() -> Self {
        Self {
            structures: Vec::new(),
            weights: Vec::new(),
            costs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.structures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.structures.is_empty()
    }

    pub fn structures(&self) -> &[Structure] {
        &self.structures
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn costs(&self) -> &[T] {
        &self.costs
    }
}

/// Collect up to `steps` distinct high-scoring structures (unit distance
/// scale). See [`collect_structures_scaled`].
pub fn collect_structures<T: Real>(scores: &ScoreVector<T>, steps: usize) -> StructureSet<T> {
    collect_structures_scaled(scores, steps, T::one())
}

/// Collect up to `steps` distinct structures in decreasing score order,
/// starting from the assignment optimum, and weight them by
/// `softmax(-distance_scale * total_feature_distance)`.
///
/// Stops early once the structure space is exhausted, so small spaces are
/// covered completely. Deterministic for identical inputs.
pub fn collect_structures_scaled<T: Real>(
    scores: &ScoreVector<T>,
    steps: usize,
    distance_scale: T,
) -> StructureSet<T> {
    let (m, n) = (scores.rows, scores.cols);
    if steps == 0 || m == 0 || n == 0 {
        return StructureSet::empty();
    }

    // Orient so rows are the smaller side; enumeration requires rows <= cols.
    let transposed = m > n;
    let cost_mat = if transposed {
        Mat::from_fn(n, m, |t, d| T::one() - scores.score(d, t))
    } else {
        Mat::from_fn(m, n, |d, t| T::one() - scores.score(d, t))
    };

    let assignments = k_best_complete_assignments(&cost_mat, steps);
    let structures: Vec<Structure> = assignments
        .iter()
        .map(|a| {
            Structure::new(
                a.pairs
                    .iter()
                    .map(|&(r, c)| if transposed { (c, r) } else { (r, c) })
                    .collect(),
            )
        })
        .collect();

    let costs: Vec<T> = structures
        .iter()
        .map(|z| structure_cost(scores, z, distance_scale))
        .collect();
    let weights = softmax_neg(&costs);
    StructureSet {
        structures,
        weights,
        costs,
    }
}

fn structure_cost<T: Real>(scores: &ScoreVector<T>, z: &Structure, distance_scale: T) -> T {
    let mut c = T::zero();
    for &(d, t) in z.pairs() {
        c = c + (T::one() - scores.score(d, t)) * distance_scale;
    }
    c
}

/// Stable softmax of `-costs`.
fn softmax_neg<T: Real>(costs: &[T]) -> Vec<T> {
    if costs.is_empty() {
        return Vec::new();
    }
    let min = costs.iter().copied().fold(T::infinity(), T::min);
    let exps: Vec<T> = costs.iter().map(|&c| (-(c - min)).exp()).collect();
    let z: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Per-pair marginals: `P(i,j)` is the weight mass of member structures
/// containing `(i,j)`.
pub fn marginal_probabilities<T: Real>(
    set: &StructureSet<T>,
    rows: usize,
    cols: usize,
) -> Mat<T> {
    let mut p = Mat::zeros(rows, cols);
    for (z, &w) in set.structures.iter().zip(set.weights.iter()) {
        for &(d, t) in z.pairs() {
            p[(d, t)] = p[(d, t)] + w;
        }
    }
    p
}

const EXACT_SIDE_LIMIT: usize = 7;
const EXACT_COUNT_CAP: u128 = 10_000_000;

/// Ground-truth oracle (unit distance scale): enumerate all complete
/// matchings of the smaller side, softmax-weight them and marginalize.
pub fn exact_marginals<T: Real>(scores: &ScoreVector<T>) -> Result<Mat<T>, MarginalError> {
    exact_marginals_scaled(scores, T::one())
}

/// Ground-truth oracle over the full structure space. Independent of the
/// collection path: plain recursive enumeration over column choices.
pub fn exact_marginals_scaled<T: Real>(
    scores: &ScoreVector<T>,
    distance_scale: T,
) -> Result<Mat<T>, MarginalError> {
    let (m, n) = (scores.rows, scores.cols);
    if m == 0 || n == 0 {
        return Ok(Mat::zeros(m, n));
    }
    let small = m.min(n);
    if small > EXACT_SIDE_LIMIT {
        return Err(MarginalError::TooLarge {
            limit: EXACT_SIDE_LIMIT,
            got: small,
        });
    }
    let large = m.max(n);
    let mut count: u128 = 1;
    for k in 0..small {
        count = count.saturating_mul((large - k) as u128);
    }
    if count > EXACT_COUNT_CAP {
        return Err(MarginalError::TooManyMatchings {
            count,
            cap: EXACT_COUNT_CAP,
        });
    }

    // distances in the orientation where rows are the smaller side
    let transposed = m > n;
    let dist = if transposed {
        Mat::from_fn(n, m, |t, d| (T::one() - scores.score(d, t)) * distance_scale)
    } else {
        Mat::from_fn(m, n, |d, t| (T::one() - scores.score(d, t)) * distance_scale)
    };

    // pass 1: minimum total cost for softmax stability
    let mut min_cost = T::infinity();
    walk(&dist, 0, T::zero(), &mut vec![false; dist.cols()], &mut |c, _| {
        if c < min_cost {
            min_cost = c;
        }
    });

    // pass 2: accumulate unnormalized weights per pair
    let mut numer = Mat::<T>::zeros(dist.rows(), dist.cols());
    let mut z = T::zero();
    let mut cols = Vec::with_capacity(dist.rows());
    walk_cols(&dist, 0, T::zero(), &mut vec![false; dist.cols()], &mut cols, &mut |c, cols| {
        let w = (-(c - min_cost)).exp();
        z = z + w;
        for (r, &col) in cols.iter().enumerate() {
            numer[(r, col)] = numer[(r, col)] + w;
        }
    });

    let p = numer.map(|x| x / z);
    Ok(if transposed { p.transpose() } else { p })
}

fn walk<T: Real>(
    dist: &Mat<T>,
    row: usize,
    acc: T,
    used: &mut Vec<bool>,
    visit: &mut impl FnMut(T, usize),
) {
    if row == dist.rows() {
        visit(acc, row);
        return;
    }
    for col in 0..dist.cols() {
        if !used[col] {
            used[col] = true;
            walk(dist, row + 1, acc + dist[(row, col)], used, visit);
            used[col] = false;
        }
    }
}

fn walk_cols<T: Real>(
    dist: &Mat<T>,
    row: usize,
    acc: T,
    used: &mut Vec<bool>,
    cols: &mut Vec<usize>,
    visit: &mut impl FnMut(T, &[usize]),
) {
    if row == dist.rows() {
        visit(acc, cols);
        return;
    }
    for col in 0..dist.cols() {
        if !used[col] {
            used[col] = true;
            cols.push(col);
            walk_cols(dist, row + 1, acc + dist[(row, col)], used, cols, visit);
            cols.pop();
            used[col] = false;
        }
    }
}

/// Per-row softmax of `sim / temperature`; each row sums to 1.
pub fn row_softmax_probabilities<T: Real>(sim: &Mat<T>, temperature: T) -> Mat<T> {
    let mut out = Mat::zeros(sim.rows(), sim.cols());
    for i in 0..sim.rows() {
        let row = sim.row(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&s| ((s - max) / temperature).exp()).collect();
        let z: T = exps.iter().copied().sum();
        for (j, e) in exps.into_iter().enumerate() {
            out[(i, j)] = e / z;
        }
    }
    out
}

/// Mean of the row softmax and the column softmax of `sim`.
pub fn bidirectional_softmax_probabilities<T: Real>(sim: &Mat<T>, temperature: T) -> Mat<T> {
    let by_row = row_softmax_probabilities(sim, temperature);
    let by_col = row_softmax_probabilities(&sim.transpose(), temperature).transpose();
    let half = real::<T>(0.5);
    Mat::from_fn(sim.rows(), sim.cols(), |i, j| {
        (by_row[(i, j)] + by_col[(i, j)]) * half
    })
}

/// The assignment optimum on the clamped scores (the structure every
/// collected set starts from).
pub fn map_structure<T: Real>(scores: &ScoreVector<T>) -> Structure {
    let dist = Mat::from_fn(scores.rows, scores.cols, |d, t| T::one() - scores.score(d, t));
    Structure::new(solve_min_assignment(&dist).pairs)
}
