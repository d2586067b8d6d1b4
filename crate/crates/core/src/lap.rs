//! Exact minimum-cost rectangular linear assignment.
//!
//! This is the MAP-inference oracle behind structure collection and behind
//! both matching stages of the tracker. Entries may be `+inf` to mark
//! forbidden (gated) pairs; forbidden pairs never appear in a solution and
//! rows or columns whose pairs are all forbidden are left unassigned.

use crate::mat::Mat;
use crate::num::{real, Real};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LapError {
    #[error("brute-force assignment is limited to min(M,N) <= {limit}, got {got}")]
    TooLarge { limit: usize, got: usize },
}

/// A one-to-one matching between rows and columns.
///
/// `pairs` is sorted by row index; each row and each column appears at most
/// once and no pair sits on a forbidden entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment<T> {
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: T,
}

impl<T: Real> Assignment<T> {
    pub fn empty() -> Self {
        Self {
            pairs: Vec::new(),
            total_cost: T::zero(),
        }
    }
}

/// Minimum-cost assignment over all maximum-cardinality matchings that avoid
/// forbidden (`+inf`) entries.
///
/// Deterministic: rows are inserted in increasing index order and column
/// scans resolve ties toward the lowest column index, so among equal-cost
/// optima the lower-indexed pairs win.
pub fn solve_min_assignment<T: Real>(costs: &Mat<T>) -> Assignment<T> {
    let (m, n) = (costs.rows(), costs.cols());
    if m == 0 || n == 0 {
        return Assignment::empty();
    }

    let transposed = m > n;
    let work = if transposed {
        costs.transpose()
    } else {
        costs.clone()
    };
    let (wm, wn) = (work.rows(), work.cols());

    // Finite sentinel for forbidden entries: one extra sentinel edge always
    // costs more than any rearrangement of finite entries, so minimizing the
    // padded total first maximizes cardinality over finite edges.
    let big = forbidden_sentinel(&work);
    let mut state = SolverState::new(wm, wn);
    for row in 0..wm {
        state.augment_row(row, |i, j| {
            let c = work[(i, j)];
            if c.is_finite() {
                c
            } else {
                big
            }
        });
    }

    let mut pairs = Vec::with_capacity(wm);
    for (col, row) in state.col_to_row.iter().enumerate() {
        if let Some(row) = *row {
            if work[(row, col)].is_finite() {
                pairs.push(if transposed { (col, row) } else { (row, col) });
            }
        }
    }
    pairs.sort_unstable();
    let total_cost = pairs.iter().map(|&(i, j)| costs[(i, j)]).sum();
    Assignment { pairs, total_cost }
}

/// Reference oracle: enumerate every matching that avoids forbidden entries,
/// keep the maximum-cardinality ones, and return the cheapest (ties broken by
/// lexicographically smallest pair list).
pub fn brute_force_assignment<T: Real>(costs: &Mat<T>) -> Result<Assignment<T>, LapError> {
    const LIMIT: usize = 8;
    let (m, n) = (costs.rows(), costs.cols());
    let k = m.min(n);
    if k > LIMIT {
        return Err(LapError::TooLarge { limit: LIMIT, got: k });
    }
    if m == 0 || n == 0 {
        return Ok(Assignment::empty());
    }

    let target = max_cardinality(costs);
    let mut best: Option<Assignment<T>> = None;
    let mut chosen = Vec::new();
    let mut used_cols = vec![false; n];
    enumerate(costs, 0, target, &mut chosen, &mut used_cols, &mut best);
    Ok(best.unwrap_or_else(Assignment::empty))
}

fn enumerate<T: Real>(
    costs: &Mat<T>,
    row: usize,
    target: usize,
    chosen: &mut Vec<(usize, usize)>,
    used_cols: &mut [bool],
    best: &mut Option<Assignment<T>>,
) {
    let m = costs.rows();
    if chosen.len() + (m - row) < target {
        return; // cannot reach maximum cardinality anymore
    }
    if row == m {
        let total_cost: T = chosen.iter().map(|&(i, j)| costs[(i, j)]).sum();
        let replace = match best {
            None => true,
            Some(b) => {
                total_cost < b.total_cost
                    || (total_cost == b.total_cost && chosen.as_slice() < b.pairs.as_slice())
            }
        };
        if replace {
            *best = Some(Assignment {
                pairs: chosen.clone(),
                total_cost,
            });
        }
        return;
    }
    for col in 0..costs.cols() {
        if !used_cols[col] && costs[(row, col)].is_finite() {
            used_cols[col] = true;
            chosen.push((row, col));
            enumerate(costs, row + 1, target, chosen, used_cols, best);
            chosen.pop();
            used_cols[col] = false;
        }
    }
    // leave this row unassigned
    enumerate(costs, row + 1, target, chosen, used_cols, best);
}

/// Maximum matching cardinality over finite entries (augmenting DFS).
fn max_cardinality<T: Real>(costs: &Mat<T>) -> usize {
    let (m, n) = (costs.rows(), costs.cols());
    let mut col_to_row = vec![usize::MAX; n];
    let mut count = 0;
    for row in 0..m {
        let mut visited = vec![false; n];
        if try_assign(costs, row, &mut visited, &mut col_to_row) {
            count += 1;
        }
    }
    count
}

fn try_assign<T: Real>(
    costs: &Mat<T>,
    row: usize,
    visited: &mut [bool],
    col_to_row: &mut [usize],
) -> bool {
    for col in 0..costs.cols() {
        if visited[col] || !costs[(row, col)].is_finite() {
            continue;
        }
        visited[col] = true;
        if col_to_row[col] == usize::MAX
            || try_assign(costs, col_to_row[col], visited, col_to_row)
        {
            col_to_row[col] = row;
            return true;
        }
    }
    false
}

fn forbidden_sentinel<T: Real>(work: &Mat<T>) -> T {
    let max_finite = work
        .iter()
        .filter(|x| x.is_finite())
        .fold(T::zero(), T::max);
    (max_finite + T::one()) * real::<T>((work.rows() + 1) as f64)
}

// ---------------------------------------------------------------------------
// Shortest-augmenting-path machinery with dual potentials.
//
// Kept separate from the public entry point so the k-best enumeration can
// clone a solved state and re-augment a single row after banning one edge.
// ---------------------------------------------------------------------------

#[derive(Clone)]
pub(crate) struct SolverState<T> {
    pub(crate) rows: usize,
    pub(crate) col_to_row: Vec<Option<usize>>,
    u: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> SolverState<T> {
    pub(crate) fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            col_to_row: vec![None; cols],
            u: vec![T::zero(); rows],
            v: vec![T::zero(); cols],
        }
    }

    pub(crate) fn row_to_col(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.rows];
        for (col, row) in self.col_to_row.iter().enumerate() {
            if let Some(row) = *row {
                out[row] = Some(col);
            }
        }
        out
    }

    /// Insert `row` into the matching via a shortest augmenting path, keeping
    /// the dual potentials feasible. `cost` must be finite and nonnegative
    /// reduced against the current potentials (true for nonnegative costs and
    /// for any state reached through this method after edge removals).
    pub(crate) fn augment_row(&mut self, row: usize, cost: impl Fn(usize, usize) -> T) {
        let n = self.col_to_row.len();
        debug_assert!(n > 0);
        // Index 0 is a virtual column holding the row being inserted; real
        // column j lives at index j + 1.
        let mut minv = vec![T::infinity(); n + 1];
        let mut way = vec![0usize; n + 1];
        let mut used = vec![false; n + 1];
        let mut virtual_v = T::zero();
        let mut j0 = 0usize;

        loop {
            used[j0] = true;
            let i0 = if j0 == 0 {
                row
            } else {
                self.col_to_row[j0 - 1].expect("scanned column must be matched")
            };
            let mut delta = T::infinity();
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j - 1) - self.u[i0] - self.v[j - 1];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            debug_assert!(j1 != 0, "no reachable column during augmentation");
            for j in 0..=n {
                if used[j] {
                    let r = if j == 0 {
                        Some(row)
                    } else {
                        self.col_to_row[j - 1]
                    };
                    if let Some(r) = r {
                        self.u[r] = self.u[r] + delta;
                    }
                    if j == 0 {
                        virtual_v = virtual_v - delta;
                    } else {
                        self.v[j - 1] = self.v[j - 1] - delta;
                    }
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if self.col_to_row[j0 - 1].is_none() {
                break;
            }
        }

        // walk the alternating path back, shifting assignments
        loop {
            let j1 = way[j0];
            self.col_to_row[j0 - 1] = if j1 == 0 {
                Some(row)
            } else {
                self.col_to_row[j1 - 1]
            };
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Best-first enumeration of complete assignments (Murty partitioning).
// ---------------------------------------------------------------------------

/// Enumerate complete assignments (every row matched; requires
/// `costs.rows() <= costs.cols()` and all entries finite) in nondecreasing
/// total-cost order, at most `limit` of them. Deterministic: cost ties are
/// resolved by queue insertion order.
///
/// Best-first partitioning over the solution space. The problem is squared
/// with zero-cost dummy rows so a child's re-augmentation after banning one
/// edge has a unique free column, which keeps the inherited dual potentials
/// valid (square LP duality needs no sign conditions on them). Partitioning
/// only on real-row pairs quotients away the interchangeable dummy
/// completions. Children enter the queue priced at their parent's cost (a
/// valid lower bound) and are solved lazily when they reach the front, so
/// the number of augmentations tracks the number of pops instead of
/// pops x rows.
pub(crate) fn k_best_complete_assignments<T: Real>(
    costs: &Mat<T>,
    limit: usize,
) -> Vec<Assignment<T>> {
    let (m, n) = (costs.rows(), costs.cols());
    debug_assert!(m <= n);
    if limit == 0 || m == 0 || n == 0 {
        return Vec::new();
    }

    let big = forbidden_sentinel(costs);
    let real_cost = |i: usize, j: usize| if i < m { costs[(i, j)] } else { T::zero() };

    let mut root_state = SolverState::new(n, n);
    for row in 0..n {
        root_state.augment_row(row, |i, j| real_cost(i, j));
    }
    let root = solved_node(
        root_state,
        vec![None; n],
        vec![None; n],
        BanSet::new(n, n),
        m,
        costs,
    )
    .expect("the root solve uses no banned edges");

    let mut queue: std::collections::BinaryHeap<std::cmp::Reverse<HeapKey<T>>> =
        std::collections::BinaryHeap::new();
    let mut payloads: Vec<Payload<T>> = Vec::new();
    let root_cost = root.cost;
    push_entry(&mut queue, &mut payloads, Payload::Solved(Rc::new(root)), root_cost);

    let mut out: Vec<Assignment<T>> = Vec::with_capacity(limit);
    while out.len() < limit {
        let Some(entry) = queue.pop() else { break };
        match std::mem::replace(&mut payloads[entry.0.node], Payload::Taken) {
            Payload::Taken => unreachable!("queue entries are popped once"),
            Payload::Solved(ctx) => {
                out.push(Assignment {
                    pairs: ctx.full_pairs.clone(),
                    total_cost: ctx.cost,
                });
                // Price child k at parent cost plus the banned row's cheapest
                // allowed reduced cost: rerouting the row costs at least that
                // much, and reduced costs are nonnegative elsewhere along the
                // augmenting path. Children priced at +inf are infeasible.
                let mut col_taken = vec![false; n];
                for (fc, fr) in ctx.forced_col.iter().enumerate() {
                    if fr.is_some() {
                        col_taken[fc] = true;
                    }
                }
                for (k, &(row, col)) in ctx.free_pairs.iter().enumerate() {
                    let mut reroute = T::infinity();
                    for j in 0..n {
                        if j == col || col_taken[j] || ctx.banned.contains(row, j) {
                            continue;
                        }
                        let red = real_cost(row, j) - ctx.state.u[row] - ctx.state.v[j];
                        if red < reroute {
                            reroute = red;
                        }
                    }
                    if reroute < T::infinity() {
                        push_entry(
                            &mut queue,
                            &mut payloads,
                            Payload::Pending {
                                parent: Rc::clone(&ctx),
                                split: k,
                            },
                            ctx.cost + reroute.max(T::zero()),
                        );
                    }
                    col_taken[col] = true;
                }
            }
            Payload::Pending { parent, split } => {
                let (row, col) = parent.free_pairs[split];
                let mut state = parent.state.clone();
                let mut forced_row = parent.forced_row.clone();
                let mut forced_col = parent.forced_col.clone();
                let mut banned = parent.banned.clone();
                for &(fr, fc) in &parent.free_pairs[..split] {
                    forced_row[fr] = Some(fc);
                    forced_col[fc] = Some(fr);
                }
                banned.insert(row, col);
                state.col_to_row[col] = None;
                state.augment_row(row, |i, j| {
                    if is_banned(i, j, &forced_row, &forced_col, &banned) {
                        big
                    } else {
                        real_cost(i, j)
                    }
                });
                if let Some(node) = solved_node(state, forced_row, forced_col, banned, m, costs) {
                    // clamp against the popped bound so float rounding can
                    // never push a key below the current frontier
                    let key = node.cost.max(entry.0.cost);
                    push_entry(&mut queue, &mut payloads, Payload::Solved(Rc::new(node)), key);
                }
            }
        }
    }
    out
}

use std::rc::Rc;

/// A solved subproblem: its optimum plus the constraints defining it.
struct SolvedNode<T> {
    state: SolverState<T>,
    forced_row: Vec<Option<usize>>,
    forced_col: Vec<Option<usize>>,
    banned: BanSet,
    /// All real-row pairs of the optimum, in row order.
    full_pairs: Vec<(usize, usize)>,
    /// The non-forced real pairs, the partition axis for children.
    free_pairs: Vec<(usize, usize)>,
    cost: T,
}

enum Payload<T> {
    Solved(Rc<SolvedNode<T>>),
    Pending { parent: Rc<SolvedNode<T>>, split: usize },
    Taken,
}

/// Package a solved state; `None` when the optimum rides a banned edge
/// (the subproblem is infeasible). Cost is summed in row order over the
/// real rows for bit-stable totals.
fn solved_node<T: Real>(
    state: SolverState<T>,
    forced_row: Vec<Option<usize>>,
    forced_col: Vec<Option<usize>>,
    banned: BanSet,
    real_rows: usize,
    costs: &Mat<T>,
) -> Option<SolvedNode<T>> {
    let row_to_col = state.row_to_col();
    let mut full_pairs = Vec::with_capacity(real_rows);
    let mut free_pairs = Vec::new();
    let mut cost = T::zero();
    for (row, col) in row_to_col.iter().take(real_rows).enumerate() {
        let col = col.expect("complete assignment");
        if is_banned(row, col, &forced_row, &forced_col, &banned) {
            return None;
        }
        cost = cost + costs[(row, col)];
        full_pairs.push((row, col));
        if forced_row[row].is_none() {
            free_pairs.push((row, col));
        }
    }
    Some(SolvedNode {
        state,
        forced_row,
        forced_col,
        banned,
        full_pairs,
        free_pairs,
        cost,
    })
}

fn push_entry<T: Real>(
    queue: &mut std::collections::BinaryHeap<std::cmp::Reverse<HeapKey<T>>>,
    payloads: &mut Vec<Payload<T>>,
    payload: Payload<T>,
    key: T,
) {
    let seq = payloads.len() as u64;
    payloads.push(payload);
    queue.push(std::cmp::Reverse(HeapKey {
        cost: key,
        seq,
        node: seq as usize,
    }));
}

/// Dense bitset over (row, col) pairs; bans are checked inside the O(n^2)
/// augmentation inner loop, so lookups must be O(1).
#[derive(Clone)]
struct BanSet {
    words: Vec<u64>,
    cols: usize,
}

impl BanSet {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            words: vec![0; (rows * cols).div_ceil(64)],
            cols,
        }
    }

    #[inline]
    fn contains(&self, i: usize, j: usize) -> bool {
        let bit = i * self.cols + j;
        self.words[bit / 64] & (1 << (bit % 64)) != 0
    }

    fn insert(&mut self, i: usize, j: usize) {
        let bit = i * self.cols + j;
        self.words[bit / 64] |= 1 << (bit % 64);
    }
}

#[inline]
fn is_banned(
    i: usize,
    j: usize,
    forced_row: &[Option<usize>],
    forced_col: &[Option<usize>],
    banned: &BanSet,
) -> bool {
    if let Some(c) = forced_row[i] {
        if c != j {
            return true;
        }
    }
    if let Some(r) = forced_col[j] {
        if r != i {
            return true;
        }
    }
    banned.contains(i, j)
}

struct HeapKey<T> {
    cost: T,
    seq: u64,
    node: usize,
}

impl<T: Real> PartialEq for HeapKey<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cost == other.cost && self.seq == other.seq
    }
}
impl<T: Real> Eq for HeapKey<T> {}
impl<T: Real> PartialOrd for HeapKey<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for HeapKey<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // costs are finite by construction, so the comparison is total
        self.cost
            .partial_cmp(&other.cost)
            .expect("assignment costs must not be NaN")
            .then(self.seq.cmp(&other.seq))
    }
}
