//! Minimum-cost rectangular assignment with a cost cap.
//!
//! Entries above the cap (or non-finite) are forbidden. The solver works on a
//! square, padded copy of the matrix in which forbidden entries are replaced
//! by a constant large enough that using one more forbidden pair is never
//! cheaper; any forbidden pair left in the optimum is stripped afterwards.
//!
//! Among all optimal solutions the one whose `(row, col)` sequence, ordered by
//! row, is lexicographically smallest is returned. [`brute_force`] applies the
//! same rule by enumeration and serves as the test oracle.

use thiserror::Error;

/// Largest `min(rows, cols)` accepted by [`brute_force`].
pub const BRUTE_FORCE_MAX_DIM: usize = 8;
const BRUTE_FORCE_MAX_ASSIGNMENTS: f64 = 2.0e7;

/// Relative tolerance below which two totals count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum AssignmentError {
    #[error("brute force refused a {rows}x{cols} problem (limit min dim {BRUTE_FORCE_MAX_DIM})")]
    TooLarge { rows: usize, cols: usize },
    #[error("cost matrix rows have inconsistent lengths")]
    Ragged,
}

/// Dense row-major matrix of costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AssignmentError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(AssignmentError::Ragged);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * k).collect(),
        }
    }

    /// Copy restricted to the given row and column indices, in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |r, c| self.get(rows[r], cols[c]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AssignmentResult {
    /// `(row, col)` pairs sorted by row.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl AssignmentResult {
    fn unmatched(rows: usize, cols: usize) -> Self {
        Self {
            matches: Vec::new(),
            unmatched_rows: (0..rows).collect(),
            unmatched_cols: (0..cols).collect(),
        }
    }

    fn from_row_assignment(rows: usize, cols: usize, assigned: impl Iterator<Item = (usize, usize)>) -> Self {
        let mut row_used = vec![false; rows];
        let mut col_used = vec![false; cols];
        let mut matches: Vec<(usize, usize)> = assigned.collect();
        matches.sort_unstable();
        for &(r, c) in &matches {
            row_used[r] = true;
            col_used[c] = true;
        }
        Self {
            matches,
            unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
            unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
        }
    }

    /// Sum of the matched entries, accumulated in row order.
    pub fn total_cost(&self, cost: &CostMatrix) -> f64 {
        self.matches.iter().map(|&(r, c)| cost.get(r, c)).sum()
    }

    /// Maps local indices back through `rows` / `cols` lookup tables.
    pub fn remap(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self {
            matches: self.matches.iter().map(|&(r, c)| (rows[r], cols[c])).collect(),
            unmatched_rows: self.unmatched_rows.iter().map(|&r| rows[r]).collect(),
            unmatched_cols: self.unmatched_cols.iter().map(|&c| cols[c]).collect(),
        }
    }
}

fn is_allowed(v: f64, cap: f64) -> bool {
    v.is_finite() && v <= cap
}

/// Square, padded problem with forbidden entries substituted.
struct Padded {
    rows: usize,
    cols: usize,
    n: usize,
    data: Vec<f64>,
    tol: f64,
}

impl Padded {
    /// `None` when no entry is allowed.
    fn build(cost: &CostMatrix, cap: f64) -> Option<Self> {
        let (rows, cols) = (cost.rows, cost.cols);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &cost.data {
            if is_allowed(v, cap) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if lo > hi {
            return None;
        }
        let k = rows.min(cols) as f64;
        let spread = (hi - lo).max(hi.abs()).max(lo.abs());
        let margin = if spread > 0.0 { spread } else { 1.0 };
        // With m forbidden pairs the total lies in [mF + (k-m)lo, mF + (k-m)hi];
        // F > lo + k(hi - lo) separates consecutive m.
        let forbidden = lo + k * (hi - lo) + margin;
        let n = rows.max(cols);
        let mut data = vec![0.0; n * n];
        for r in 0..rows {
            for c in 0..cols {
                let v = cost.get(r, c);
                data[r * n + c] = if is_allowed(v, cap) { v } else { forbidden };
            }
        }
        let scale = forbidden.abs().max(lo.abs()).max(hi.abs());
        Some(Self {
            rows,
            cols,
            n,
            data,
            tol: TIE_TOLERANCE * scale,
        })
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    fn finish(&self, cost: &CostMatrix, cap: f64, row_to_col: &[usize]) -> AssignmentResult {
        AssignmentResult::from_row_assignment(
            self.rows,
            self.cols,
            row_to_col
                .iter()
                .enumerate()
                .take(self.rows)
                .filter(|&(r, &c)| c < self.cols && is_allowed(cost.get(r, c), cap))
                .map(|(r, &c)| (r, c)),
        )
    }
}

/// Solves the capped assignment problem. Never fails; an empty or fully
/// forbidden matrix yields an all-unmatched result.
pub fn solve(cost: &CostMatrix, cap: f64) -> AssignmentResult {
    let Some(p) = Padded::build(cost, cap) else {
        return AssignmentResult::unmatched(cost.rows, cost.cols);
    };
    let (u, v, mut row_to_col) = hungarian(&p);
    lexicographic_refine(&p, &u, &v, &mut row_to_col);
    p.finish(cost, cap, &row_to_col)
}

/// O(n³) shortest augmenting path Hungarian algorithm on the padded matrix.
/// Returns row potentials, column potentials and the row → column assignment.
fn hungarian(p: &Padded) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let n = p.n;
    // 1-based internally; index 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        col_owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = p.at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[col_owner[j] - 1] = j - 1;
    }
    (u[1..].to_vec(), v[1..].to_vec(), row_to_col)
}

/// Rewrites an optimal assignment into the lexicographically smallest one.
///
/// Every optimal assignment is a perfect matching on the tight edges of the
/// optimal dual. Rows are fixed in order; each takes the smallest column for
/// which an alternating path through unfixed rows restores a perfect matching.
/// Padding columns compare after all real columns and are interchangeable.
#[allow(clippy::needless_range_loop)] // `j` is a column id compared against several arrays
fn lexicographic_refine(p: &Padded, u: &[f64], v: &[f64], row_to_col: &mut [usize]) {
    let n = p.n;
    let tight = |r: usize, c: usize| p.at(r, c) - u[r] - v[c] <= p.tol;
    let mut col_to_row = vec![0usize; n];
    for (r, &c) in row_to_col.iter().enumerate() {
        col_to_row[c] = r;
    }
    let mut fixed = vec![false; n];
    let mut via = vec![usize::MAX; n];
    let mut queue = Vec::with_capacity(n);

    for r in 0..p.rows {
        let current = row_to_col[r];
        let current_is_pad = current >= p.cols;
        for c in 0..n {
            if c == current || (current_is_pad && c >= p.cols) {
                break;
            }
            if !tight(r, c) {
                continue;
            }
            let holder = col_to_row[c];
            if fixed[holder] {
                continue;
            }
            // Alternating path from `holder` to a row that can take `current`.
            via.iter_mut().for_each(|x| *x = usize::MAX);
            queue.clear();
            queue.push(holder);
            via[holder] = holder;
            let mut head = 0;
            let mut end = None;
            'search: while head < queue.len() {
                let x = queue[head];
                head += 1;
                for j in 0..n {
                    if j == c || j == row_to_col[x] || !tight(x, j) {
                        continue;
                    }
                    if j == current {
                        end = Some(x);
                        break 'search;
                    }
                    let y = col_to_row[j];
                    if fixed[y] || y == r || via[y] != usize::MAX {
                        continue;
                    }
                    via[y] = x;
                    queue.push(y);
                }
            }
            let Some(mut x) = end else { continue };
            let mut take = current;
            loop {
                let old = row_to_col[x];
                row_to_col[x] = take;
                col_to_row[take] = x;
                if x == holder {
                    break;
                }
                take = old;
                x = via[x];
            }
            row_to_col[r] = c;
            col_to_row[c] = r;
            break;
        }
        fixed[r] = true;
    }
}

/// Exhaustive oracle with the same forbidden-entry and tie-break semantics as
/// [`solve`]. Refuses problems whose smaller side exceeds
/// [`BRUTE_FORCE_MAX_DIM`] or whose enumeration would be unreasonably large.
pub fn brute_force(cost: &CostMatrix, cap: f64) -> Result<AssignmentResult, AssignmentError> {
    let (rows, cols) = (cost.rows, cost.cols);
    let k = rows.min(cols);
    let n = rows.max(cols);
    let count: f64 = (0..k).map(|i| (n - i) as f64).product();
    if k > BRUTE_FORCE_MAX_DIM || count > BRUTE_FORCE_MAX_ASSIGNMENTS {
        return Err(AssignmentError::TooLarge { rows, cols });
    }
    let Some(p) = Padded::build(cost, cap) else {
        return Ok(AssignmentResult::unmatched(rows, cols));
    };

    struct Search<'a> {
        p: &'a Padded,
        skips_left: usize,
        col_used: Vec<bool>,
        current: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
    }

    const SKIP: usize = usize::MAX;

    impl Search<'_> {
        fn run(&mut self, r: usize, partial: f64) {
            if r == self.p.rows {
                let better = match &self.best {
                    None => true,
                    Some((b, _)) => partial < *b - self.p.tol,
                };
                if better {
                    self.best = Some((partial, self.current.clone()));
                }
                return;
            }
            for c in 0..self.p.cols {
                if self.col_used[c] {
                    continue;
                }
                self.col_used[c] = true;
                self.current.push(c);
                let next = partial + self.p.at(r, c);
                self.run(r + 1, next);
                self.current.pop();
                self.col_used[c] = false;
            }
            if self.skips_left > 0 {
                self.skips_left -= 1;
                self.current.push(SKIP);
                self.run(r + 1, partial);
                self.current.pop();
                self.skips_left += 1;
            }
        }
    }

    let mut search = Search {
        p: &p,
        skips_left: rows - k,
        col_used: vec![false; cols],
        current: Vec::with_capacity(rows),
        best: None,
    };
    search.run(0, 0.0);
    let (_, best) = search.best.expect("at least one assignment exists");
    let row_to_col: Vec<usize> = best.into_iter().map(|c| if c == SKIP { cols } else { c }).collect();
    Ok(p.finish(cost, cap, &row_to_col))
}
