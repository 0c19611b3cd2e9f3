//! Sparse LU factorization of a simplex basis with product-form updates.
//!
//! The factor is computed by right-looking Gaussian elimination with a
//! Markowitz-style pivot rule: the active column with the fewest entries is
//! chosen, and within it the row with the fewest entries among those passing
//! a relative threshold test. Basis changes after factorization are appended
//! as eta columns (product form of the inverse) until the next refactor.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Relative threshold for accepting a pivot within its column.
const PIVOT_THRESHOLD: f64 = 0.1;
/// Absolute magnitude below which a column is treated as singular.
const SINGULAR_TOL: f64 = 1e-11;
/// Entries of eta columns smaller than this are dropped.
const DROP_TOL: f64 = 1e-14;

/// A basis that could not be fully factorized.
#[derive(Debug, Clone)]
pub struct Singular {
    /// Basis positions whose columns found no acceptable pivot.
    pub positions: Vec<usize>,
    /// Rows left without a pivot; same length as `positions`.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Eta {
    pos: usize,
    pivot: f64,
    entries: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct Factor {
    m: usize,
    /// Pivot sequence: (row, basis position, pivot value).
    pivots: Vec<(usize, usize, f64)>,
    /// Row multipliers of each elimination step, indexed by pivot step.
    lower: Vec<Vec<(usize, f64)>>,
    /// Off-diagonal entries of each pivot row, keyed by basis position.
    upper: Vec<Vec<(usize, f64)>>,
    etas: Vec<Eta>,
    eta_nnz: usize,
    factor_nnz: usize,
}

impl Factor {
    /// Factorizes the `m × m` matrix whose `k`-th column is `cols[k]` (sparse, row-indexed).
    pub fn new(m: usize, cols: &[Vec<(usize, f64)>]) -> Result<Self, Singular> {
        debug_assert_eq!(cols.len(), m);
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        let mut col_pat: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (c, col) in cols.iter().enumerate() {
            for &(r, v) in col {
                if v != 0.0 {
                    rows[r].push((c, v));
                    col_pat[c].push(r);
                }
            }
        }
        let mut row_done = vec![false; m];
        let mut col_done = vec![false; m];
        let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
            (0..m).map(|c| Reverse((col_pat[c].len(), c))).collect();
        let mut pos_mark = vec![usize::MAX; m];

        let mut pivots = Vec::with_capacity(m);
        let mut lower = Vec::with_capacity(m);
        let mut upper = Vec::with_capacity(m);
        let mut bad_cols = Vec::new();

        while let Some(Reverse((count, c))) = heap.pop() {
            if col_done[c] || count != col_pat[c].len() {
                continue;
            }
            col_done[c] = true;
            // Column values and threshold candidate.
            let mut cmax = 0.0f64;
            for &r in &col_pat[c] {
                cmax = cmax.max(entry(&rows[r], c).abs());
            }
            if cmax < SINGULAR_TOL {
                bad_cols.push(c);
                // Drop the column from its rows so row counts stay honest.
                for &r in &col_pat[c] {
                    rows[r].retain(|&(j, _)| j != c);
                }
                col_pat[c].clear();
                continue;
            }
            let mut best: Option<(usize, usize, f64)> = None; // (row len, row, value)
            for &r in &col_pat[c] {
                let v = entry(&rows[r], c);
                if v.abs() < PIVOT_THRESHOLD * cmax {
                    continue;
                }
                let len = rows[r].len();
                let better = match best {
                    None => true,
                    Some((bl, br, bv)) => {
                        len < bl || (len == bl && (v.abs() > bv.abs() || (v.abs() == bv.abs() && r < br)))
                    }
                };
                if better {
                    best = Some((len, r, v));
                }
            }
            let (_, pr, pv) = best.expect("threshold candidate exists when cmax > 0");
            row_done[pr] = true;

            let prow = std::mem::take(&mut rows[pr]);
            // Pivot row leaves the active submatrix.
            for &(j, _) in &prow {
                if j != c {
                    if let Some(k) = col_pat[j].iter().position(|&r| r == pr) {
                        col_pat[j].swap_remove(k);
                    }
                }
            }
            let others: Vec<usize> = col_pat[c].iter().copied().filter(|&r| r != pr).collect();
            col_pat[c].clear();

            let mut lcol = Vec::with_capacity(others.len());
            for r in others {
                let rv = entry(&rows[r], c);
                let l = rv / pv;
                rows[r].retain(|&(j, _)| j != c);
                if l == 0.0 {
                    continue;
                }
                lcol.push((r, l));
                for (k, &(j, _)) in rows[r].iter().enumerate() {
                    pos_mark[j] = k;
                }
                for &(j, v) in &prow {
                    if j == c {
                        continue;
                    }
                    let k = pos_mark[j];
                    if k != usize::MAX {
                        rows[r][k].1 -= l * v;
                    } else {
                        rows[r].push((j, -l * v));
                        col_pat[j].push(r);
                    }
                }
                for &(j, _) in &rows[r] {
                    pos_mark[j] = usize::MAX;
                }
            }
            for &(j, _) in &prow {
                if j != c {
                    heap.push(Reverse((col_pat[j].len(), j)));
                }
            }
            pivots.push((pr, c, pv));
            lower.push(lcol);
            upper.push(prow.into_iter().filter(|&(j, _)| j != c).collect());
        }

        if !bad_cols.is_empty() {
            let free_rows: Vec<usize> = (0..m).filter(|&r| !row_done[r]).collect();
            bad_cols.sort_unstable();
            return Err(Singular {
                positions: bad_cols,
                rows: free_rows,
            });
        }
        let factor_nnz = lower.iter().map(Vec::len).sum::<usize>()
            + upper.iter().map(Vec::len).sum::<usize>()
            + m;
        Ok(Self {
            m,
            pivots,
            lower,
            upper,
            etas: Vec::new(),
            eta_nnz: 0,
            factor_nnz,
        })
    }

    pub fn num_updates(&self) -> usize {
        self.etas.len()
    }

    /// True when accumulated etas make a refactor worthwhile.
    pub fn wants_refactor(&self, max_updates: usize) -> bool {
        self.etas.len() >= max_updates || self.eta_nnz > 2 * self.factor_nnz + 10 * self.m
    }

    /// Solves `B x = b` in place: on entry `rhs` is indexed by row, on exit by basis position.
    pub fn ftran(&self, rhs: &mut [f64]) {
        let m = self.m;
        for (k, &(r, _, _)) in self.pivots.iter().enumerate() {
            let t = rhs[r];
            if t != 0.0 {
                for &(i, l) in &self.lower[k] {
                    rhs[i] -= l * t;
                }
            }
        }
        let mut x = vec![0.0; m];
        for k in (0..m).rev() {
            let (r, c, p) = self.pivots[k];
            let mut s = rhs[r];
            for &(j, v) in &self.upper[k] {
                s -= v * x[j];
            }
            x[c] = s / p;
        }
        for eta in &self.etas {
            let xp = x[eta.pos];
            if xp != 0.0 {
                let xp = xp / eta.pivot;
                for &(i, a) in &eta.entries {
                    x[i] -= a * xp;
                }
                x[eta.pos] = xp;
            }
        }
        rhs.copy_from_slice(&x);
    }

    /// Solves `Bᵀ y = d` in place: on entry `rhs` is indexed by basis position, on exit by row.
    pub fn btran(&self, rhs: &mut [f64]) {
        let m = self.m;
        for eta in self.etas.iter().rev() {
            let mut s = rhs[eta.pos];
            for &(i, a) in &eta.entries {
                s -= a * rhs[i];
            }
            rhs[eta.pos] = s / eta.pivot;
        }
        let mut w = vec![0.0; m];
        for k in 0..m {
            let (r, c, p) = self.pivots[k];
            let t = rhs[c] / p;
            w[r] = t;
            if t != 0.0 {
                for &(j, v) in &self.upper[k] {
                    rhs[j] -= v * t;
                }
            }
        }
        for k in (0..m).rev() {
            let r = self.pivots[k].0;
            let mut s = w[r];
            for &(i, l) in &self.lower[k] {
                s -= l * w[i];
            }
            w[r] = s;
        }
        rhs.copy_from_slice(&w);
    }

    /// Records replacement of the column at basis position `pos`, where
    /// `alpha = B⁻¹ a_q` is the entering column expressed in the old basis.
    pub fn update(&mut self, pos: usize, alpha: &[f64]) {
        let entries: Vec<(usize, f64)> = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != pos && a.abs() > DROP_TOL)
            .map(|(i, &a)| (i, a))
            .collect();
        self.eta_nnz += entries.len() + 1;
        self.etas.push(Eta {
            pos,
            pivot: alpha[pos],
            entries,
        });
    }
}

fn entry(row: &[(usize, f64)], c: usize) -> f64 {
    row.iter().find(|&&(j, _)| j == c).map_or(0.0, |&(_, v)| v)
}
