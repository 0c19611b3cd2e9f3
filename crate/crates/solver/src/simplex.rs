//! Bounded revised primal simplex on the computational form
//! `A x − r = 0`, `lo ≤ (x, r) ≤ hi`.
//!
//! Phase 1 minimizes the sum of basic infeasibilities (composite costs of
//! ±1), phase 2 the scaled objective. Pricing is Dantzig's rule with ties to
//! the lowest index and switches to Bland's rule after `5·(m+n)` iterations.
//! The ratio test is a two-pass Harris test that permits bound flips.

use std::time::Instant;

use crate::lu::Factor;
use crate::model::{LinearModel, ObjectiveSense};
use crate::options::Status;

const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum VarStatus {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free variable resting at zero.
    Zero,
}

#[derive(Clone, Debug)]
pub(crate) struct Basis {
    pub head: Vec<usize>,
    pub status: Vec<VarStatus>,
}

/// Column-compressed standard-form data derived from a [`LinearModel`].
#[derive(Clone, Debug)]
pub(crate) struct LpData {
    pub m: usize,
    pub n: usize,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<f64>,
    /// Internal minimization costs of the structural columns.
    pub cost: Vec<f64>,
    /// Bounds of structurals followed by row ranges.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    sign: f64,
    scale: f64,
    constant: f64,
}

impl LpData {
    pub fn from_model(model: &LinearModel) -> Self {
        let n = model.num_vars();
        let m = model.num_constraints();
        let mut count = vec![0usize; n + 1];
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
        for c in model.constraints() {
            let mut t: Vec<(usize, f64)> = c.terms.iter().map(|&(v, a)| (v.index(), a)).collect();
            t.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(t.len());
            for (j, a) in t {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += a,
                    _ => merged.push((j, a)),
                }
            }
            merged.retain(|&(_, a)| a != 0.0);
            for &(j, _) in &merged {
                count[j + 1] += 1;
            }
            rows.push(merged);
        }
        for j in 0..n {
            count[j + 1] += count[j];
        }
        let col_start = count.clone();
        let nnz = col_start[n];
        let mut col_row = vec![0usize; nnz];
        let mut col_val = vec![0.0; nnz];
        let mut fill = count;
        for (i, row) in rows.iter().enumerate() {
            for &(j, a) in row {
                col_row[fill[j]] = i;
                col_val[fill[j]] = a;
                fill[j] += 1;
            }
        }
        let sign = match model.sense() {
            ObjectiveSense::Minimize => 1.0,
            ObjectiveSense::Maximize => -1.0,
        };
        let mut raw = vec![0.0; n];
        for &(v, c) in &model.objective().terms {
            raw[v.index()] += c;
        }
        let cmax = raw.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
        let scale = if cmax > 0.0 { cmax } else { 1.0 };
        let cost = raw.iter().map(|&c| sign * c / scale).collect();
        let mut lo = Vec::with_capacity(n + m);
        let mut hi = Vec::with_capacity(n + m);
        for v in model.vars() {
            lo.push(v.lower);
            hi.push(v.upper);
        }
        for c in model.constraints() {
            lo.push(c.lower);
            hi.push(c.upper);
        }
        Self {
            m,
            n,
            col_start,
            col_row,
            col_val,
            cost,
            lo,
            hi,
            sign,
            scale,
            constant: model.objective().constant,
        }
    }

    /// Converts an internal objective value back to the model's sense and scale.
    pub fn external_objective(&self, internal: f64) -> f64 {
        self.sign * self.scale * internal + self.constant
    }

    pub fn internal_objective(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Iterates the nonzeros `(row, value)` of column `j` (structural or logical).
    #[inline]
    fn column(&self, j: usize) -> ColIter<'_> {
        if j < self.n {
            let (s, e) = (self.col_start[j], self.col_start[j + 1]);
            ColIter::Structural(self.col_row[s..e].iter().zip(&self.col_val[s..e]))
        } else {
            ColIter::Logical(Some(j - self.n))
        }
    }

    #[inline]
    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            let (s, e) = (self.col_start[j], self.col_start[j + 1]);
            let mut t = 0.0;
            for k in s..e {
                t += self.col_val[k] * y[self.col_row[k]];
            }
            t
        } else {
            -y[j - self.n]
        }
    }

    /// Row-major copy of the structural part: `(column, value)` per row.
    pub fn rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); self.m];
        for j in 0..self.n {
            for (i, a) in self.column(j) {
                rows[i].push((j, a));
            }
        }
        rows
    }

    pub fn structural_column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.column(j)
    }
}

enum ColIter<'a> {
    Structural(std::iter::Zip<std::slice::Iter<'a, usize>, std::slice::Iter<'a, f64>>),
    Logical(Option<usize>),
}

impl Iterator for ColIter<'_> {
    type Item = (usize, f64);
    #[inline]
    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            ColIter::Structural(it) => it.next().map(|(&r, &v)| (r, v)),
            ColIter::Logical(o) => o.take().map(|r| (r, -1.0)),
        }
    }
}

pub(crate) struct Limits {
    pub max_iters: u64,
    pub deadline: Option<Instant>,
}

pub(crate) struct LpOutcome {
    pub status: Status,
    /// Values of structurals followed by row activities.
    pub x: Vec<f64>,
    pub internal_objective: f64,
    pub iterations: u64,
    pub basis: Option<Basis>,
    /// Lagrangian lower bound (internal scale) for optimal outcomes.
    pub dual_bound: Option<f64>,
    pub farkas: Option<Vec<f64>>,
}

enum Step {
    Flip,
    Pivot { pos: usize, to_upper: bool },
}

struct Simplex<'a> {
    d: &'a LpData,
    lo: &'a [f64],
    hi: &'a [f64],
    feas_tol: f64,
    dual_tol: f64,
    head: Vec<usize>,
    status: Vec<VarStatus>,
    x: Vec<f64>,
    lu: Factor,
    iters: u64,
}

/// Solves the LP described by `data` with the given bound vectors (length `n + m`).
pub(crate) fn solve(
    data: &LpData,
    lo: &[f64],
    hi: &[f64],
    warm: Option<&Basis>,
    feas_tol: f64,
    opt_tol: f64,
    limits: &Limits,
) -> Result<LpOutcome, String> {
    let (m, n) = (data.m, data.n);
    for j in 0..n + m {
        if lo[j] > hi[j] {
            return Ok(LpOutcome {
                status: Status::Infeasible,
                x: Vec::new(),
                internal_objective: f64::NAN,
                iterations: 0,
                basis: None,
                dual_bound: None,
                farkas: None,
            });
        }
    }
    let (head, status) = match warm {
        Some(b) if b.head.len() == m && b.status.len() == n + m => {
            let mut status = b.status.clone();
            for (j, s) in status.iter_mut().enumerate() {
                if *s != VarStatus::Basic {
                    *s = nonbasic_status(lo[j], hi[j], *s);
                }
            }
            (b.head.clone(), status)
        }
        _ => {
            let head: Vec<usize> = (n..n + m).collect();
            let mut status: Vec<VarStatus> = (0..n)
                .map(|j| nonbasic_status(lo[j], hi[j], VarStatus::Lower))
                .collect();
            status.extend(std::iter::repeat_n(VarStatus::Basic, m));
            (head, status)
        }
    };
    let lu = Factor::new(0, &[]).map_err(|_| "empty factor".to_string())?;
    let mut s = Simplex {
        d: data,
        lo,
        hi,
        feas_tol,
        dual_tol: opt_tol,
        head,
        status,
        x: vec![0.0; n + m],
        lu,
        iters: 0,
    };
    s.refactor()?;
    s.recompute_x();
    let status = s.run(limits)?;
    Ok(s.outcome(status))
}

fn nonbasic_status(lo: f64, hi: f64, prefer: VarStatus) -> VarStatus {
    match prefer {
        VarStatus::Upper if hi.is_finite() => VarStatus::Upper,
        _ if lo.is_finite() => VarStatus::Lower,
        _ if hi.is_finite() => VarStatus::Upper,
        _ => VarStatus::Zero,
    }
}

impl Simplex<'_> {
    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.status[j] {
            VarStatus::Lower => self.lo[j],
            VarStatus::Upper => self.hi[j],
            VarStatus::Zero => 0.0,
            VarStatus::Basic => self.x[j],
        }
    }

    fn refactor(&mut self) -> Result<(), String> {
        let m = self.d.m;
        for _attempt in 0..4 {
            let cols: Vec<Vec<(usize, f64)>> = self.head.iter().map(|&j| self.d.column(j).collect()).collect();
            match Factor::new(m, &cols) {
                Ok(f) => {
                    self.lu = f;
                    return Ok(());
                }
                Err(sing) => {
                    log::debug!("singular basis: replacing {} columns", sing.positions.len());
                    for (&p, &r) in sing.positions.iter().zip(&sing.rows) {
                        let old = self.head[p];
                        let logical = self.d.n + r;
                        let xv = self.x[old];
                        let st = if self.hi[old].is_finite() && (xv - self.hi[old]).abs() < (xv - self.lo[old]).abs() {
                            VarStatus::Upper
                        } else {
                            VarStatus::Lower
                        };
                        self.status[old] = nonbasic_status(self.lo[old], self.hi[old], st);
                        self.x[old] = self.nonbasic_value(old);
                        self.head[p] = logical;
                        self.status[logical] = VarStatus::Basic;
                    }
                }
            }
        }
        Err("basis repair failed".into())
    }

    fn recompute_x(&mut self) {
        let (n, m) = (self.d.n, self.d.m);
        let mut rhs = vec![0.0; m];
        for j in 0..n + m {
            if self.status[j] == VarStatus::Basic {
                continue;
            }
            let v = self.nonbasic_value(j);
            self.x[j] = v;
            if v != 0.0 {
                for (i, a) in self.d.column(j) {
                    rhs[i] -= a * v;
                }
            }
        }
        self.lu.ftran(&mut rhs);
        for (p, &j) in self.head.iter().enumerate() {
            self.x[j] = rhs[p];
        }
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        (self.lo[j] - v).max(v - self.hi[j]).max(0.0)
    }

    /// Phase-1 costs of basic variables, or `None` when the basis is primal feasible.
    fn phase1_costs(&self) -> Option<Vec<f64>> {
        let mut any = false;
        let c: Vec<f64> = self
            .head
            .iter()
            .map(|&j| {
                let v = self.x[j];
                if v < self.lo[j] - self.feas_tol {
                    any = true;
                    -1.0
                } else if v > self.hi[j] + self.feas_tol {
                    any = true;
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        any.then_some(c)
    }

    fn cost(&self, j: usize) -> f64 {
        if j < self.d.n {
            self.d.cost[j]
        } else {
            0.0
        }
    }

    fn run(&mut self, limits: &Limits) -> Result<Status, String> {
        let (n, m) = (self.d.n, self.d.m);
        let bland_after = 5 * (m + n) as u64;
        let mut rejected = vec![false; n + m];
        let mut any_rejected = false;
        loop {
            if self.iters >= limits.max_iters {
                return Ok(Status::Limit);
            }
            if self.iters.is_multiple_of(64) {
                if let Some(dl) = limits.deadline {
                    if Instant::now() >= dl {
                        return Ok(Status::Limit);
                    }
                }
            }
            if self.lu.wants_refactor(REFACTOR_EVERY) {
                self.refactor()?;
                self.recompute_x();
            }
            let p1 = self.phase1_costs();
            let phase1 = p1.is_some();
            let mut y = match p1 {
                Some(c) => c,
                None => self.head.iter().map(|&j| self.cost(j)).collect(),
            };
            self.lu.btran(&mut y);

            let bland = self.iters >= bland_after;
            let mut enter: Option<(usize, f64)> = None;
            let mut best = 0.0;
            #[allow(clippy::needless_range_loop)]
            for j in 0..n + m {
                let st = self.status[j];
                if st == VarStatus::Basic || rejected[j] {
                    continue;
                }
                let cj = if phase1 { 0.0 } else { self.cost(j) };
                let dj = cj - self.d.dot_column(j, &y);
                let eligible = match st {
                    VarStatus::Lower => dj < -self.dual_tol && self.hi[j] > self.lo[j],
                    VarStatus::Upper => dj > self.dual_tol && self.hi[j] > self.lo[j],
                    VarStatus::Zero => dj.abs() > self.dual_tol,
                    VarStatus::Basic => false,
                };
                if !eligible {
                    continue;
                }
                if bland {
                    enter = Some((j, dj));
                    break;
                }
                if dj.abs() > best {
                    best = dj.abs();
                    enter = Some((j, dj));
                }
            }

            let Some((q, dq)) = enter else {
                if any_rejected || self.lu.num_updates() > 0 {
                    // Confirm the verdict on a fresh factorization.
                    rejected.iter_mut().for_each(|r| *r = false);
                    if any_rejected && self.lu.num_updates() == 0 {
                        return Ok(if phase1 { Status::Infeasible } else { Status::Optimal });
                    }
                    any_rejected = false;
                    self.refactor()?;
                    self.recompute_x();
                    continue;
                }
                return Ok(if phase1 { Status::Infeasible } else { Status::Optimal });
            };

            let dir = if dq < 0.0 { 1.0 } else { -1.0 };
            let mut alpha = vec![0.0; m];
            for (i, a) in self.d.column(q) {
                alpha[i] = a;
            }
            self.lu.ftran(&mut alpha);

            let (step, theta) = match self.ratio_test(q, dir, &alpha, bland) {
                RatioResult::Step(s, t) => (s, t),
                RatioResult::Unbounded => {
                    if phase1 {
                        rejected[q] = true;
                        any_rejected = true;
                        continue;
                    }
                    return Ok(Status::Unbounded);
                }
                RatioResult::Tiny => {
                    rejected[q] = true;
                    any_rejected = true;
                    continue;
                }
            };

            // Apply the step.
            if theta != 0.0 {
                self.x[q] += dir * theta;
                for (p, &j) in self.head.iter().enumerate() {
                    if alpha[p] != 0.0 {
                        self.x[j] -= dir * theta * alpha[p];
                    }
                }
            }
            match step {
                Step::Flip => {
                    self.status[q] = if dir > 0.0 { VarStatus::Upper } else { VarStatus::Lower };
                    self.x[q] = self.nonbasic_value(q);
                }
                Step::Pivot { pos, to_upper } => {
                    let leave = self.head[pos];
                    self.status[leave] = if to_upper && self.hi[leave] > self.lo[leave] {
                        VarStatus::Upper
                    } else {
                        VarStatus::Lower
                    };
                    self.x[leave] = if to_upper { self.hi[leave] } else { self.lo[leave] };
                    self.head[pos] = q;
                    self.status[q] = VarStatus::Basic;
                    self.lu.update(pos, &alpha);
                }
            }
            if any_rejected {
                rejected.iter_mut().for_each(|r| *r = false);
                any_rejected = false;
            }
            self.iters += 1;
        }
    }

    fn ratio_test(&self, q: usize, dir: f64, alpha: &[f64], bland: bool) -> RatioResult {
        let tol = self.feas_tol;
        let range = self.hi[q] - self.lo[q];
        let mut theta_max = f64::INFINITY;
        let mut tiny_block = false;
        // Pass 1: relaxed bound on the step.
        for (p, &j) in self.head.iter().enumerate() {
            let a = alpha[p];
            if a == 0.0 {
                continue;
            }
            let delta = -dir * a;
            if let Some((relaxed, _, _)) = self.breakpoint(j, delta, if bland { 0.0 } else { tol }) {
                if a.abs() <= PIVOT_TOL {
                    tiny_block = true;
                    continue;
                }
                theta_max = theta_max.min(relaxed);
            }
        }
        if range <= theta_max && range.is_finite() {
            return RatioResult::Step(Step::Flip, range);
        }
        if theta_max == f64::INFINITY {
            return if tiny_block { RatioResult::Tiny } else { RatioResult::Unbounded };
        }
        // Pass 2: the largest pivot among breakpoints within the relaxed step.
        let mut choice: Option<(usize, f64, bool, f64)> = None; // (pos, exact, upper, |a|)
        for (p, &j) in self.head.iter().enumerate() {
            let a = alpha[p];
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let delta = -dir * a;
            if let Some((_, exact, upper)) = self.breakpoint(j, delta, 0.0) {
                if exact > theta_max {
                    continue;
                }
                let better = match choice {
                    None => true,
                    Some((cp, ce, _, ca)) => {
                        if bland {
                            exact < ce || (exact == ce && j < self.head[cp])
                        } else {
                            a.abs() > ca || (a.abs() == ca && j < self.head[cp])
                        }
                    }
                };
                if better {
                    choice = Some((p, exact, upper, a.abs()));
                }
            }
        }
        match choice {
            Some((pos, exact, upper, _)) => RatioResult::Step(Step::Pivot { pos, to_upper: upper }, exact.max(0.0)),
            None => RatioResult::Tiny,
        }
    }

    /// Step length at which basic variable `j` (moving at rate `delta`) reaches
    /// the bound that stops it, with `relax` added to feasible bounds.
    /// Returns `(relaxed ratio, exact ratio, bound is upper)`.
    fn breakpoint(&self, j: usize, delta: f64, relax: f64) -> Option<(f64, f64, bool)> {
        let v = self.x[j];
        let (l, u) = (self.lo[j], self.hi[j]);
        let tol = self.feas_tol;
        if delta < 0.0 {
            if v > u + tol {
                let r = (v - u) / -delta;
                Some((r, r, true))
            } else if l.is_finite() && v >= l - tol {
                Some(((v - l + relax) / -delta, (v - l) / -delta, false))
            } else {
                None
            }
        } else if v < l - tol {
            let r = (l - v) / delta;
            Some((r, r, false))
        } else if u.is_finite() && v <= u + tol {
            Some(((u - v + relax) / delta, (u - v) / delta, true))
        } else {
            None
        }
    }

    fn outcome(mut self, status: Status) -> LpOutcome {
        let (n, m) = (self.d.n, self.d.m);
        let mut dual_bound = None;
        let mut farkas = None;
        if status == Status::Optimal || status == Status::Infeasible {
            let phase1 = status == Status::Infeasible;
            let mut y: Vec<f64> = self
                .head
                .iter()
                .map(|&j| {
                    if phase1 {
                        let v = self.x[j];
                        if v < self.lo[j] - self.feas_tol {
                            -1.0
                        } else if v > self.hi[j] + self.feas_tol {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        self.cost(j)
                    }
                })
                .collect();
            self.lu.btran(&mut y);
            if phase1 {
                farkas = Some(y);
            } else {
                let mut db = 0.0;
                for j in 0..n + m {
                    let dj = self.cost(j) - self.d.dot_column(j, &y);
                    if dj.abs() <= 1e-9 {
                        continue;
                    }
                    db += if dj > 0.0 { dj * self.lo[j] } else { dj * self.hi[j] };
                }
                dual_bound = Some(db);
            }
        }
        if status == Status::Optimal {
            for j in 0..n + m {
                if self.infeasibility(j) > 0.0 && self.infeasibility(j) <= self.feas_tol && self.status[j] == VarStatus::Basic {
                    self.x[j] = self.x[j].clamp(self.lo[j], self.hi[j]);
                }
            }
        }
        let obj = self.d.internal_objective(&self.x[..n]);
        LpOutcome {
            status,
            internal_objective: obj,
            iterations: self.iters,
            basis: Some(Basis {
                head: self.head,
                status: self.status,
            }),
            x: self.x,
            dual_bound,
            farkas,
        }
    }
}

enum RatioResult {
    Step(Step, f64),
    Unbounded,
    Tiny,
}
