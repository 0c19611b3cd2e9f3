//! Best-bound branch-and-bound over the reference simplex.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::error::SolverError;
use crate::model::LinearModel;
use crate::options::{SolveOptions, SolveResult, SolveStats, Status};
use crate::simplex::{self, Basis, Limits, LpData};

struct Node {
    /// Lower bound inherited from the parent relaxation (internal scale).
    bound: f64,
    depth: usize,
    id: u64,
    /// Tightened integer bounds `(var, lo, hi)` relative to the root.
    fixes: Vec<(usize, f64, f64)>,
    basis: Option<Basis>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    /// Max-heap order: smallest bound first, then deeper, then older.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

struct Incumbent {
    x: Vec<f64>,
    obj: f64,
}

pub(crate) fn solve_mip(model: &LinearModel, opts: &SolveOptions) -> Result<SolveResult, SolverError> {
    let start = Instant::now();
    let deadline = opts.time_limit().map(|d| start + d);
    let data = LpData::from_model(model);
    let n = data.n;
    let is_int: Vec<bool> = model.vars().iter().map(|v| v.is_integral()).collect();
    let int_vars: Vec<usize> = (0..n).filter(|&j| is_int[j]).collect();
    let priority: Vec<i32> = model.vars().iter().map(|v| v.priority).collect();

    let mut root_lo = data.lo.clone();
    let mut root_hi = data.hi.clone();
    for &j in &int_vars {
        root_lo[j] = (root_lo[j] - opts.int_tol).ceil();
        root_hi[j] = (root_hi[j] + opts.int_tol).floor();
    }
    let rows = data.rows();
    let tol_gap = |inc: f64| opts.opt_tol * inc.abs().max(1.0);

    let mut stats = SolveStats::default();
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        depth: 0,
        id: 0,
        fixes: Vec::new(),
        basis: None,
    });
    let mut next_id = 1u64;
    let mut incumbent: Option<Incumbent> = None;
    let mut hit_limit = false;
    let mut unbounded = false;
    let mut lo = root_lo.clone();
    let mut hi = root_hi.clone();
    let mut trace: Vec<f64> = Vec::new();

    while let Some(node) = heap.pop() {
        if let Some(inc) = &incumbent {
            if node.bound >= inc.obj - tol_gap(inc.obj) {
                continue;
            }
        }
        if stats.nodes >= opts.max_bnb_nodes || deadline.is_some_and(|d| Instant::now() >= d) {
            hit_limit = true;
            heap.push(node);
            break;
        }
        stats.nodes += 1;
        if stats.nodes % 1000 == 0 {
            log::debug!(
                "bnb: {} nodes, {} open, bound {:.9e}, incumbent {:?}",
                stats.nodes,
                heap.len(),
                node.bound,
                incumbent.as_ref().map(|i| i.obj)
            );
        }
        // Best-first order makes the popped bound the global one.
        if node.bound.is_finite() {
            trace.push(node.bound);
        }

        lo.copy_from_slice(&root_lo);
        hi.copy_from_slice(&root_hi);
        for &(j, l, h) in &node.fixes {
            lo[j] = lo[j].max(l);
            hi[j] = hi[j].min(h);
        }
        let limits = Limits {
            max_iters: opts.max_simplex_iters.saturating_sub(stats.iterations),
            deadline,
        };
        let out = simplex::solve(&data, &lo, &hi, node.basis.as_ref(), opts.feas_tol, opts.opt_tol, &limits)
            .map_err(SolverError::Numerical)?;
        stats.iterations += out.iterations;
        match out.status {
            Status::Infeasible => {
                if node.depth == 0 {
                    stats.farkas = out.farkas;
                }
                continue;
            }
            Status::Limit => {
                hit_limit = true;
                heap.push(node);
                break;
            }
            Status::Unbounded => {
                unbounded = true;
                break;
            }
            Status::Optimal => {}
        }
        let obj = out.internal_objective.max(node.bound);
        if let Some(inc) = &incumbent {
            if obj >= inc.obj - tol_gap(inc.obj) {
                continue;
            }
        }
        if int_vars.is_empty() {
            stats.dual_bound = out.dual_bound.map(|b| data.external_objective(b));
            incumbent = Some(Incumbent {
                x: out.x[..n].to_vec(),
                obj: out.internal_objective,
            });
            break;
        }

        // Highest priority, then most fractional, then lowest index.
        let mut branch: Option<(usize, i32, f64)> = None;
        for &j in &int_vars {
            let v = out.x[j];
            let frac = v - v.floor();
            let score = frac.min(1.0 - frac);
            let p = priority[j];
            if score > opts.int_tol && branch.is_none_or(|(_, bp, s)| p > bp || (p == bp && score > s)) {
                branch = Some((j, p, score));
            }
        }
        let Some((bj, _, _)) = branch else {
            let x = out.x[..n].to_vec();
            let o = data.internal_objective(&x);
            offer(&mut incumbent, x, o);
            continue;
        };

        let shifted = zi_shift(&data, &rows, &out.x, &lo, &hi, &int_vars, opts);
        if let Some((x, o)) = zi_round(&data, &shifted, &lo, &hi, &int_vars, opts) {
            offer(&mut incumbent, x, o);
        }
        if (node.depth == 0 || stats.nodes % 50 == 0) && incumbent.as_ref().is_none_or(|inc| inc.obj - tol_gap(inc.obj) > obj) {
            if let Some((x, o, it)) = fix_and_resolve(&data, &shifted.0, &lo, &hi, &int_vars, out.basis.as_ref(), opts, deadline) {
                stats.iterations += it;
                offer(&mut incumbent, x, o);
            }
        }
        if let Some(inc) = &incumbent {
            if obj >= inc.obj - tol_gap(inc.obj) {
                continue;
            }
        }

        let v = out.x[bj];
        let mut down = node.fixes.clone();
        down.push((bj, f64::NEG_INFINITY, v.floor()));
        let mut up = node.fixes;
        up.push((bj, v.ceil(), f64::INFINITY));
        for fixes in [down, up] {
            heap.push(Node {
                bound: obj,
                depth: node.depth + 1,
                id: next_id,
                fixes,
                basis: out.basis.clone(),
            });
            next_id += 1;
        }
    }

    let finish_trace = |trace: Vec<f64>, closing: Option<f64>, stats: &mut SolveStats| {
        let mut t = trace;
        if let Some(c) = closing {
            let last = t.last().copied().unwrap_or(f64::NEG_INFINITY);
            t.push(c.max(last));
        }
        stats.bound_trace = t.into_iter().map(|b| data.external_objective(b)).collect();
    };
    if unbounded {
        finish_trace(trace, None, &mut stats);
        return Ok(SolveResult::without_point(Status::Unbounded, stats));
    }
    let Some(inc) = incumbent else {
        finish_trace(trace, None, &mut stats);
        let status = if hit_limit { Status::Limit } else { Status::Infeasible };
        return Ok(SolveResult::without_point(status, stats));
    };
    finish_trace(trace, (!hit_limit).then_some(inc.obj), &mut stats);
    let x = if int_vars.is_empty() {
        inc.x
    } else {
        polish(&data, inc.x, &root_lo, &root_hi, &int_vars, opts, deadline, &mut stats)
    };
    let objective = model.objective_value(&x);
    Ok(SolveResult {
        status: if hit_limit { Status::Limit } else { Status::Optimal },
        objective,
        values: x,
        stats,
    })
}

fn offer(incumbent: &mut Option<Incumbent>, x: Vec<f64>, obj: f64) {
    if incumbent.as_ref().is_none_or(|inc| obj < inc.obj) {
        *incumbent = Some(Incumbent { x, obj });
    }
}

/// Re-solves the LP with every integer variable fixed at its rounded value so
/// continuous values are consistent with exactly integral ones.
#[allow(clippy::too_many_arguments)]
fn polish(
    data: &LpData,
    x: Vec<f64>,
    root_lo: &[f64],
    root_hi: &[f64],
    int_vars: &[usize],
    opts: &SolveOptions,
    deadline: Option<Instant>,
    stats: &mut SolveStats,
) -> Vec<f64> {
    let mut lo = root_lo.to_vec();
    let mut hi = root_hi.to_vec();
    for &j in int_vars {
        let r = x[j].round();
        lo[j] = r;
        hi[j] = r;
    }
    let limits = Limits {
        max_iters: opts.max_simplex_iters,
        deadline,
    };
    match simplex::solve(data, &lo, &hi, None, opts.feas_tol, opts.opt_tol, &limits) {
        Ok(out) if out.status == Status::Optimal && out.internal_objective <= data.internal_objective(&x) + opts.opt_tol * data.internal_objective(&x).abs().max(1.0) => {
            stats.iterations += out.iterations;
            let mut v = out.x[..data.n].to_vec();
            for &j in int_vars {
                v[j] = v[j].round();
            }
            v
        }
        _ => {
            let mut v = x;
            for &j in int_vars {
                v[j] = v[j].round();
            }
            v
        }
    }
}

/// Shifts fractional integer variables to a neighbouring integer when row
/// slacks allow it, keeping every other variable fixed. Returns the shifted
/// point and its row activities; some variables may remain fractional.
fn zi_shift(
    data: &LpData,
    rows: &[Vec<(usize, f64)>],
    xfull: &[f64],
    lo: &[f64],
    hi: &[f64],
    int_vars: &[usize],
    opts: &SolveOptions,
) -> (Vec<f64>, Vec<f64>) {
    let n = data.n;
    let tol = opts.feas_tol;
    let mut x = xfull[..n].to_vec();
    let mut act: Vec<f64> = rows.iter().map(|r| r.iter().map(|&(j, a)| a * x[j]).sum()).collect();
    for _pass in 0..3 {
        let mut changed = false;
        for &j in int_vars {
            let v = x[j];
            let (fl, ce) = (v.floor(), v.ceil());
            if v - fl <= opts.int_tol || ce - v <= opts.int_tol {
                continue;
            }
            let mut up = hi[j] - v;
            let mut dn = v - lo[j];
            for (i, a) in data.structural_column(j) {
                let (rl, rh) = (lo[n + i], hi[n + i]);
                if a > 0.0 {
                    up = up.min((rh - act[i] + tol) / a);
                    dn = dn.min((act[i] - rl + tol) / a);
                } else {
                    up = up.min((act[i] - rl + tol) / -a);
                    dn = dn.min((rh - act[i] + tol) / -a);
                }
            }
            let cu = ce - v;
            let cd = v - fl;
            let can_up = cu <= up;
            let can_dn = cd <= dn;
            let c = data.cost[j];
            let target = match (can_up, can_dn) {
                (true, true) => {
                    if c * cu < -c * cd || (c * cu == -c * cd && cu <= cd) {
                        ce
                    } else {
                        fl
                    }
                }
                (true, false) => ce,
                (false, true) => fl,
                (false, false) => continue,
            };
            let delta = target - v;
            for (i, a) in data.structural_column(j) {
                act[i] += a * delta;
            }
            x[j] = target;
            changed = true;
        }
        if !changed {
            break;
        }
    }
    (x, act)
}

/// Completes a shifted point into an integral one, if every shift succeeded
/// and all rows stay within tolerance.
fn zi_round(
    data: &LpData,
    shifted: &(Vec<f64>, Vec<f64>),
    lo: &[f64],
    hi: &[f64],
    int_vars: &[usize],
    opts: &SolveOptions,
) -> Option<(Vec<f64>, f64)> {
    let (x, act) = shifted;
    let n = data.n;
    let tol = opts.feas_tol;
    for &j in int_vars {
        let v = x[j];
        if (v - v.round()).abs() > opts.int_tol {
            return None;
        }
    }
    for (i, &a) in act.iter().enumerate() {
        if a < lo[n + i] - 10.0 * tol || a > hi[n + i] + 10.0 * tol {
            return None;
        }
    }
    let obj = data.internal_objective(x);
    Some((x.clone(), obj))
}

/// Fixes integer variables at their rounded values (after slack-guided
/// shifting) and re-optimizes the continuous part.
#[allow(clippy::too_many_arguments)]
fn fix_and_resolve(
    data: &LpData,
    xfull: &[f64],
    lo: &[f64],
    hi: &[f64],
    int_vars: &[usize],
    basis: Option<&Basis>,
    opts: &SolveOptions,
    deadline: Option<Instant>,
) -> Option<(Vec<f64>, f64, u64)> {
    let mut flo = lo.to_vec();
    let mut fhi = hi.to_vec();
    for &j in int_vars {
        let r = xfull[j].round().clamp(lo[j], hi[j]);
        flo[j] = r;
        fhi[j] = r;
    }
    let limits = Limits {
        max_iters: opts.max_simplex_iters,
        deadline,
    };
    let out = simplex::solve(data, &flo, &fhi, basis, opts.feas_tol, opts.opt_tol, &limits).ok()?;
    if out.status != Status::Optimal {
        return None;
    }
    let x = out.x[..data.n].to_vec();
    let obj = data.internal_objective(&x);
    Some((x, obj, out.iterations))
}
