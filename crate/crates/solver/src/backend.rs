//! Adapter to the external `microlp` solver.

use crate::error::SolverError;
use crate::model::LinearModel;
use crate::options::{Backend, SolveOptions, SolveResult};

/// Whether a backend was compiled into this build.
pub fn backend_available(backend: Backend) -> bool {
    match backend {
        Backend::Reference => true,
        Backend::Microlp => cfg!(feature = "microlp"),
    }
}

#[cfg(not(feature = "microlp"))]
pub(crate) fn solve_microlp(_model: &LinearModel, _opts: &SolveOptions) -> Result<SolveResult, SolverError> {
    Err(SolverError::BackendUnavailable(
        "built without the `microlp` feature".into(),
    ))
}

#[cfg(feature = "microlp")]
pub(crate) fn solve_microlp(model: &LinearModel, opts: &SolveOptions) -> Result<SolveResult, SolverError> {
    use microlp::{ComparisonOp, OptimizationDirection, Problem};

    use crate::model::{ObjectiveSense, VarKind};
    use crate::options::{SolveStats, Status};

    let dir = match model.sense() {
        ObjectiveSense::Minimize => OptimizationDirection::Minimize,
        ObjectiveSense::Maximize => OptimizationDirection::Maximize,
    };
    let mut obj = vec![0.0; model.num_vars()];
    for &(v, c) in &model.objective().terms {
        obj[v.index()] += c;
    }
    let mut p = Problem::new(dir);
    let mut handles = Vec::with_capacity(model.num_vars());
    for (j, v) in model.vars().iter().enumerate() {
        let h = match v.kind {
            VarKind::Continuous => p.add_var(obj[j], (v.lower, v.upper)),
            VarKind::Integer | VarKind::Binary => {
                let to_i32 = |b: f64, dflt: i32| {
                    if b.is_finite() {
                        Ok(b.round() as i32)
                    } else if b.is_infinite() {
                        Ok(dflt)
                    } else {
                        Err(SolverError::InvalidModel("NaN bound".into()))
                    }
                };
                let lo = to_i32(v.lower, i32::MIN)?;
                let hi = to_i32(v.upper, i32::MAX)?;
                p.add_integer_var(obj[j], (lo, hi))
            }
        };
        handles.push(h);
    }
    for c in model.constraints() {
        // microlp wants sorted, duplicate-free terms.
        let mut idx: Vec<(usize, f64)> = c.terms.iter().map(|&(v, a)| (v.index(), a)).collect();
        idx.sort_by_key(|&(j, _)| j);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(idx.len());
        for (j, a) in idx {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += a,
                _ => merged.push((j, a)),
            }
        }
        let terms: Vec<_> = merged.into_iter().filter(|&(_, a)| a != 0.0).map(|(j, a)| (handles[j], a)).collect();
        if c.lower == c.upper {
            p.add_constraint(terms.as_slice(), ComparisonOp::Eq, c.lower);
        } else {
            if c.lower.is_finite() {
                p.add_constraint(terms.as_slice(), ComparisonOp::Ge, c.lower);
            }
            if c.upper.is_finite() {
                p.add_constraint(terms.as_slice(), ComparisonOp::Le, c.upper);
            }
        }
    }
    let stats = SolveStats::default();
    match p.solve() {
        Ok(microlp::SolveOutcome::Interrupted(_)) => Ok(SolveResult::without_point(Status::Limit, stats)),
        Ok(microlp::SolveOutcome::Solution(sol)) => {
            let values: Vec<f64> = handles.iter().map(|&h| sol.var_value(h)).collect();
            let _ = opts;
            Ok(SolveResult {
                status: Status::Optimal,
                objective: model.objective_value(&values),
                values,
                stats,
            })
        }
        Err(microlp::Error::Infeasible) => Ok(SolveResult::without_point(Status::Infeasible, stats)),
        Err(microlp::Error::Unbounded) => Ok(SolveResult::without_point(Status::Unbounded, stats)),
        Err(e) => Err(SolverError::Backend(e.to_string())),
    }
}
