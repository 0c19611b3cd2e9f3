//! Linear and mixed-integer optimization behind a backend-neutral model API.
//!
//! The reference backend is a bounded revised primal simplex with a sparse
//! LU basis factorization, wrapped in best-bound branch-and-bound for
//! integer variables. An adapter for the `microlp` crate is available behind
//! the default `microlp` feature for cross-checking.
//!
//! ```
//! use rsp_solver::{solve_lp, LinearModel, LinExpr, ObjectiveSense, Sense, SolveOptions, Status};
//!
//! let mut m = LinearModel::new(ObjectiveSense::Minimize);
//! let x = m.add_continuous("x", 0.0, f64::INFINITY);
//! m.add_constraint("floor", LinExpr::new().term(x, 1.0), Sense::Ge, 3.0);
//! m.set_objective(LinExpr::new().term(x, 1.0), ObjectiveSense::Minimize);
//! let r = solve_lp(&m, &SolveOptions::default()).unwrap();
//! assert_eq!(r.status, Status::Optimal);
//! assert!((r.objective - 3.0).abs() < 1e-9);
//! ```

mod backend;
mod bnb;
mod error;
mod lp_format;
mod lu;
mod model;
mod options;
mod simplex;

pub use backend::backend_available;
pub use error::SolverError;
pub use lp_format::write_lp;
pub use model::{Constraint, LinExpr, LinearModel, ObjectiveSense, Sense, VarKind, VarRef, Variable};
pub use options::{Backend, SolveOptions, SolveResult, SolveStats, Status};

/// Solves a model without integer variables.
pub fn solve_lp(model: &LinearModel, opts: &SolveOptions) -> Result<SolveResult, SolverError> {
    opts.validate()?;
    model.validate()?;
    if model.has_integers() {
        return Err(SolverError::IntegerInLp);
    }
    match opts.backend {
        Backend::Reference => bnb::solve_mip(model, opts),
        Backend::Microlp => backend::solve_microlp(model, opts),
    }
}

/// Solves a model that may contain integer or binary variables.
pub fn solve_mip(model: &LinearModel, opts: &SolveOptions) -> Result<SolveResult, SolverError> {
    opts.validate()?;
    model.validate()?;
    match opts.backend {
        Backend::Reference => bnb::solve_mip(model, opts),
        Backend::Microlp => backend::solve_microlp(model, opts),
    }
}

/// Dispatches to [`solve_mip`] or [`solve_lp`] depending on the model.
pub fn solve(model: &LinearModel, opts: &SolveOptions) -> Result<SolveResult, SolverError> {
    if model.has_integers() {
        solve_mip(model, opts)
    } else {
        solve_lp(model, opts)
    }
}
