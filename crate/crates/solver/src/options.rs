use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::model::VarRef;

/// Which implementation answers a solve request.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Built-in revised simplex and branch-and-bound.
    #[default]
    Reference,
    /// The pure-Rust `microlp` crate, when compiled in.
    Microlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub int_tol: f64,
    pub max_simplex_iters: u64,
    pub max_bnb_nodes: u64,
    /// Wall-clock limit in seconds; `None` for no limit.
    pub time_limit: Option<f64>,
    pub backend: Backend,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-7,
            opt_tol: 1e-7,
            int_tol: 1e-6,
            max_simplex_iters: 5_000_000,
            max_bnb_nodes: 100_000,
            time_limit: None,
            backend: Backend::Reference,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        for (name, v) in [
            ("feas_tol", self.feas_tol),
            ("opt_tol", self.opt_tol),
            ("int_tol", self.int_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SolverError::InvalidOptions(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(t) = self.time_limit {
            if t.is_nan() || t < 0.0 {
                return Err(SolverError::InvalidOptions(format!("time_limit must be >= 0, got {t}")));
            }
        }
        Ok(())
    }

    pub(crate) fn time_limit(&self) -> Option<Duration> {
        self.time_limit.map(Duration::from_secs_f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    Limit,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: u64,
    pub nodes: u64,
    /// Global lower bound (in the model's own objective sense) after each processed node.
    pub bound_trace: Vec<f64>,
    /// Lagrangian bound from the final dual iterate of an optimal LP.
    pub dual_bound: Option<f64>,
    /// Ray proving infeasibility, one entry per constraint, when available.
    pub farkas: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: Status,
    /// Objective in the model's sense; NaN when no point is available.
    pub objective: f64,
    /// One value per model variable; empty when no point is available.
    pub values: Vec<f64>,
    pub stats: SolveStats,
}

impl SolveResult {
    pub fn value(&self, v: VarRef) -> f64 {
        self.values[v.index()]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn has_point(&self) -> bool {
        !self.values.is_empty()
    }

    pub(crate) fn without_point(status: Status, stats: SolveStats) -> Self {
        Self {
            status,
            objective: f64::NAN,
            values: Vec::new(),
            stats,
        }
    }
}
