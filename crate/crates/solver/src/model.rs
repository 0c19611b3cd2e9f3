//! Backend-neutral linear model builder.
//!
//! Constraints are stored internally as ranged rows `lower <= a·x <= upper`;
//! the `≤ / = / ≥` helpers map onto that form.

use serde::{Deserialize, Serialize};

use crate::error::SolverError;

/// Opaque handle to a variable of one [`LinearModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarRef(pub(crate) usize);

impl VarRef {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Continuous,
    Integer,
    Binary,
}

#[derive(Clone, Debug)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
    /// Branch-and-bound branches on higher priorities first.
    pub priority: i32,
}

impl Variable {
    pub fn is_integral(&self) -> bool {
        !matches!(self.kind, VarKind::Continuous)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveSense {
    Minimize,
    Maximize,
}

/// Sparse linear expression `Σ coef·var + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarRef, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            terms: Vec::with_capacity(n),
            constant: 0.0,
        }
    }

    pub fn term(mut self, var: VarRef, coef: f64) -> Self {
        self.terms.push((var, coef));
        self
    }

    pub fn push(&mut self, var: VarRef, coef: f64) {
        self.terms.push((var, coef));
    }

    pub fn add_constant(&mut self, c: f64) {
        self.constant += c;
    }

    pub fn extend(&mut self, other: &LinExpr, scale: f64) {
        self.terms
            .extend(other.terms.iter().map(|&(v, c)| (v, c * scale)));
        self.constant += other.constant * scale;
    }

    /// Evaluates the expression at a full assignment indexed by variable.
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|&(v, c)| c * values[v.0])
            .sum::<f64>()
            + self.constant
    }
}

impl From<Vec<(VarRef, f64)>> for LinExpr {
    fn from(terms: Vec<(VarRef, f64)>) -> Self {
        Self {
            terms,
            constant: 0.0,
        }
    }
}

impl From<&[(VarRef, f64)]> for LinExpr {
    fn from(terms: &[(VarRef, f64)]) -> Self {
        Self {
            terms: terms.to_vec(),
            constant: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarRef, f64)>,
    pub lower: f64,
    pub upper: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * values[v.0]).sum()
    }

    /// Amount by which `values` violates this row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let a = self.activity(values);
        (self.lower - a).max(a - self.upper).max(0.0)
    }
}

#[derive(Clone, Debug)]
pub struct LinearModel {
    vars: Vec<Variable>,
    cons: Vec<Constraint>,
    objective: LinExpr,
    sense: ObjectiveSense,
}

impl Default for LinearModel {
    fn default() -> Self {
        Self::new(ObjectiveSense::Minimize)
    }
}

impl LinearModel {
    pub fn new(sense: ObjectiveSense) -> Self {
        Self {
            vars: Vec::new(),
            cons: Vec::new(),
            objective: LinExpr::new(),
            sense,
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, kind: VarKind) -> VarRef {
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
            kind,
            priority: 0,
        });
        VarRef(self.vars.len() - 1)
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarRef {
        self.add_var(name, lower, upper, VarKind::Continuous)
    }

    pub fn add_integer(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarRef {
        self.add_var(name, lower, upper, VarKind::Integer)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarRef {
        self.add_var(name, 0.0, 1.0, VarKind::Binary)
    }

    /// Adds `expr (sense) rhs`; the expression constant moves to the right-hand side.
    pub fn add_constraint(&mut self, name: impl Into<String>, expr: impl Into<LinExpr>, sense: Sense, rhs: f64) -> usize {
        let expr = expr.into();
        let rhs = rhs - expr.constant;
        let (lower, upper) = match sense {
            Sense::Le => (f64::NEG_INFINITY, rhs),
            Sense::Eq => (rhs, rhs),
            Sense::Ge => (rhs, f64::INFINITY),
        };
        self.push_row(name.into(), expr.terms, lower, upper)
    }

    /// Adds `lower <= expr <= upper`.
    pub fn add_range(&mut self, name: impl Into<String>, expr: impl Into<LinExpr>, lower: f64, upper: f64) -> usize {
        let expr = expr.into();
        self.push_row(
            name.into(),
            expr.terms,
            lower - expr.constant,
            upper - expr.constant,
        )
    }

    fn push_row(&mut self, name: String, terms: Vec<(VarRef, f64)>, lower: f64, upper: f64) -> usize {
        self.cons.push(Constraint {
            name,
            terms,
            lower,
            upper,
        });
        self.cons.len() - 1
    }

    pub fn set_objective(&mut self, expr: impl Into<LinExpr>, sense: ObjectiveSense) {
        self.objective = expr.into();
        self.sense = sense;
    }

    /// Adds `coef·var` to the current objective.
    pub fn add_objective_term(&mut self, var: VarRef, coef: f64) {
        self.objective.terms.push((var, coef));
    }

    pub fn set_bounds(&mut self, var: VarRef, lower: f64, upper: f64) {
        let v = &mut self.vars[var.0];
        v.lower = lower;
        v.upper = upper;
    }

    pub fn set_priority(&mut self, var: VarRef, priority: i32) {
        self.vars[var.0].priority = priority;
    }

    pub fn set_kind(&mut self, var: VarRef, kind: VarKind) {
        self.vars[var.0].kind = kind;
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, v: VarRef) -> &Variable {
        &self.vars[v.0]
    }

    /// First variable named `name`.
    pub fn find_var(&self, name: &str) -> Option<VarRef> {
        self.vars.iter().position(|v| v.name == name).map(VarRef)
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.cons
    }

    pub fn objective(&self) -> &LinExpr {
        &self.objective
    }

    pub fn sense(&self) -> ObjectiveSense {
        self.sense
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.cons.len()
    }

    pub fn num_nonzeros(&self) -> usize {
        self.cons.iter().map(|c| c.terms.len()).sum()
    }

    pub fn has_integers(&self) -> bool {
        self.vars.iter().any(Variable::is_integral)
    }

    /// Checks structural validity: handles in range, finite data, consistent bounds.
    pub fn validate(&self) -> Result<(), SolverError> {
        let n = self.vars.len();
        for (j, v) in self.vars.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(SolverError::InvalidModel(format!(
                    "variable {} ({}) has bounds [{}, {}]",
                    j, v.name, v.lower, v.upper
                )));
            }
            if v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(SolverError::InvalidModel(format!(
                    "variable {} ({}) has an empty infinite bound",
                    j, v.name
                )));
            }
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(SolverError::InvalidModel(format!(
                    "binary variable {} ({}) has bounds outside [0, 1]",
                    j, v.name
                )));
            }
        }
        for (i, c) in self.cons.iter().enumerate() {
            if c.lower.is_nan() || c.upper.is_nan() || c.lower > c.upper {
                return Err(SolverError::InvalidModel(format!(
                    "constraint {} ({}) has range [{}, {}]",
                    i, c.name, c.lower, c.upper
                )));
            }
            for &(v, a) in &c.terms {
                if v.0 >= n {
                    return Err(SolverError::InvalidModel(format!(
                        "constraint {} ({}) references undeclared variable {}",
                        i, c.name, v.0
                    )));
                }
                if !a.is_finite() {
                    return Err(SolverError::InvalidModel(format!(
                        "constraint {} ({}) has non-finite coefficient on variable {}",
                        i, c.name, v.0
                    )));
                }
            }
        }
        for &(v, a) in &self.objective.terms {
            if v.0 >= n {
                return Err(SolverError::InvalidModel(format!(
                    "objective references undeclared variable {}",
                    v.0
                )));
            }
            if !a.is_finite() {
                return Err(SolverError::InvalidModel(
                    "objective has a non-finite coefficient".into(),
                ));
            }
        }
        Ok(())
    }

    /// Largest row or bound violation of `values`, ignoring integrality.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let rows = self
            .cons
            .iter()
            .map(|c| c.violation(values))
            .fold(0.0, f64::max);
        let bounds = self
            .vars
            .iter()
            .zip(values)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.eval(values)
    }
}
