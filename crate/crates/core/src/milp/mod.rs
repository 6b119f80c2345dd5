//! Solver-agnostic mixed-integer linear programs.
//!
//! A [`MilpModel`] is a minimisation problem over continuous and binary
//! variables with linear constraints. Backends implement [`MilpBackend`]:
//! [`HighsBackend`] wraps the HiGHS solver, [`ExhaustiveBackend`] enumerates
//! every binary assignment and solves the remaining LP with a small dense
//! simplex, which makes it an independent oracle for tiny models.

mod dense_lp;
mod exhaustive;
mod highs_backend;
mod lp_format;

use std::fmt;

use thiserror::Error;

pub use dense_lp::{solve_dense_lp, DenseLpOutcome};
pub use exhaustive::{solve_exhaustive, ExhaustiveBackend, DEFAULT_MAX_BINARIES};
pub use highs_backend::HighsBackend;

/// Environment variable naming the backend: `highs` (default) or `exhaustive`.
pub const SOLVER_ENV: &str = "CVAR_SR_SOLVER";

/// Tolerance used for feasibility checks on returned solutions.
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("model invalid: {0}")]
    InvalidModel(String),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("{n} binaries exceed the exhaustive limit of {max}")]
    TooManyBinaries { n: usize, max: usize },
    #[error("model is unbounded")]
    Unbounded,
    #[error("no feasible solution found before the limit was reached")]
    NoSolution,
    #[error("backend failure: {0}")]
    Backend(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(Var, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v.0]).sum()
    }

    /// Amount by which `x` violates the constraint (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let a = self.activity(x);
        match self.sense {
            Sense::Le => (a - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - a).max(0.0),
            Sense::Eq => (a - self.rhs).abs(),
        }
    }
}

/// Sums duplicate variables and drops zero coefficients.
fn merge_terms(mut terms: Vec<(Var, f64)>) -> Vec<(Var, f64)> {
    terms.sort_by_key(|t| t.0);
    let mut out: Vec<(Var, f64)> = Vec::with_capacity(terms.len());
    for (v, c) in terms {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += c,
            _ => out.push((v, c)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    out
}

/// A minimisation MILP.
#[derive(Clone, Debug, Default)]
pub struct MilpModel {
    vars: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Vec<(Var, f64)>,
    objective_constant: f64,
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> Var {
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            VarKind::Continuous => (lower, upper),
        };
        self.vars.push(Variable { name: name.into(), kind, lower, upper });
        Var(self.vars.len() - 1)
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> Var {
        self.add_var(name, VarKind::Continuous, lower, upper)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> Var {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(Var, f64)>,
        sense: Sense,
        rhs: f64,
    ) {
        self.constraints.push(Constraint { name: name.into(), terms: merge_terms(terms), sense, rhs });
    }

    pub fn le(&mut self, name: impl Into<String>, terms: Vec<(Var, f64)>, rhs: f64) {
        self.add_constraint(name, terms, Sense::Le, rhs)
    }

    pub fn ge(&mut self, name: impl Into<String>, terms: Vec<(Var, f64)>, rhs: f64) {
        self.add_constraint(name, terms, Sense::Ge, rhs)
    }

    pub fn eq(&mut self, name: impl Into<String>, terms: Vec<(Var, f64)>, rhs: f64) {
        self.add_constraint(name, terms, Sense::Eq, rhs)
    }

    pub fn set_objective(&mut self, terms: Vec<(Var, f64)>, constant: f64) {
        self.objective = merge_terms(terms);
        self.objective_constant = constant;
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn variable(&self, v: Var) -> &Variable {
        &self.vars[v.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[(Var, f64)] {
        &self.objective
    }

    pub fn objective_constant(&self) -> f64 {
        self.objective_constant
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn num_continuous(&self) -> usize {
        self.num_vars() - self.num_binaries()
    }

    pub fn binary_vars(&self) -> Vec<Var> {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(i, _)| Var(i))
            .collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>()
    }

    /// Largest violation of bounds, integrality, or constraints.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (v, &xi) in self.vars.iter().zip(x) {
            worst = worst.max(v.lower - xi).max(xi - v.upper);
            if v.kind == VarKind::Binary {
                worst = worst.max(xi.min(1.0 - xi).max(0.0));
            }
        }
        for c in &self.constraints {
            worst = worst.max(c.violation(x));
        }
        worst
    }

    pub fn validate(&self) -> Result<(), MilpError> {
        let n = self.vars.len();
        for v in &self.vars {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(MilpError::InvalidModel(format!("variable {} has bounds [{}, {}]", v.name, v.lower, v.upper)));
            }
        }
        let check = |terms: &[(Var, f64)], what: &str| -> Result<(), MilpError> {
            for &(v, c) in terms {
                if v.0 >= n {
                    return Err(MilpError::InvalidModel(format!("{what} references undeclared variable {}", v.0)));
                }
                if !c.is_finite() {
                    return Err(MilpError::InvalidModel(format!("{what} has a non-finite coefficient")));
                }
            }
            Ok(())
        };
        for c in &self.constraints {
            check(&c.terms, &c.name)?;
            if !c.rhs.is_finite() {
                return Err(MilpError::InvalidModel(format!("{} has a non-finite rhs", c.name)));
            }
        }
        check(&self.objective, "objective")
    }

    /// Writes the model in CPLEX LP format, mainly for debugging.
    pub fn write_lp<W: std::io::Write>(&self, w: W) -> std::io::Result<()> {
        lp_format::write_lp(self, w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    TimeLimit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MilpSolution {
    pub status: SolveStatus,
    /// Indexed by [`Var::index`]; empty when infeasible.
    pub values: Vec<f64>,
    pub objective_value: f64,
    pub gap: f64,
}

impl MilpSolution {
    pub fn infeasible() -> Self {
        Self { status: SolveStatus::Infeasible, values: Vec::new(), objective_value: f64::NAN, gap: f64::NAN }
    }

    pub fn value(&self, v: Var) -> f64 {
        self.values[v.0]
    }

    /// Binary value rounded to the nearest integer.
    pub fn flag(&self, v: Var) -> bool {
        self.values[v.0] > 0.5
    }

    pub fn has_solution(&self) -> bool {
        !self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    pub time_limit_s: f64,
    pub rel_gap: f64,
    pub abs_gap: f64,
    /// Full assignment used as a MIP start when the backend supports it.
    pub warm_start: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { time_limit_s: f64::INFINITY, rel_gap: 1e-6, abs_gap: 1e-9, warm_start: None }
    }
}

impl SolveOptions {
    pub fn with_limits(time_limit_s: f64, rel_gap: f64) -> Self {
        Self { time_limit_s, rel_gap, ..Self::default() }
    }
}

pub trait MilpBackend: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn solve(&self, model: &MilpModel, opts: &SolveOptions) -> Result<MilpSolution, MilpError>;
}

/// Solves `model` with a time limit and relative gap.
pub fn solve(
    model: &MilpModel,
    backend: &dyn MilpBackend,
    time_limit_s: f64,
    rel_gap: f64,
) -> Result<MilpSolution, MilpError> {
    backend.solve(model, &SolveOptions::with_limits(time_limit_s, rel_gap))
}

pub fn backend_by_name(name: &str) -> Result<Box<dyn MilpBackend>, MilpError> {
    match name.trim().to_ascii_lowercase().as_str() {
        "" | "highs" => Ok(Box::new(HighsBackend::default())),
        "exhaustive" => Ok(Box::new(ExhaustiveBackend::default())),
        other => Err(MilpError::Unavailable(format!("unknown solver backend '{other}'"))),
    }
}

/// Backend selected by [`SOLVER_ENV`], HiGHS when unset.
pub fn backend_from_env() -> Result<Box<dyn MilpBackend>, MilpError> {
    backend_by_name(&std::env::var(SOLVER_ENV).unwrap_or_default())
}
