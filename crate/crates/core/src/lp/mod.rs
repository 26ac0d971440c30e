//! Sparse linear programs and a bounded-variable revised simplex solver.
//!
//! Every formulation in the crate (the relaxed allocation problem, the
//! full-reuse baseline, the support-reduction subproblem and the
//! linear-minimization oracle of the delay descent) is expressed as an
//! [`LpModel`] and solved here. The solver always returns a basic (vertex)
//! solution.

mod dump;
mod factor;
mod simplex;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dump::write_lp;

/// Relation of a constraint row to its right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub kind: RowKind,
    pub rhs: f64,
    pub entries: Vec<(usize, f64)>,
}

/// A minimization problem `min c'x` subject to sparse rows and column bounds.
///
/// Columns carry a label of type `L` that links them back to whatever the
/// caller modelled (allocation variables, pattern weights, ...).
#[derive(Debug, Clone)]
pub struct LpModel<L> {
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    labels: Vec<L>,
    rows: Vec<Row>,
}

impl<L> Default for LpModel<L> {
    fn default() -> Self {
        Self {
            objective: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            labels: Vec::new(),
            rows: Vec::new(),
        }
    }
}

impl<L> LpModel<L> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_column(&mut self, label: L, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.labels.push(label);
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, kind: RowKind, rhs: f64, entries: Vec<(usize, f64)>) -> usize {
        self.rows.push(Row { kind, rhs, entries });
        self.rows.len() - 1
    }

    pub fn num_cols(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_nonzeros(&self) -> usize {
        self.rows.iter().map(|r| r.entries.len()).sum()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn set_cost(&mut self, col: usize, cost: f64) {
        self.objective[col] = cost;
    }

    /// Replaces the whole objective vector.
    pub fn set_objective(&mut self, costs: Vec<f64>) {
        assert_eq!(costs.len(), self.objective.len(), "objective length mismatch");
        self.objective = costs;
    }

    pub fn bounds(&self, col: usize) -> (f64, f64) {
        (self.lower[col], self.upper[col])
    }

    pub fn set_bounds(&mut self, col: usize, lower: f64, upper: f64) {
        self.lower[col] = lower;
        self.upper[col] = upper;
    }

    pub fn labels(&self) -> &[L] {
        &self.labels
    }

    pub fn label(&self, col: usize) -> &L {
        &self.labels[col]
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// Objective value `c'x` of an arbitrary point.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for row in &self.rows {
            let act: f64 = row.entries.iter().map(|&(j, a)| a * x[j]).sum();
            let viol = match row.kind {
                RowKind::Le => act - row.rhs,
                RowKind::Ge => row.rhs - act,
                RowKind::Eq => (act - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Checks the structural invariants: finite costs, sane bounds, no
    /// duplicate entries and in-range column references.
    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_cols();
        for j in 0..n {
            if !self.objective[j].is_finite() {
                return Err(LpError::Malformed(format!("column {j} has non-finite cost")));
            }
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::Malformed(format!("column {j} has invalid bounds [{lo}, {hi}]")));
            }
        }
        let mut seen = HashSet::new();
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row {i} has non-finite rhs")));
            }
            seen.clear();
            for &(j, a) in &row.entries {
                if j >= n {
                    return Err(LpError::Malformed(format!("row {i} references column {j} of {n}")));
                }
                if !a.is_finite() {
                    return Err(LpError::Malformed(format!("row {i} has non-finite coefficient")));
                }
                if !seen.insert(j) {
                    return Err(LpError::Malformed(format!("duplicate entry ({i}, {j})")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error("simplex failed after {iterations} iterations: {reason}")]
    NumericalFailure { iterations: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Position of a variable relative to the basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    Free,
}

/// Basis identity: one status per structural column and one per row
/// (the row's logical variable).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    pub cols: Vec<VarStatus>,
    pub rows: Vec<VarStatus>,
}

impl Basis {
    pub fn basic_columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.cols
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == VarStatus::Basic)
            .map(|(j, _)| j)
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural values. Meaningful only when `status` is `Optimal`.
    pub primal: Vec<f64>,
    pub objective: f64,
    pub basis: Basis,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Primal feasibility tolerance (scaled problem).
    pub feasibility_tol: f64,
    /// Reduced-cost tolerance (scaled problem).
    pub optimality_tol: f64,
    /// Smallest admissible pivot magnitude.
    pub pivot_tol: f64,
    /// Defaults to `50 * (rows + cols)`.
    pub max_iterations: Option<usize>,
    /// Geometric row/column equilibration with power-of-two factors.
    pub scaling: bool,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_streak: usize,
    pub warm_start: Option<Basis>,
    /// Stop as soon as a feasible basis is found.
    pub phase_one_only: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            pivot_tol: 1e-10,
            max_iterations: None,
            scaling: true,
            degenerate_streak: 50,
            warm_start: None,
            phase_one_only: false,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            feasibility_tol: tol,
            optimality_tol: tol,
            ..Self::default()
        }
    }

    pub fn warm(mut self, basis: Option<Basis>) -> Self {
        self.warm_start = basis;
        self
    }
}

/// Solves `model` to optimality (or an infeasible/unbounded verdict).
pub fn solve<L>(model: &LpModel<L>, tol: f64) -> Result<LpSolution, LpError> {
    solve_with(model, &SolveOptions::with_tol(tol))
}

pub fn solve_with<L>(model: &LpModel<L>, opts: &SolveOptions) -> Result<LpSolution, LpError> {
    model.validate()?;
    simplex::run(model, opts)
}

/// Whether the constraint set of `model` is nonempty (phase one only).
pub fn feasible<L>(model: &LpModel<L>, tol: f64) -> Result<bool, LpError> {
    let opts = SolveOptions {
        phase_one_only: true,
        ..SolveOptions::with_tol(tol)
    };
    let sol = solve_with(model, &opts)?;
    Ok(sol.status != LpStatus::Infeasible)
}

impl fmt::Display for RowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowKind::Le => "<=",
            RowKind::Eq => "=",
            RowKind::Ge => ">=",
        })
    }
}
