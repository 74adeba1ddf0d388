//! Dense linear programs and a two-phase simplex solver.
//!
//! Problems are stated as
//!
//! ```text
//! minimize    c^T y
//! subject to  G y <= g
//!             E y  = f
//!             lower <= y <= upper   (per-variable, optional)
//! ```
//!
//! The solver is a dense tableau method with Dantzig pricing and a
//! Bland fallback on degenerate runs, aimed at the
//! few-hundred-variable programs produced by controller synthesis.

mod dump;
mod simplex;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use dump::{dump_lp, write_lp_dump};

/// Primal feasibility tolerance used for constraint acceptance and phase one.
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Reduced-cost tolerance for optimality.
pub const OPTIMALITY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("lower bound exceeds upper bound for variable {0}")]
    InvertedBounds(usize),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub cost: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal point. Meaningful only when `status == Optimal`.
    pub y: DVector<f64>,
    pub objective: f64,
    /// Largest violation of any constraint or bound at `y`.
    pub max_violation: f64,
    /// Phase-one dual multipliers proving infeasibility, ordered as
    /// inequality rows, equality rows, then finite upper bounds of
    /// doubly-bounded variables. Present only when `status == Infeasible`.
    pub farkas_witness: Option<Vec<f64>>,
}

impl LinearProgram {
    /// An empty program over `dim` free variables with zero cost.
    pub fn new(dim: usize) -> Self {
        Self {
            cost: DVector::zeros(dim),
            ineq_matrix: DMatrix::zeros(0, dim),
            ineq_rhs: DVector::zeros(0),
            eq_matrix: DMatrix::zeros(0, dim),
            eq_rhs: DVector::zeros(0),
            lower: vec![None; dim],
            upper: vec![None; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.cost.len()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let d = self.dim();
        if self.ineq_matrix.ncols() != d || self.eq_matrix.ncols() != d {
            return Err(LpError::Dimension(format!("constraint matrices must have {d} columns")));
        }
        if self.ineq_matrix.nrows() != self.ineq_rhs.len() {
            return Err(LpError::Dimension("inequality rows vs rhs".into()));
        }
        if self.eq_matrix.nrows() != self.eq_rhs.len() {
            return Err(LpError::Dimension("equality rows vs rhs".into()));
        }
        if self.lower.len() != d || self.upper.len() != d {
            return Err(LpError::Dimension("bound vectors".into()));
        }
        fn finite<'a>(mut it: impl Iterator<Item = &'a f64>) -> bool {
            it.all(|v| v.is_finite())
        }
        if !finite(self.cost.iter()) {
            return Err(LpError::NonFinite("cost"));
        }
        if !finite(self.ineq_matrix.iter()) || !finite(self.ineq_rhs.iter()) {
            return Err(LpError::NonFinite("inequalities"));
        }
        if !finite(self.eq_matrix.iter()) || !finite(self.eq_rhs.iter()) {
            return Err(LpError::NonFinite("equalities"));
        }
        for j in 0..d {
            if self.lower[j].is_some_and(|v| !v.is_finite()) || self.upper[j].is_some_and(|v| !v.is_finite()) {
                return Err(LpError::NonFinite("bounds"));
            }
            if let (Some(l), Some(u)) = (self.lower[j], self.upper[j]) {
                if l > u {
                    return Err(LpError::InvertedBounds(j));
                }
            }
        }
        Ok(())
    }

    /// Largest violation of any constraint or bound at `y`.
    pub fn max_violation(&self, y: &DVector<f64>) -> f64 {
        let mut worst = 0.0_f64;
        if self.ineq_matrix.nrows() > 0 {
            let r = &self.ineq_matrix * y - &self.ineq_rhs;
            worst = r.iter().fold(worst, |w, v| w.max(*v));
        }
        if self.eq_matrix.nrows() > 0 {
            let r = &self.eq_matrix * y - &self.eq_rhs;
            worst = r.iter().fold(worst, |w, v| w.max(v.abs()));
        }
        for (j, v) in y.iter().enumerate() {
            if let Some(l) = self.lower[j] {
                worst = worst.max(l - v);
            }
            if let Some(u) = self.upper[j] {
                worst = worst.max(v - u);
            }
        }
        worst
    }
}

/// Solves `lp`. Deterministic for identical input.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    simplex::solve(lp)
}

/// Incrementally assembles a [`LinearProgram`] from sparse rows.
#[derive(Debug, Clone)]
pub struct LpBuilder {
    dim: usize,
    cost: Vec<f64>,
    ineq: Vec<(Vec<(usize, f64)>, f64)>,
    eq: Vec<(Vec<(usize, f64)>, f64)>,
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
}

impl LpBuilder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            cost: vec![0.0; dim],
            ineq: Vec::new(),
            eq: Vec::new(),
            lower: vec![None; dim],
            upper: vec![None; dim],
        }
    }

    pub fn set_cost(&mut self, var: usize, c: f64) {
        self.cost[var] = c;
    }

    pub fn set_bounds(&mut self, var: usize, lower: Option<f64>, upper: Option<f64>) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    /// Adds `Σ coef·y[var] <= rhs`; returns the row index.
    pub fn add_le(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.ineq.push((terms, rhs));
        self.ineq.len() - 1
    }

    /// Adds `Σ coef·y[var] = rhs`; returns the row index.
    pub fn add_eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.eq.push((terms, rhs));
        self.eq.len() - 1
    }

    pub fn num_ineq(&self) -> usize {
        self.ineq.len()
    }

    pub fn num_eq(&self) -> usize {
        self.eq.len()
    }

    pub fn build(self) -> LinearProgram {
        let d = self.dim;
        let dense = |rows: &[(Vec<(usize, f64)>, f64)]| {
            let mut m = DMatrix::zeros(rows.len(), d);
            let mut rhs = DVector::zeros(rows.len());
            for (i, (terms, b)) in rows.iter().enumerate() {
                for &(j, v) in terms {
                    m[(i, j)] += v;
                }
                rhs[i] = *b;
            }
            (m, rhs)
        };
        let (ineq_matrix, ineq_rhs) = dense(&self.ineq);
        let (eq_matrix, eq_rhs) = dense(&self.eq);
        LinearProgram {
            cost: DVector::from_vec(self.cost),
            ineq_matrix,
            ineq_rhs,
            eq_matrix,
            eq_rhs,
            lower: self.lower,
            upper: self.upper,
        }
    }
}
