//! Robust per-cell synthesis of output-feedback gains.
//!
//! The control law is `u = K Y + k` with `Y = (diag(s) ⊗ I_n)(Lvec - Istack x)`
//! the stacked, depth-scaled landmark displacements. Gains are chosen so that
//! the barrier and Lyapunov conditions hold for every state in the cell and
//! every scale vector `s` in `[s_min, s_max]`.

mod assemble;
mod bisect;
mod io;
mod measurement;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assemble::{assemble_fixed_scale_lp, assemble_robust_lp, ConstraintFamily, DualBlock, LpLayout, RobustLp};
pub use bisect::{
    bisect_smax, parse_sweep_csv, sweep_csv, sweep_cv, BisectionOutcome, SweepRow, SweepStatus, ALPHA_CAP,
};
pub use io::{CellGainsDocument, GainsDocument};
pub use measurement::{measurement_operator, rescale_gains, s_coeff_unit, s_coeff_vec};

use crate::geometry::{Cell, Environment, GeometryError};
use crate::lp::{solve_lp, LpError, LpSolution, LpStatus};
use assemble::{assemble_robust_with, AssemblyOptions};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}", describe_infeasible(*cell, families))]
    Infeasible {
        cell: Option<usize>,
        families: Vec<ConstraintFamily>,
    },
    #[error("synthesis program is unbounded")]
    Unbounded,
    #[error("nominal synthesis infeasible (alpha = 1)")]
    NominalInfeasible,
    #[error("infeasible cells: {}", list_cells(.0))]
    Cells(Vec<(usize, Vec<ConstraintFamily>)>),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn describe_infeasible(cell: Option<usize>, families: &[ConstraintFamily]) -> String {
    let names: Vec<String> = families.iter().map(|f| f.to_string()).collect();
    let list = if names.is_empty() {
        "no single family isolated".to_string()
    } else {
        names.join(", ")
    };
    match cell {
        Some(c) => format!("cell {c}: synthesis infeasible (binding: {list})"),
        None => format!("synthesis infeasible (binding: {list})"),
    }
}

fn list_cells(cells: &[(usize, Vec<ConstraintFamily>)]) -> String {
    cells
        .iter()
        .map(|(c, f)| {
            let names: Vec<String> = f.iter().map(|x| x.to_string()).collect();
            format!("{c} [{}]", names.join(", "))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    pub c_v: f64,
    pub c_h: f64,
    #[serde(default = "one")]
    pub w_v: f64,
    /// One weight per barrier row; all ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_h: Option<Vec<f64>>,
    /// Per-landmark scale bounds, indexed by global landmark id.
    pub s_min: Vec<f64>,
    pub s_max: Vec<f64>,
    #[serde(default = "default_k_bound")]
    pub k_bound: f64,
    /// Elementwise bound on the entries of `K`.
    #[serde(default = "one")]
    pub gain_bound: f64,
    #[serde(default)]
    pub enforce_input_set: bool,
}

fn one() -> f64 {
    1.0
}

fn default_k_bound() -> f64 {
    10.0
}

impl SynthesisConfig {
    /// Defaults with `s ∈ [1/1.5, 1.5]` for every landmark.
    pub fn new(num_landmarks: usize) -> Self {
        Self::uniform(num_landmarks, 1.0 / 1.5, 1.5)
    }

    pub fn uniform(num_landmarks: usize, s_min: f64, s_max: f64) -> Self {
        Self {
            c_v: 0.5,
            c_h: 1.0,
            w_v: 1.0,
            w_h: None,
            s_min: vec![s_min; num_landmarks],
            s_max: vec![s_max; num_landmarks],
            k_bound: 10.0,
            gain_bound: 1.0,
            enforce_input_set: false,
        }
    }

    pub fn with_uniform_bounds(&self, s_min: f64, s_max: f64) -> Self {
        let mut out = self.clone();
        out.s_min = vec![s_min; self.s_min.len()];
        out.s_max = vec![s_max; self.s_max.len()];
        out
    }

    pub fn barrier_weights(&self, barriers: usize) -> Vec<f64> {
        self.w_h.clone().unwrap_or_else(|| vec![1.0; barriers])
    }

    pub fn validate(&self, num_landmarks: usize, barriers: usize) -> Result<(), SynthesisError> {
        let bad = |m: String| Err(SynthesisError::Config(m));
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !nonneg(self.c_v) {
            return bad(format!("c_v = {} must be finite and nonnegative", self.c_v));
        }
        if !nonneg(self.c_h) {
            return bad(format!("c_h = {} must be finite and nonnegative", self.c_h));
        }
        if !pos(self.w_v) {
            return bad(format!("w_v = {} must be positive", self.w_v));
        }
        if let Some(w) = &self.w_h {
            if w.len() != barriers {
                return bad(format!("w_h has {} entries, cell has {barriers} barrier rows", w.len()));
            }
            if w.iter().any(|v| !pos(*v)) {
                return bad("w_h entries must be positive".into());
            }
        }
        if self.s_min.len() != num_landmarks || self.s_max.len() != num_landmarks {
            return bad(format!(
                "scale bounds have lengths {}/{}, environment has {num_landmarks} landmarks",
                self.s_min.len(),
                self.s_max.len()
            ));
        }
        for (j, (lo, hi)) in self.s_min.iter().zip(&self.s_max).enumerate() {
            if !(pos(*lo) && hi.is_finite() && lo <= hi) {
                return bad(format!("landmark {j}: need 0 < s_min <= s_max, got [{lo}, {hi}]"));
            }
        }
        if !pos(self.k_bound) {
            return bad(format!("k_bound = {} must be positive", self.k_bound));
        }
        if !pos(self.gain_bound) {
            return bad(format!("gain_bound = {} must be positive", self.gain_bound));
        }
        Ok(())
    }
}

/// `u = K Y + k` for one cell. Columns of `K` are grouped per landmark.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    pub feedback: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl Gains {
    /// The `m x n` block of `K` acting on landmark slot `j`.
    pub fn landmark_block(&self, j: usize, n: usize) -> DMatrix<f64> {
        self.feedback.columns(j * n, n).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        self.feedback.iter().chain(self.offset.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub gains: Gains,
    pub objective: f64,
    pub slack_h: DVector<f64>,
    pub slack_v: f64,
    pub status: LpStatus,
    pub solution: LpSolution,
    pub layout: LpLayout,
}

/// Solves the robust program and reports a family-level diagnostic on
/// infeasibility.
pub fn synthesize_cell(
    cell: &Cell,
    env: &Environment,
    cfg: &SynthesisConfig,
) -> Result<SynthesisResult, SynthesisError> {
    match try_synthesize(cell, env, cfg)? {
        Some(r) => Ok(r),
        None => Err(SynthesisError::Infeasible {
            cell: None,
            families: diagnose_infeasible(cell, env, cfg)?,
        }),
    }
}

/// `Ok(None)` when the program is infeasible.
pub(crate) fn try_synthesize(
    cell: &Cell,
    env: &Environment,
    cfg: &SynthesisConfig,
) -> Result<Option<SynthesisResult>, SynthesisError> {
    let robust = assemble_robust_lp(cell, env, cfg)?;
    let solution = solve_lp(&robust.lp)?;
    match solution.status {
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(SynthesisError::Unbounded),
        LpStatus::Optimal => Ok(Some(extract(solution, robust.layout))),
    }
}

pub(crate) fn extract(solution: LpSolution, layout: LpLayout) -> SynthesisResult {
    let y = &solution.y;
    let m = layout.input_dim;
    let cols = layout.state_dim * layout.landmarks;
    let feedback = DMatrix::from_fn(m, cols, |r, c| y[layout.feedback_var(r, c)]);
    let offset = DVector::from_iterator(m, layout.offset.clone().map(|v| y[v]));
    let slack_h = DVector::from_iterator(layout.delta_h.len(), layout.delta_h.clone().map(|v| y[v]));
    SynthesisResult {
        gains: Gains { feedback, offset },
        objective: solution.objective,
        slack_h,
        slack_v: y[layout.delta_v],
        status: solution.status,
        solution,
        layout,
    }
}

fn all_families(cell: &Cell, env: &Environment, cfg: &SynthesisConfig) -> Vec<ConstraintFamily> {
    assemble::family_terms(cell, env, cfg)
        .into_iter()
        .map(|f| f.family)
        .collect()
}

fn feasible_without(
    cell: &Cell,
    env: &Environment,
    cfg: &SynthesisConfig,
    exclude: &[ConstraintFamily],
) -> Result<bool, SynthesisError> {
    let opts = AssemblyOptions {
        exclude: exclude.to_vec(),
        feasibility_only: true,
    };
    let lp = assemble_robust_with(cell, env, cfg, &opts)?.lp;
    Ok(solve_lp(&lp)?.status != LpStatus::Infeasible)
}

/// Deletion filter over constraint families: returns an irreducible subset
/// of families that is infeasible on its own.
pub fn diagnose_infeasible(
    cell: &Cell,
    env: &Environment,
    cfg: &SynthesisConfig,
) -> Result<Vec<ConstraintFamily>, SynthesisError> {
    let families = all_families(cell, env, cfg);
    if feasible_without(cell, env, cfg, &[])? {
        return Ok(Vec::new());
    }
    let mut kept = families.clone();
    for f in &families {
        let trial: Vec<ConstraintFamily> = kept.iter().copied().filter(|g| g != f).collect();
        let exclude: Vec<ConstraintFamily> = families.iter().copied().filter(|g| !trial.contains(g)).collect();
        if !feasible_without(cell, env, cfg, &exclude)? {
            kept = trial;
        }
    }
    Ok(kept)
}

/// Synthesizes every cell with a shared configuration. All cells are
/// attempted; infeasible ones are reported together.
pub fn synthesize_all(
    env: &Environment,
    cfg: &SynthesisConfig,
) -> Result<BTreeMap<usize, SynthesisResult>, SynthesisError> {
    let outcomes: Vec<(usize, Result<SynthesisResult, SynthesisError>)> = env
        .cells()
        .par_iter()
        .enumerate()
        .map(|(i, cell)| (i, synthesize_cell(cell, env, cfg)))
        .collect();
    let mut map = BTreeMap::new();
    let mut failed = Vec::new();
    for (i, r) in outcomes {
        match r {
            Ok(res) => {
                map.insert(i, res);
            }
            Err(SynthesisError::Infeasible { families, .. }) => failed.push((i, families)),
            Err(e) => return Err(e),
        }
    }
    if failed.is_empty() {
        Ok(map)
    } else {
        Err(SynthesisError::Cells(failed))
    }
}

/// Tags an infeasibility error with its cell index.
pub fn at_cell(err: SynthesisError, index: usize) -> SynthesisError {
    match err {
        SynthesisError::Infeasible { families, .. } => SynthesisError::Infeasible {
            cell: Some(index),
            families,
        },
        other => other,
    }
}
