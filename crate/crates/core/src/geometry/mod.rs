//! Polytopic cells, the environment model, and the per-cell Lyapunov and
//! barrier functions.
//!
//! Sign conventions used throughout the crate:
//!
//! * barrier: `h(x) = b_h - A_h x`, built from the non-exit rows of the cell,
//!   so `h >= 0` exactly on the cell (ignoring the exit face);
//! * Lyapunov: `V(x) = z·(x_e - x)` with `z` the outward unit normal of the
//!   exit face, so `V >= 0` inside and `V = 0` on the exit face.

mod environment;
mod polytope;

use thiserror::Error;

pub use environment::{
    load_environment, Cell, CellDocument, Dynamics, DynamicsDocument, Environment, EnvironmentDocument,
    HalfspacesDocument, InputSetDocument,
};
pub use polytope::{Polytope, VERTEX_TOL};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid geometry: {0}")]
    Invalid(String),
    #[error("polytope is unbounded")]
    Unbounded,
    #[error("polytope is empty")]
    Empty,
    #[error("polytope is not full-dimensional")]
    Degenerate,
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("cell {cell}: exit face out of range ({face} >= {rows})")]
    ExitFaceOutOfRange { cell: usize, face: usize, rows: usize },
    #[error("cell {cell}: {reason}")]
    Cell { cell: usize, reason: String },
    #[error("(A, B) is not controllable (controllability rank {rank} < {n})")]
    Uncontrollable { rank: usize, n: usize },
    #[error(transparent)]
    Lp(#[from] crate::lp::LpError),
}
