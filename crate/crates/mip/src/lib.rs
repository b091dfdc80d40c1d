//! A small, deterministic LP/MIP engine: bounded revised simplex with duals
//! and best-first branch-and-bound over it.

pub mod bnb;
pub mod model;
pub mod simplex;

pub use bnb::{solve_mip, CallbackAction, MipModel, MipOptions, MipSolution, MipStatus};
pub use model::{ColId, Column, LinearProgram, Row, RowId, Sense};
pub use simplex::{solve_lp, solve_with_bounds, Basis, LpSolution, LpStatus, VarState};

#[derive(Debug, thiserror::Error)]
pub enum MipError {
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("simplex exceeded {0} iterations")]
    IterationLimit(usize),
    #[error("LP relaxation is unbounded")]
    Unbounded,
}
