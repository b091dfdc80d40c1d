//! Exact solver for the pickup and delivery problem with time windows,
//! built on fragments, a resource expanded network refined by dynamic
//! discretization discovery, and reduced-cost based formulation tightening.

pub mod cere;
pub mod cli;
pub mod colgen;
pub mod driver;
pub mod fl;
pub mod fragments;
pub mod instance;
pub mod labelling;
pub mod ren;
pub mod rfn;

use instance::InstanceError;

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Mip(#[from] fragsolve_mip::MipError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("iteration limit of {0} exceeded")]
    IterationLimit(usize),
    #[error("more than {0} fragments enumerated")]
    EnumerationCap(usize),
    #[error("start time {t} outside window [{lo}, {hi}]")]
    OutsideWindow { t: f64, lo: f64, hi: f64 },
    #[error("{0}")]
    InvalidInput(String),
    #[error("internal error: {0}")]
    Internal(String),
}
