//! Log-barrier interior-point machinery and the precoder subproblem built on it.

pub mod barrier;
mod linalg;
pub mod program;
pub mod subproblem;
