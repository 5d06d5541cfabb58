//! The two-level design loop: Dinkelbach on the efficiency ratio around a
//! CCCP inner solver, with zero-forcing or random starting points.

pub mod cccp;
pub mod dinkelbach;
pub mod init;

pub use cccp::{cccp_solve, parametric_objective, CccpOptions, CccpOutcome};
pub use dinkelbach::{
    dinkelbach_solve, dinkelbach_solve_from, dinkelbach_solve_seeded, iterations_to_within, seeded_initial_point,
    SolveReport, SolveStatus, SolverOptions,
};
pub use init::{initial_point, zero_forcing_init, InitialPoint};
