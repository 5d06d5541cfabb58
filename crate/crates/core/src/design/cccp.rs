//! Inner loop: successive convex restrictions of `max N(W) - mu D(W)`.

use serde::{Deserialize, Serialize};

use crate::convex::barrier::BarrierOptions;
use crate::convex::subproblem::{solve_subproblem_with, Expansion, SubproblemSpec, SubproblemStatus};
use crate::geometry::ChannelState;
use crate::power::{total_power, PowerConstants};
use crate::secrecy::{energy_efficiency, secrecy_sum_rate, Precoder};

/// `N(W) - mu D(W)`, the parametrized objective.
pub fn parametric_objective(w: &Precoder, ch: &ChannelState, pc: &PowerConstants, mu: f64) -> f64 {
    secrecy_sum_rate(w, ch) - mu * total_power(w, &ch.i_dc, pc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CccpStop {
    /// Relative change of `W` fell below the tolerance.
    Converged,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CccpError {
    /// The first restriction has no strictly feasible point.
    InfeasibleThresholds,
    /// A later restriction failed; its expansion point should have been feasible.
    InnerFailure { iteration: usize, status: SubproblemStatus },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SubproblemStats {
    pub solves: usize,
    pub newton_iterations: usize,
    pub phase_one_runs: usize,
    pub not_optimal: usize,
    pub max_kkt_residual: f64,
    pub max_duality_gap: f64,
}

impl SubproblemStats {
    pub fn merge(&mut self, other: &SubproblemStats) {
        self.solves += other.solves;
        self.newton_iterations += other.newton_iterations;
        self.phase_one_runs += other.phase_one_runs;
        self.not_optimal += other.not_optimal;
        self.max_kkt_residual = self.max_kkt_residual.max(other.max_kkt_residual);
        self.max_duality_gap = self.max_duality_gap.max(other.max_duality_gap);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CccpOutcome {
    pub w: Precoder,
    /// True objective at `W0` followed by its value at every iterate.
    pub objective_trace: Vec<f64>,
    /// Energy efficiency at every iterate (excluding `W0`).
    pub ee_trace: Vec<f64>,
    pub iterations: usize,
    pub stop: CccpStop,
    pub stats: SubproblemStats,
}

#[derive(Debug, Clone)]
pub struct CccpOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub barrier: BarrierOptions,
}

/// Runs CCCP from `w0` at fixed `mu`. Each iterate is the solution of the
/// restriction linearized at the previous one. On failure the partial
/// outcome is returned next to the error.
#[allow(clippy::result_large_err)]
pub fn cccp_solve(
    mu: f64,
    w0: &Precoder,
    ch: &ChannelState,
    pc: &PowerConstants,
    lambda: &[f64],
    opts: &CccpOptions,
) -> Result<CccpOutcome, (CccpError, CccpOutcome)> {
    let mut w = w0.clone();
    let mut out = CccpOutcome {
        w: w.clone(),
        objective_trace: vec![parametric_objective(&w, ch, pc, mu)],
        ee_trace: Vec::new(),
        iterations: 0,
        stop: CccpStop::IterationCap,
        stats: SubproblemStats::default(),
    };
    let mut hint: Option<Vec<f64>> = None;
    for m in 1..=opts.max_iterations {
        let spec = SubproblemSpec { mu, expansion: Expansion::tight(&w, ch), ch, pc, lambda };
        let sol = solve_subproblem_with(&spec, hint.as_deref(), &opts.barrier);
        out.stats.solves += 1;
        out.stats.newton_iterations += sol.newton_iterations;
        out.stats.phase_one_runs += usize::from(sol.used_phase_one);
        match sol.status {
            SubproblemStatus::Optimal => {
                out.stats.max_kkt_residual = out.stats.max_kkt_residual.max(sol.kkt_residual);
                out.stats.max_duality_gap = out.stats.max_duality_gap.max(sol.duality_gap);
            }
            SubproblemStatus::MaxIterations if sol.objective.is_finite() => out.stats.not_optimal += 1,
            status => {
                let err = if m == 1 && status == SubproblemStatus::Infeasible {
                    CccpError::InfeasibleThresholds
                } else {
                    CccpError::InnerFailure { iteration: m, status }
                };
                return Err((err, out));
            }
        }
        let next = sol.point.w;
        let change = next.relative_change(&w);
        out.objective_trace.push(parametric_objective(&next, ch, pc, mu));
        out.ee_trace.push(energy_efficiency(&next, ch, pc));
        out.iterations = m;
        w = next;
        hint = Some(sol.raw);
        if change <= opts.tolerance {
            out.stop = CccpStop::Converged;
            break;
        }
    }
    out.w = w;
    Ok(out)
}
