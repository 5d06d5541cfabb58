//! Outer loop: Dinkelbach iteration on the efficiency parameter `mu`.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cccp::{cccp_solve, CccpError, CccpOptions, SubproblemStats};
use super::init::{initial_point, InitialPoint};
use crate::config::{InitMode, SolverConfig};
use crate::convex::barrier::BarrierOptions;
use crate::error::{Error, Result};
use crate::geometry::ChannelState;
use crate::power::{total_power, PowerConstants};
use crate::secrecy::{energy_efficiency, secrecy_rate, secrecy_sum_rate, Precoder};

/// Feasibility tolerance on thresholds and amplitude rows.
pub const EPS_FEAS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub max_outer: usize,
    pub eps_dinkelbach: f64,
    pub max_inner: usize,
    pub eps_cccp: f64,
    pub init: InitMode,
    /// `None` starts from the efficiency of the initial precoder.
    pub mu0: Option<f64>,
    pub barrier: BarrierOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self::from(&SolverConfig::default())
    }
}

impl From<&SolverConfig> for SolverOptions {
    fn from(c: &SolverConfig) -> Self {
        Self {
            max_outer: c.max_outer,
            eps_dinkelbach: c.eps_dinkelbach,
            max_inner: c.max_inner,
            eps_cccp: c.eps_cccp,
            init: c.init,
            mu0: c.mu0,
            barrier: BarrierOptions::default(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::InvalidConfig("iteration caps must be at least 1".into()));
        }
        if !(self.eps_dinkelbach > 0.0 && self.eps_cccp > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be strictly positive".into()));
        }
        if self.mu0.is_some_and(|m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidConfig("mu0 must be finite and non-negative".into()));
        }
        Ok(())
    }

    fn cccp(&self) -> CccpOptions {
        CccpOptions { max_iterations: self.max_inner, tolerance: self.eps_cccp, barrier: self.barrier }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    OuterCap,
    InnerFailure,
    InfeasibleThresholds,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub init_mode: InitMode,
    pub init_fell_back_to_zf: bool,
    pub restoration_steps: usize,
    /// `mu` used by each outer iteration.
    pub mu_trace: Vec<f64>,
    /// `N(W*) / D(W*)`.
    pub mu_star: f64,
    /// `N(W*) - mu D(W*)` for the last `mu` of the trace.
    pub dinkelbach_residual: f64,
    /// Per outer iteration: true objective at the start point and at every CCCP iterate.
    pub cccp_objective_traces: Vec<Vec<f64>>,
    /// Energy efficiency along the whole path: initial point, restoration
    /// iterates, then every CCCP iterate of every outer iteration.
    pub ee_trace: Vec<f64>,
    pub ee_initial: f64,
    pub ee_final: f64,
    pub sum_rate: f64,
    pub total_power: f64,
    pub w_star: Precoder,
    pub per_user_secrecy: Vec<f64>,
    /// Largest `sum_k |w_nk| - budget_n` at `W*`.
    pub amplitude_residual: f64,
    pub iterations_outer: usize,
    pub iterations_inner_total: usize,
    pub subproblems: SubproblemStats,
    pub wall_time: f64,
}

impl SolveReport {
    /// Smallest index of `ee_trace` from which every later value stays
    /// within `fraction` of the final one.
    pub fn iterations_to_within(&self, fraction: f64) -> usize {
        iterations_to_within(&self.ee_trace, self.ee_final, fraction)
    }
}

pub fn iterations_to_within(trace: &[f64], last: f64, fraction: f64) -> usize {
    let ok = |v: f64| (v / last - 1.0).abs() <= fraction;
    trace.iter().rposition(|&v| !ok(v)).map_or(0, |i| i + 1)
}

/// Solves with the configured initialization; random starts use a fixed stream.
pub fn dinkelbach_solve(
    ch: &ChannelState,
    pc: &PowerConstants,
    lambda: &[f64],
    opts: &SolverOptions,
) -> Result<SolveReport> {
    dinkelbach_solve_seeded(ch, pc, lambda, opts, 0)
}

/// Like [`dinkelbach_solve`] with random starts drawn from `init_seed`.
pub fn dinkelbach_solve_seeded(
    ch: &ChannelState,
    pc: &PowerConstants,
    lambda: &[f64],
    opts: &SolverOptions,
    init_seed: u64,
) -> Result<SolveReport> {
    opts.validate()?;
    if lambda.len() != ch.n_users() {
        return Err(Error::Dimension("one secrecy threshold per user required".into()));
    }
    if ch.is_degenerate() {
        return Err(Error::DegenerateGeometry(format!("users {:?} have no line of sight", ch.degenerate_users())));
    }
    let start = Instant::now();
    let init = seeded_initial_point(ch, pc, lambda, opts, init_seed)?;
    let mut report = dinkelbach_solve_from(ch, pc, lambda, opts, &init);
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

/// The starting point [`dinkelbach_solve_seeded`] uses for `init_seed`.
pub fn seeded_initial_point(
    ch: &ChannelState,
    pc: &PowerConstants,
    lambda: &[f64],
    opts: &SolverOptions,
    init_seed: u64,
) -> Result<InitialPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
    initial_point(opts.init, ch, pc, lambda, &opts.barrier, &mut rng)
}

/// Runs the outer loop from a prepared starting point.
pub fn dinkelbach_solve_from(
    ch: &ChannelState,
    pc: &PowerConstants,
    lambda: &[f64],
    opts: &SolverOptions,
    init: &InitialPoint,
) -> SolveReport {
    let start = Instant::now();
    let mut w = init.start().clone();
    let ee_initial = energy_efficiency(&w, ch, pc);
    let mut report = SolveReport {
        status: SolveStatus::OuterCap,
        init_mode: init.mode,
        init_fell_back_to_zf: init.fell_back_to_zf,
        restoration_steps: init.restoration.len(),
        mu_trace: Vec::new(),
        mu_star: f64::NAN,
        dinkelbach_residual: f64::NAN,
        cccp_objective_traces: Vec::new(),
        ee_trace: init.path().map(|p| energy_efficiency(p, ch, pc)).collect(),
        ee_initial,
        ee_final: f64::NAN,
        sum_rate: f64::NAN,
        total_power: f64::NAN,
        w_star: w.clone(),
        per_user_secrecy: Vec::new(),
        amplitude_residual: f64::NAN,
        iterations_outer: 0,
        iterations_inner_total: 0,
        subproblems: SubproblemStats::default(),
        wall_time: 0.0,
    };
    let mut mu = opts.mu0.unwrap_or(ee_initial);
    if !init.feasible {
        report.status = SolveStatus::InfeasibleThresholds;
        finish(&mut report, w, ch, pc, mu, start);
        return report;
    }
    let cccp_opts = opts.cccp();
    for _ in 0..opts.max_outer {
        report.mu_trace.push(mu);
        report.iterations_outer += 1;
        let outcome = match cccp_solve(mu, &w, ch, pc, lambda, &cccp_opts) {
            Ok(o) => o,
            Err((err, partial)) => {
                absorb(&mut report, &partial);
                report.status = match err {
                    CccpError::InfeasibleThresholds => SolveStatus::InfeasibleThresholds,
                    CccpError::InnerFailure { .. } => SolveStatus::InnerFailure,
                };
                finish(&mut report, w, ch, pc, mu, start);
                return report;
            }
        };
        absorb(&mut report, &outcome);
        w = outcome.w;
        let n = secrecy_sum_rate(&w, ch);
        let d = total_power(&w, &ch.i_dc, pc);
        if n - mu * d <= opts.eps_dinkelbach {
            report.status = SolveStatus::Converged;
            break;
        }
        mu = n / d;
    }
    finish(&mut report, w, ch, pc, mu, start);
    if report.status == SolveStatus::Converged {
        let feasible = report.per_user_secrecy.iter().zip(lambda).all(|(r, l)| *r >= l - EPS_FEAS)
            && report.amplitude_residual <= EPS_FEAS;
        if !feasible {
            report.status = SolveStatus::InnerFailure;
        }
    }
    report
}

fn absorb(report: &mut SolveReport, o: &super::cccp::CccpOutcome) {
    report.cccp_objective_traces.push(o.objective_trace.clone());
    report.ee_trace.extend(&o.ee_trace);
    report.iterations_inner_total += o.iterations;
    report.subproblems.merge(&o.stats);
}

fn finish(report: &mut SolveReport, w: Precoder, ch: &ChannelState, pc: &PowerConstants, mu: f64, start: Instant) {
    let n = secrecy_sum_rate(&w, ch);
    let d = total_power(&w, &ch.i_dc, pc);
    report.sum_rate = n;
    report.total_power = d;
    report.ee_final = n / d;
    report.mu_star = n / d;
    report.dinkelbach_residual = n - mu * d;
    report.per_user_secrecy = (0..ch.n_users()).map(|k| secrecy_rate(&w, ch, k)).collect();
    report.amplitude_residual = w.amplitude_residual(&ch.amplitude_budget());
    report.w_star = w;
    report.wall_time = start.elapsed().as_secs_f64();
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iterations_to_within_counts_the_last_excursion() {
        let trace = [0.5, 0.97, 0.9, 0.99, 1.0];
        assert_eq!(iterations_to_within(&trace, 1.0, 0.05), 3);
        assert_eq!(iterations_to_within(&[1.0, 1.0], 1.0, 0.05), 0);
        assert_eq!(iterations_to_within(&[0.2, 0.5, 1.0], 1.0, 0.05), 2);
    }

    #[test]
    fn options_are_validated() {
        let mut o = SolverOptions::default();
        assert!(o.validate().is_ok());
        o.eps_cccp = 0.0;
        assert!(o.validate().is_err());
        o = SolverOptions { max_outer: 0, ..SolverOptions::default() };
        assert!(o.validate().is_err());
    }
}
