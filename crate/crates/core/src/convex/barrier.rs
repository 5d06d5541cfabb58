//! Primal log-barrier interior-point method with damped Newton centering.
//!
//! For each barrier weight `t` the centering step minimizes
//! `t f0(x) - sum_i log(-f_i(x))`; `t` grows geometrically until the
//! duality-gap bound `m / t` drops below tolerance. Line searches compare
//! barrier values through per-function increments, which keeps Armijo tests
//! meaningful when `t f0` is many orders of magnitude above the step gain.

use serde::{Deserialize, Serialize};

use super::linalg::solve_spd;
use super::program::{Constraint, ConvexProgram, Function};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierOptions {
    /// Initial barrier weight, lowered to `m / |f0(x0)|` for large objectives.
    pub t0: f64,
    pub growth: f64,
    /// Stop once `m / t` is below this (or below `1e-13 |f0|`, if larger).
    pub gap_tol: f64,
    /// Centering stops when half the squared Newton decrement is below this.
    pub newton_tol: f64,
    /// Same, for the last stage, whose point is returned.
    pub final_newton_tol: f64,
    /// Required scaled stationarity residual at the final stage.
    pub kkt_tol: f64,
    pub max_newton: usize,
    pub armijo: f64,
    pub backtrack: f64,
    pub stagnation_window: usize,
    pub stagnation_progress: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            t0: 1.0,
            growth: 10.0,
            gap_tol: 1e-8,
            newton_tol: 1e-10,
            final_newton_tol: 1e-18,
            kkt_tol: 1e-6,
            max_newton: 1000,
            armijo: 0.01,
            backtrack: 0.5,
            stagnation_window: 5,
            stagnation_progress: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BarrierStatus {
    Optimal,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub t: f64,
    /// `f0` at the end of the stage.
    pub objective: f64,
    pub newton_steps: usize,
    pub decrement_sq: f64,
}

#[derive(Debug, Clone)]
pub struct BarrierOutcome {
    pub x: Vec<f64>,
    pub status: BarrierStatus,
    pub t: f64,
    /// `m / t`, the duality-gap bound of a centered point.
    pub gap_bound: f64,
    pub kkt_residual: f64,
    pub newton_iterations: usize,
    pub stages: Vec<StageRecord>,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BarrierError {
    NotStrictlyFeasible,
}

/// Early stop test, given the iterate, the current `t`, and whether the
/// iterate is centered (only then is `m / t` a valid gap bound).
pub type EarlyStop<'a> = &'a dyn Fn(&[f64], f64, bool) -> bool;

struct Workspace {
    n: usize,
    hess: Vec<f64>,
    grad: Vec<f64>,
    step: Vec<f64>,
    scale: Vec<f64>,
    scratch: Vec<f64>,
    values: Vec<f64>,
}

impl Workspace {
    fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            hess: vec![0.0; n * n],
            grad: vec![0.0; n],
            step: vec![0.0; n],
            scale: vec![0.0; n],
            scratch: vec![0.0; n],
            values: vec![0.0; m],
        }
    }

    /// Fills constraint values; false if some constraint is not strictly satisfied.
    fn eval_constraints(&mut self, cons: &[Constraint], x: &[f64]) -> bool {
        for (v, c) in self.values.iter_mut().zip(cons) {
            *v = c.f.value(x);
        }
        self.values.iter().all(|v| *v < 0.0)
    }

    /// Gradient and Hessian of `t f0 - sum log(-f_i)`; needs `eval_constraints` first.
    fn assemble(&mut self, prog: &ConvexProgram, x: &[f64], t: f64) {
        let n = self.n;
        self.hess.fill(0.0);
        self.grad.fill(0.0);
        prog.objective.add_gradient(x, t, &mut self.grad);
        prog.objective.add_hessian(x, t, &mut self.hess, n);
        for (c, &v) in prog.constraints.iter().zip(&self.values) {
            let inv = 1.0 / (-v);
            let support = c.f.support();
            for &j in support {
                self.scratch[j] = 0.0;
            }
            c.f.add_gradient(x, 1.0, &mut self.scratch);
            for &j in support {
                self.grad[j] += self.scratch[j] * inv;
            }
            c.f.add_hessian(x, inv, &mut self.hess, n);
            let inv2 = inv * inv;
            for &a in support {
                let ga = self.scratch[a] * inv2;
                if ga == 0.0 {
                    continue;
                }
                let row = &mut self.hess[a * n..(a + 1) * n];
                for &b in support {
                    row[b] += ga * self.scratch[b];
                }
            }
        }
    }
}

/// Barrier increment `t (f0(x + a dx) - f0(x)) - sum log(f_i(x + a dx) / f_i(x))`.
/// `None` when the trial point leaves the strictly feasible region.
fn barrier_delta(prog: &ConvexProgram, values: &[f64], x: &[f64], dx: &[f64], alpha: f64, t: f64) -> Option<f64> {
    let mut total = t * prog.objective.delta(x, dx, alpha);
    for (c, &v) in prog.constraints.iter().zip(values) {
        let d = c.f.delta(x, dx, alpha);
        let ratio = d / v;
        // the new value is v + d = v (1 + ratio); it must stay negative
        if !(ratio > -1.0) || !d.is_finite() {
            return None;
        }
        total -= ratio.ln_1p();
    }
    Some(total)
}

/// Squared decrement below which Newton steps are expected to converge quadratically.
const QUADRATIC_REGIME: f64 = 1e-3;

/// Gap targets below this fraction of `|f0|` are under the rounding level of `f0`.
const REL_GAP_FLOOR: f64 = 1e-13;

/// Squared decrement at which a stalled stage is still treated as centered.
const STALL_ACCEPT: f64 = 1e-6;

enum CenterEnd {
    Centered,
    Stalled,
    Early,
}

#[allow(clippy::too_many_arguments)]
fn center(
    prog: &ConvexProgram,
    x: &mut [f64],
    t: f64,
    ws: &mut Workspace,
    opts: &BarrierOptions,
    tol: f64,
    budget: &mut usize,
    early: Option<EarlyStop<'_>>,
) -> (CenterEnd, usize, f64) {
    let n = prog.n;
    let mut steps = 0;
    let mut best: Vec<f64> = Vec::new();
    loop {
        if !ws.eval_constraints(&prog.constraints, x) {
            return (CenterEnd::Stalled, steps, f64::NAN);
        }
        ws.assemble(prog, x, t);
        for j in 0..n {
            ws.step[j] = -ws.grad[j];
        }
        solve_spd(&mut ws.hess, n, &mut ws.step, &mut ws.scale);
        let slope: f64 = ws.grad.iter().zip(&ws.step).map(|(g, d)| g * d).sum();
        let dec_sq = -slope;
        if !dec_sq.is_finite() {
            return (CenterEnd::Stalled, steps, dec_sq);
        }
        if dec_sq / 2.0 <= tol {
            return (CenterEnd::Centered, steps, dec_sq);
        }
        if *budget == 0 {
            return (CenterEnd::Stalled, steps, dec_sq);
        }
        // in the quadratic regime Newton should at least halve the best
        // decrement within the window; if not, rounding has taken over
        best.push(best.last().map_or(dec_sq, |b: &f64| b.min(dec_sq)));
        let w = opts.stagnation_window;
        if best.len() > w {
            let old = best[best.len() - 1 - w];
            let now = best[best.len() - 1];
            if old < QUADRATIC_REGIME && (old - now < opts.stagnation_progress || now > 0.5 * old) {
                return (CenterEnd::Stalled, steps, dec_sq);
            }
        }

        let mut alpha = 1.0;
        let accepted = loop {
            match barrier_delta(prog, &ws.values, x, &ws.step, alpha, t) {
                Some(delta) if delta <= opts.armijo * alpha * slope => break true,
                _ => {}
            }
            alpha *= opts.backtrack;
            if alpha < 1e-14 {
                break false;
            }
        };
        if !accepted {
            // at the rounding floor of a nearly centered point the decrement
            // can no longer be reduced; accept the point as centered
            if dec_sq < 1e-6 {
                return (CenterEnd::Centered, steps, dec_sq);
            }
            return (CenterEnd::Stalled, steps, dec_sq);
        }
        for (xj, dj) in x.iter_mut().zip(&ws.step) {
            *xj += alpha * dj;
        }
        steps += 1;
        *budget -= 1;
        if let Some(stop) = early {
            if stop(x, t, false) {
                return (CenterEnd::Early, steps, dec_sq);
            }
        }
    }
}

/// Stationarity in scaled units: the largest `|d_j psi| / sqrt(d_jj psi)` of
/// the normalized centering objective `psi = f0 - (1/t) sum log(-f_i)`.
///
/// With `lambda_i = 1 / (t (-f_i))`, `grad psi` is exactly the KKT
/// stationarity residual. The diagonal scaling keeps coordinates pinned
/// against a bound (curvature ~ 1/f^2) from dominating the measure.
fn stationarity(prog: &ConvexProgram, x: &[f64], t: f64, ws: &mut Workspace) -> f64 {
    if !ws.eval_constraints(&prog.constraints, x) {
        return f64::INFINITY;
    }
    ws.assemble(prog, x, t);
    let n = prog.n;
    (0..n)
        .map(|j| {
            let d = ws.hess[j * n + j];
            if d > 0.0 {
                // grad and hess are those of t * psi
                ws.grad[j].abs() / (d * t).sqrt()
            } else if ws.grad[j] == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

/// Minimizes `prog` from a strictly feasible `x0`.
pub fn minimize(
    prog: &ConvexProgram,
    x0: &[f64],
    opts: &BarrierOptions,
    early: Option<EarlyStop<'_>>,
) -> Result<BarrierOutcome, BarrierError> {
    if !prog.is_strictly_feasible(x0) {
        return Err(BarrierError::NotStrictlyFeasible);
    }
    let m = prog.m() as f64;
    let mut ws = Workspace::new(prog.n, prog.m());
    let mut x = x0.to_vec();
    // m / t0 should be of the order of the initial suboptimality; badly
    // scaled objectives otherwise spend the whole budget in the first stage
    let f0 = prog.objective.value(x0).abs();
    let mut t = if f0 * opts.t0 > m { m / f0 } else { opts.t0 };
    let mut budget = opts.max_newton;
    let mut stages = Vec::new();
    let mut total = 0;
    loop {
        let target = opts.gap_tol.max(REL_GAP_FLOOR * prog.objective.value(&x).abs());
        let last_stage = m / t < target;
        let tol = if last_stage { opts.final_newton_tol } else { opts.newton_tol };
        let (end, steps, dec_sq) = center(prog, &mut x, t, &mut ws, opts, tol, &mut budget, early);
        total += steps;
        stages.push(StageRecord { t, objective: prog.objective.value(&x), newton_steps: steps, decrement_sq: dec_sq });
        let finish = |status, x: Vec<f64>, ws: &mut Workspace, early| {
            let kkt_residual = stationarity(prog, &x, t, ws);
            BarrierOutcome {
                x,
                status,
                t,
                gap_bound: m / t,
                kkt_residual,
                newton_iterations: total,
                stages: stages.clone(),
                stopped_early: early,
            }
        };
        match end {
            CenterEnd::Early => return Ok(finish(BarrierStatus::Optimal, x, &mut ws, true)),
            CenterEnd::Centered if !last_stage => {
                if early.is_some_and(|stop| stop(&x, t, true)) {
                    return Ok(finish(BarrierStatus::Optimal, x, &mut ws, true));
                }
            }
            // a stall deep in the quadratic regime is at the rounding floor of
            // this stage; the gap bound of the next stage still applies
            CenterEnd::Stalled if !last_stage && !(dec_sq <= STALL_ACCEPT) => {
                return Ok(finish(BarrierStatus::MaxIterations, x, &mut ws, false));
            }
            CenterEnd::Stalled if !last_stage => {}
            // the tight final tolerance may sit below rounding; accept the
            // point whenever its stationarity residual is small enough
            _ => {
                let mut out = finish(BarrierStatus::Optimal, x, &mut ws, false);
                if !(out.kkt_residual <= opts.kkt_tol) {
                    out.status = BarrierStatus::MaxIterations;
                }
                return Ok(out);
            }
        }
        t *= opts.growth;
    }
}

#[derive(Debug, Clone)]
pub enum PhaseOneOutcome {
    /// A point strictly satisfying every constraint.
    Feasible(Vec<f64>),
    /// The smallest achievable common relaxation is positive: no strictly
    /// feasible point exists. Carries the minimizer of the relaxation.
    Infeasible {
        relaxation: f64,
        x: Vec<f64>,
    },
    MaxIterations,
}

/// Searches for a strictly feasible point by minimizing a common relaxation
/// `s` of every relaxable constraint, `f_i(x) <= s`. Non-relaxable constraints
/// must already hold strictly at `x0`.
///
/// Stops as soon as `s < -margin`, or once the relaxation is certified
/// positive.
pub fn phase_one(prog: &ConvexProgram, x0: &[f64], opts: &BarrierOptions, margin: f64) -> PhaseOneOutcome {
    let n = prog.n;
    let s_idx = n;
    let Some((aux, worst)) = relaxed(prog, x0) else {
        return PhaseOneOutcome::MaxIterations;
    };
    if worst < -margin {
        return PhaseOneOutcome::Feasible(x0.to_vec());
    }
    let mut start = x0.to_vec();
    start.push(worst.abs().max(1.0) + worst);
    let m = aux.m() as f64;
    // stop when strictly feasible, or when the relaxation is certified positive
    let stop = |x: &[f64], t: f64, centered: bool| x[s_idx] < -margin || (centered && x[s_idx] - m / t > 0.0);
    let out = match minimize(&aux, &start, opts, Some(&stop)) {
        Ok(out) => out,
        Err(_) => return PhaseOneOutcome::MaxIterations,
    };
    let s = out.x[s_idx];
    let x: Vec<f64> = out.x[..n].to_vec();
    if s < 0.0 && prog.is_strictly_feasible(&x) {
        return PhaseOneOutcome::Feasible(x);
    }
    if s - out.gap_bound > 0.0 || out.status == BarrierStatus::Optimal {
        return PhaseOneOutcome::Infeasible { relaxation: s, x };
    }
    PhaseOneOutcome::MaxIterations
}

/// Minimizes the common relaxation to optimality (no early exit) and returns
/// the minimizer together with the optimal relaxation value.
pub fn min_relaxation(prog: &ConvexProgram, x0: &[f64], opts: &BarrierOptions) -> Option<(Vec<f64>, f64)> {
    let n = prog.n;
    let (aux, worst) = relaxed(prog, x0)?;
    let mut start = x0.to_vec();
    start.push(worst + worst.abs().max(1.0));
    let out = minimize(&aux, &start, opts, None).ok()?;
    if out.status != BarrierStatus::Optimal {
        return None;
    }
    let s = out.x[n];
    Some((out.x[..n].to_vec(), s))
}

/// The relaxed program over `(x, s)` and the largest relaxable violation at
/// `x0`; `None` if a non-relaxable constraint fails at `x0`.
fn relaxed(prog: &ConvexProgram, x0: &[f64]) -> Option<(ConvexProgram, f64)> {
    let n = prog.n;
    let constraints: Vec<Constraint> = prog
        .constraints
        .iter()
        .map(|c| {
            if c.relaxable {
                Constraint { f: c.f.with_extra_linear(n, -1.0), class: c.class, relaxable: true }
            } else {
                c.clone()
            }
        })
        .collect();
    if constraints.iter().any(|c| !c.relaxable && c.f.value(x0) >= 0.0) {
        return None;
    }
    let worst =
        prog.constraints.iter().filter(|c| c.relaxable).map(|c| c.f.value(x0)).fold(f64::NEG_INFINITY, f64::max);
    let aux = ConvexProgram { n: n + 1, objective: Function::affine(vec![(n, 1.0)], 0.0), constraints };
    Some((aux, worst))
}
