//! The convex restriction solved at every CCCP step.
//!
//! For a fixed Dinkelbach parameter `mu` and expansion point `W0` the program
//! maximizes `sum_k (r1 - r2 - r3) - mu (P_DC + xi Tr(W W^T))` over the
//! precoder and six slack blocks. The non-convex constraints are replaced by
//! their first-order expansions at `W0`:
//!
//! * `p1_k <= sum_i a_k ((h_k^T w0_i)^2 + 2 (h_k^T w0_i) h_k^T (w_i - w0_i))`
//! * `r2_k >= ½ log2(1 + p2_0) + (p2 - p2_0) / (2 ln 2 (1 + p2_0))`, same for `r3`
//!
//! while `r1 <= ½ log2(1 + p1)`, the quadratic interference and leakage bounds,
//! the secrecy thresholds and the per-LED amplitude budget are kept exact.
//!
//! Internally each channel vector is normalized to unit length (its squared
//! norm moves into `a_k`, `b_k`), and each `p` block is divided by a per-user
//! scale so all variables are O(1). The amplitude constraint uses the split
//! `w = w+ - w-` with `w+, w- >= 0`.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::barrier::{minimize, phase_one, BarrierOptions, BarrierStatus, PhaseOneOutcome, StageRecord};
use super::program::{Constraint, ConstraintClass, ConvexProgram, Function, QuadForm, Smooth};
use crate::geometry::ChannelState;
use crate::power::{dc_power, PowerConstants};
use crate::secrecy::{half_log2_1p, slack_values, Precoder};

/// Expansion point of the linearization: the previous precoder and its
/// interference and leakage slacks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Expansion {
    pub w: Precoder,
    pub p2: Vec<f64>,
    pub p3: Vec<f64>,
}

impl Expansion {
    /// Slacks evaluated with equality at `w`.
    pub fn tight(w: &Precoder, ch: &ChannelState) -> Self {
        let s = slack_values(w, ch);
        Self { w: w.clone(), p2: s.iter().map(|v| v.p2).collect(), p3: s.iter().map(|v| v.p3).collect() }
    }
}

pub struct SubproblemSpec<'a> {
    pub mu: f64,
    pub expansion: Expansion,
    pub ch: &'a ChannelState,
    pub pc: &'a PowerConstants,
    pub lambda: &'a [f64],
}

/// Index map of the stacked variable vector
/// `[w+ (N_T x K), w- (N_T x K), r1, r2, r3, q1, q2, q3]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VariableLayout {
    pub n_leds: usize,
    pub n_users: usize,
}

impl VariableLayout {
    pub fn n(&self) -> usize {
        2 * self.n_leds * self.n_users + 6 * self.n_users
    }
    pub fn wp(&self, n: usize, k: usize) -> usize {
        n * self.n_users + k
    }
    pub fn wm(&self, n: usize, k: usize) -> usize {
        self.n_leds * self.n_users + n * self.n_users + k
    }
    fn slack(&self, block: usize, k: usize) -> usize {
        2 * self.n_leds * self.n_users + block * self.n_users + k
    }
    pub fn r1(&self, k: usize) -> usize {
        self.slack(0, k)
    }
    pub fn r2(&self, k: usize) -> usize {
        self.slack(1, k)
    }
    pub fn r3(&self, k: usize) -> usize {
        self.slack(2, k)
    }
    pub fn q1(&self, k: usize) -> usize {
        self.slack(3, k)
    }
    pub fn q2(&self, k: usize) -> usize {
        self.slack(4, k)
    }
    pub fn q3(&self, k: usize) -> usize {
        self.slack(5, k)
    }
}

/// Unit-norm channels and the per-user factors that undo the normalization.
#[derive(Debug, Clone)]
struct Scaling {
    h_unit: DMatrix<f64>,
    /// `a_k ||h_k||^2`, also the scale of `q1`.
    alpha: Vec<f64>,
    /// `b_k ||h_k||^2`, also the scale of `q2`.
    beta: Vec<f64>,
    /// Scale of `q3`.
    leak_scale: Vec<f64>,
}

impl Scaling {
    fn new(ch: &ChannelState) -> Self {
        let k_users = ch.n_users();
        let norms: Vec<f64> = (0..k_users).map(|k| ch.h.column(k).norm()).collect();
        let h_unit =
            DMatrix::from_fn(ch.n_leds(), k_users, |n, k| if norms[k] > 0.0 { ch.h[(n, k)] / norms[k] } else { 0.0 });
        let alpha: Vec<f64> = (0..k_users).map(|k| ch.a[k] * norms[k] * norms[k]).collect();
        let beta: Vec<f64> = (0..k_users).map(|k| ch.b[k] * norms[k] * norms[k]).collect();
        let leak_scale = (0..k_users)
            .map(|k| {
                let m = (0..k_users).filter(|&i| i != k).map(|i| beta[i]).fold(0.0, f64::max);
                if m > 0.0 {
                    m
                } else {
                    beta[k].max(1.0)
                }
            })
            .collect();
        Self { h_unit, alpha, beta, leak_scale }
    }

    /// `u[k][i] = h_unit_k^T w_i`.
    fn gains(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        self.h_unit.transpose() * w
    }
}

/// The assembled convex program together with what is needed to map between
/// its variables and the physical quantities.
pub struct Subproblem {
    pub program: ConvexProgram,
    pub layout: VariableLayout,
    scaling: Scaling,
    budget: Vec<f64>,
    expansion: Expansion,
    lambda: Vec<f64>,
    /// Tangent data `(value, slope)` of `½ log2(1 + p)` at `p2_0`, `p3_0`.
    tangent2: Vec<(f64, f64)>,
    tangent3: Vec<(f64, f64)>,
}

fn tangent(p0: f64) -> (f64, f64) {
    (half_log2_1p(p0), 1.0 / (2.0 * LN_2 * (1.0 + p0)))
}

/// Linear form of `h_unit_k^T (w+_i - w-_i)` scaled by `c`.
fn gain_terms(layout: &VariableLayout, h_unit: &DMatrix<f64>, k: usize, i: usize, c: f64) -> Vec<(usize, f64)> {
    let mut terms = Vec::with_capacity(2 * layout.n_leds);
    for n in 0..layout.n_leds {
        let h = h_unit[(n, k)] * c;
        if h != 0.0 {
            terms.push((layout.wp(n, i), h));
            terms.push((layout.wm(n, i), -h));
        }
    }
    terms
}

pub fn build_subproblem(spec: &SubproblemSpec<'_>) -> Subproblem {
    let ch = spec.ch;
    let (n_t, k_users) = (ch.n_leds(), ch.n_users());
    let layout = VariableLayout { n_leds: n_t, n_users: k_users };
    let scaling = Scaling::new(ch);
    let budget = ch.amplitude_budget();
    let u0 = scaling.gains(spec.expansion.w.matrix());
    let tangent2: Vec<(f64, f64)> = spec.expansion.p2.iter().map(|&p| tangent(p)).collect();
    let tangent3: Vec<(f64, f64)> = spec.expansion.p3.iter().map(|&p| tangent(p)).collect();

    let mut obj_linear = Vec::with_capacity(3 * k_users);
    for k in 0..k_users {
        obj_linear.push((layout.r1(k), -1.0));
        obj_linear.push((layout.r2(k), 1.0));
        obj_linear.push((layout.r3(k), 1.0));
    }
    let coeff = spec.mu * spec.pc.xi;
    let forms = if coeff > 0.0 {
        (0..n_t)
            .flat_map(|n| (0..k_users).map(move |k| (n, k)))
            .map(|(n, k)| QuadForm { coeff, terms: vec![(layout.wp(n, k), 1.0), (layout.wm(n, k), -1.0)] })
            .collect()
    } else {
        Vec::new()
    };
    let objective = Function::new(Smooth::SumOfSquares(forms), obj_linear, spec.mu * dc_power(&ch.i_dc, spec.pc));

    let mut cons = Vec::new();
    let mut push = |f: Function, class: ConstraintClass, relaxable: bool| cons.push(Constraint { f, class, relaxable });
    for k in 0..k_users {
        // r1 <= ½ log2(1 + alpha q1)
        push(
            Function::new(
                Smooth::NegHalfLog2 { var: layout.q1(k), scale: scaling.alpha[k] },
                vec![(layout.r1(k), 1.0)],
                0.0,
            ),
            ConstraintClass::ConcaveLogBound,
            true,
        );
        // q1 <= sum_i (2 u0 u - u0^2)
        let mut lin = vec![(layout.q1(k), 1.0)];
        let mut constant = 0.0;
        for i in 0..k_users {
            lin.extend(gain_terms(&layout, &scaling.h_unit, k, i, -2.0 * u0[(k, i)]));
            constant += u0[(k, i)] * u0[(k, i)];
        }
        push(Function::affine(lin, constant), ConstraintClass::LinearizedSignal, true);
        // r2, r3 above the tangent of the log
        let (v2, s2) = tangent2[k];
        push(
            Function::affine(
                vec![(layout.q2(k), s2 * scaling.beta[k]), (layout.r2(k), -1.0)],
                v2 - s2 * spec.expansion.p2[k],
            ),
            ConstraintClass::LinearizedLog,
            true,
        );
        let (v3, s3) = tangent3[k];
        push(
            Function::affine(
                vec![(layout.q3(k), s3 * scaling.leak_scale[k]), (layout.r3(k), -1.0)],
                v3 - s3 * spec.expansion.p3[k],
            ),
            ConstraintClass::LinearizedLog,
            true,
        );
        push(
            Function::affine(vec![(layout.r1(k), -1.0), (layout.r2(k), 1.0), (layout.r3(k), 1.0)], spec.lambda[k]),
            ConstraintClass::SecrecyThreshold,
            true,
        );
        // q2 >= sum_{i != k} u_{k,i}^2
        let interference = (0..k_users)
            .filter(|&i| i != k)
            .map(|i| QuadForm { coeff: 1.0, terms: gain_terms(&layout, &scaling.h_unit, k, i, 1.0) })
            .collect();
        push(
            Function::new(Smooth::SumOfSquares(interference), vec![(layout.q2(k), -1.0)], 0.0),
            ConstraintClass::ConvexQuadratic,
            true,
        );
        // q3 >= sum_{i != k} (beta_i / s3_k) u_{i,k}^2
        let leakage = (0..k_users)
            .filter(|&i| i != k)
            .map(|i| QuadForm {
                coeff: scaling.beta[i] / scaling.leak_scale[k],
                terms: gain_terms(&layout, &scaling.h_unit, i, k, 1.0),
            })
            .collect();
        push(
            Function::new(Smooth::SumOfSquares(leakage), vec![(layout.q3(k), -1.0)], 0.0),
            ConstraintClass::ConvexQuadratic,
            true,
        );
    }
    for (n, &c) in budget.iter().enumerate() {
        let lin = (0..k_users).flat_map(|k| [(layout.wp(n, k), 1.0 / c), (layout.wm(n, k), 1.0 / c)]).collect();
        push(Function::affine(lin, -1.0), ConstraintClass::RowAmplitude, false);
    }
    for n in 0..n_t {
        for k in 0..k_users {
            push(Function::affine(vec![(layout.wp(n, k), -1.0)], 0.0), ConstraintClass::NonNegative, false);
            push(Function::affine(vec![(layout.wm(n, k), -1.0)], 0.0), ConstraintClass::NonNegative, false);
        }
    }
    // q2, q3 >= 0 already follow from the quadratic bounds; stating them again
    // makes both active together at zero interference and stalls Newton there
    for k in 0..k_users {
        push(Function::affine(vec![(layout.q1(k), -1.0)], 0.0), ConstraintClass::NonNegative, false);
    }

    Subproblem {
        program: ConvexProgram { n: layout.n(), objective, constraints: cons },
        layout,
        scaling,
        budget,
        expansion: spec.expansion.clone(),
        lambda: spec.lambda.to_vec(),
        tangent2,
        tangent3,
    }
}

/// Physical view of a point of the subproblem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemPoint {
    pub w: Precoder,
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub r3: Vec<f64>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub p3: Vec<f64>,
}

impl Subproblem {
    pub fn unpack(&self, x: &[f64]) -> SubproblemPoint {
        let l = &self.layout;
        let w = DMatrix::from_fn(l.n_leds, l.n_users, |n, k| x[l.wp(n, k)] - x[l.wm(n, k)]);
        let s = &self.scaling;
        let k_users = l.n_users;
        SubproblemPoint {
            w: Precoder::new(w),
            r1: (0..k_users).map(|k| x[l.r1(k)]).collect(),
            r2: (0..k_users).map(|k| x[l.r2(k)]).collect(),
            r3: (0..k_users).map(|k| x[l.r3(k)]).collect(),
            p1: (0..k_users).map(|k| x[l.q1(k)] * s.alpha[k]).collect(),
            p2: (0..k_users).map(|k| x[l.q2(k)] * s.beta[k]).collect(),
            p3: (0..k_users).map(|k| x[l.q3(k)] * s.leak_scale[k]).collect(),
        }
    }

    /// Packs a physical point; `w` is split into its positive and negative parts.
    pub fn pack(&self, p: &SubproblemPoint) -> Vec<f64> {
        let l = &self.layout;
        let s = &self.scaling;
        let mut x = vec![0.0; l.n()];
        for n in 0..l.n_leds {
            for k in 0..l.n_users {
                let v = p.w.matrix()[(n, k)];
                x[l.wp(n, k)] = v.max(0.0);
                x[l.wm(n, k)] = (-v).max(0.0);
            }
        }
        for k in 0..l.n_users {
            x[l.r1(k)] = p.r1[k];
            x[l.r2(k)] = p.r2[k];
            x[l.r3(k)] = p.r3[k];
            x[l.q1(k)] = p.p1[k] / s.alpha[k];
            x[l.q2(k)] = p.p2[k] / s.beta[k];
            x[l.q3(k)] = p.p3[k] / s.leak_scale[k];
        }
        x
    }

    /// The expansion point with every slack tight (a boundary point of the
    /// feasible set when the expansion point satisfies the thresholds).
    pub fn tight_point(&self) -> SubproblemPoint {
        let w = &self.expansion.w;
        let u = self.scaling.gains(w.matrix());
        let k_users = self.layout.n_users;
        let mut p = SubproblemPoint {
            w: w.clone(),
            r1: vec![0.0; k_users],
            r2: vec![0.0; k_users],
            r3: vec![0.0; k_users],
            p1: vec![0.0; k_users],
            p2: self.expansion.p2.clone(),
            p3: self.expansion.p3.clone(),
        };
        for k in 0..k_users {
            p.p1[k] = self.scaling.alpha[k] * (0..k_users).map(|i| u[(k, i)] * u[(k, i)]).sum::<f64>();
            p.r1[k] = half_log2_1p(p.p1[k]);
            p.r2[k] = self.tangent2[k].0;
            p.r3[k] = self.tangent3[k].0;
        }
        p
    }

    /// A strictly interior candidate built around the expansion point, or a
    /// point that only satisfies the simple bounds when the thresholds leave
    /// no room there.
    pub fn interior_guess(&self) -> Vec<f64> {
        let l = &self.layout;
        let s = &self.scaling;
        let k_users = l.n_users;
        let w0 = self.expansion.w.matrix();
        let mut x = vec![0.0; l.n()];
        let mut shrunk = w0.clone();
        for n in 0..l.n_leds {
            let c = self.budget[n];
            let floor = 1e-4 * c / k_users as f64;
            let l1: f64 = w0.row(n).iter().map(|v| v.abs()).sum();
            let room = c * (1.0 - 1e-4) - 2.0 * k_users as f64 * floor;
            let rho = if l1 > room { room / l1 } else { 1.0 };
            for k in 0..k_users {
                let v = w0[(n, k)] * rho;
                shrunk[(n, k)] = v;
                x[l.wp(n, k)] = v.max(0.0) + floor;
                x[l.wm(n, k)] = (-v).max(0.0) + floor;
            }
        }
        let u0 = s.gains(w0);
        let u = s.gains(&shrunk);
        let rel = 1e-3;
        let mut margins = Vec::with_capacity(k_users);
        for k in 0..k_users {
            let lin: f64 = (0..k_users).map(|i| 2.0 * u0[(k, i)] * u[(k, i)] - u0[(k, i)] * u0[(k, i)]).sum();
            let q1 = if lin > 0.0 { lin * (1.0 - rel) } else { 1e-12 };
            let q2 = (0..k_users).filter(|&i| i != k).map(|i| u[(k, i)] * u[(k, i)]).sum::<f64>() * (1.0 + rel) + 1e-12;
            let q3 = (0..k_users)
                .filter(|&i| i != k)
                .map(|i| s.beta[i] / s.leak_scale[k] * u[(i, k)] * u[(i, k)])
                .sum::<f64>()
                * (1.0 + rel)
                + 1e-12;
            let r1 = half_log2_1p(s.alpha[k] * q1);
            let (v2, s2) = self.tangent2[k];
            let (v3, s3) = self.tangent3[k];
            let r2 = v2 + s2 * (s.beta[k] * q2 - self.expansion.p2[k]);
            let r3 = v3 + s3 * (s.leak_scale[k] * q3 - self.expansion.p3[k]);
            x[l.q1(k)] = q1;
            x[l.q2(k)] = q2;
            x[l.q3(k)] = q3;
            x[l.r1(k)] = r1;
            x[l.r2(k)] = r2;
            x[l.r3(k)] = r3;
            margins.push(r1 - r2 - r3 - self.lambda[k]);
        }
        for (k, m) in margins.into_iter().enumerate() {
            let delta = if m > 0.0 { (m / 4.0).min(1e-2) } else { 1e-6 };
            x[l.r1(k)] -= delta;
            x[l.r2(k)] += delta;
            x[l.r3(k)] += delta;
        }
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubproblemStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubproblemSolution {
    pub point: SubproblemPoint,
    /// Value of the maximized objective at the returned point.
    pub objective: f64,
    pub kkt_residual: f64,
    /// Duality-gap bound `m / t` of the final barrier stage.
    pub duality_gap: f64,
    pub status: SubproblemStatus,
    pub newton_iterations: usize,
    pub used_phase_one: bool,
    pub stages: Vec<StageRecord>,
    /// Raw solver vector, usable as a warm start for the next expansion.
    #[serde(skip)]
    pub raw: Vec<f64>,
}

/// Phase-I acceptance margin on every relaxable constraint.
const PHASE_ONE_MARGIN: f64 = 1e-7;

pub fn solve_subproblem(spec: &SubproblemSpec<'_>) -> SubproblemSolution {
    solve_subproblem_with(spec, None, &BarrierOptions::default())
}

/// Solves the subproblem, trying `hint` as a starting point when the
/// constructed interior guess is not strictly feasible.
pub fn solve_subproblem_with(
    spec: &SubproblemSpec<'_>,
    hint: Option<&[f64]>,
    opts: &BarrierOptions,
) -> SubproblemSolution {
    let sub = build_subproblem(spec);
    let prog = &sub.program;
    let guess = sub.interior_guess();
    let mut used_phase_one = false;
    let start = if prog.is_strictly_feasible(&guess) {
        guess
    } else if let Some(h) = hint.filter(|h| h.len() == prog.n && prog.is_strictly_feasible(h)) {
        h.to_vec()
    } else {
        used_phase_one = true;
        match phase_one(prog, &guess, opts, PHASE_ONE_MARGIN) {
            PhaseOneOutcome::Feasible(x) => x,
            PhaseOneOutcome::Infeasible { x, .. } => return failed(&sub, x, SubproblemStatus::Infeasible),
            PhaseOneOutcome::MaxIterations => return failed(&sub, guess, SubproblemStatus::MaxIterations),
        }
    };
    match minimize(prog, &start, opts, None) {
        Ok(out) => SubproblemSolution {
            point: sub.unpack(&out.x),
            objective: -prog.objective.value(&out.x),
            kkt_residual: out.kkt_residual,
            duality_gap: out.gap_bound,
            status: match out.status {
                BarrierStatus::Optimal => SubproblemStatus::Optimal,
                BarrierStatus::MaxIterations => SubproblemStatus::MaxIterations,
            },
            newton_iterations: out.newton_iterations,
            used_phase_one,
            stages: out.stages,
            raw: out.x,
        },
        Err(_) => failed(&sub, start, SubproblemStatus::MaxIterations),
    }
}

fn failed(sub: &Subproblem, x: Vec<f64>, status: SubproblemStatus) -> SubproblemSolution {
    SubproblemSolution {
        point: sub.unpack(&x),
        objective: f64::NAN,
        kkt_residual: f64::NAN,
        duality_gap: f64::NAN,
        status,
        newton_iterations: 0,
        used_phase_one: true,
        stages: Vec::new(),
        raw: x,
    }
}

/// Constraint system of one subproblem together with its solve, for forensics.
/// `program` is in the internal scaled variables.
#[derive(Debug, Clone, Serialize)]
pub struct SubproblemDump {
    pub mu: f64,
    pub lambda: Vec<f64>,
    pub expansion: Expansion,
    pub program: ConvexProgram,
    pub solution: SubproblemSolution,
}

pub fn dump_subproblem(spec: &SubproblemSpec<'_>) -> SubproblemDump {
    SubproblemDump {
        mu: spec.mu,
        lambda: spec.lambda.to_vec(),
        expansion: spec.expansion.clone(),
        program: build_subproblem(spec).program,
        solution: solve_subproblem(spec),
    }
}
