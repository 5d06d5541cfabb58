//! A small smooth convex program: `minimize f0(x)` s.t. `f_i(x) <= 0`.
//!
//! Each function is a sum of a smooth part, a sparse linear part and a
//! constant. Only the smooth shapes that the precoder subproblem needs are
//! supported.

use std::f64::consts::LN_2;

use serde::Serialize;

/// `coeff * (sum_j c_j x_j)^2`, with `coeff >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadForm {
    pub coeff: f64,
    pub terms: Vec<(usize, f64)>,
}

impl QuadForm {
    #[inline]
    fn inner(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, c)| c * x[j]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Smooth {
    None,
    SumOfSquares(Vec<QuadForm>),
    /// `-½ log2(1 + scale * x[var])`.
    NegHalfLog2 {
        var: usize,
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Function {
    pub smooth: Smooth,
    pub linear: Vec<(usize, f64)>,
    pub constant: f64,
    /// Sorted, de-duplicated indices the function depends on.
    #[serde(skip)]
    support: Vec<usize>,
}

impl Function {
    pub fn new(smooth: Smooth, linear: Vec<(usize, f64)>, constant: f64) -> Self {
        let mut support: Vec<usize> = linear.iter().map(|&(j, _)| j).collect();
        match &smooth {
            Smooth::None => {}
            Smooth::SumOfSquares(forms) => support.extend(forms.iter().flat_map(|f| f.terms.iter().map(|&(j, _)| j))),
            Smooth::NegHalfLog2 { var, .. } => support.push(*var),
        }
        support.sort_unstable();
        support.dedup();
        Self { smooth, linear, constant, support }
    }

    pub fn affine(linear: Vec<(usize, f64)>, constant: f64) -> Self {
        Self::new(Smooth::None, linear, constant)
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn with_extra_linear(&self, j: usize, c: f64) -> Self {
        let mut linear = self.linear.clone();
        linear.push((j, c));
        Self::new(self.smooth.clone(), linear, self.constant)
    }

    /// Value at `x`; `+inf` outside the domain of the log term.
    pub fn value(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.linear.iter().map(|&(j, c)| c * x[j]).sum();
        let smooth = match &self.smooth {
            Smooth::None => 0.0,
            Smooth::SumOfSquares(forms) => forms.iter().map(|f| f.coeff * f.inner(x).powi(2)).sum(),
            Smooth::NegHalfLog2 { var, scale } => {
                let arg = scale * x[*var];
                if arg <= -1.0 {
                    return f64::INFINITY;
                }
                -arg.ln_1p() / (2.0 * LN_2)
            }
        };
        smooth + lin + self.constant
    }

    /// `f(x + alpha dx) - f(x)` without cancellation against the constant.
    pub fn delta(&self, x: &[f64], dx: &[f64], alpha: f64) -> f64 {
        let lin: f64 = alpha * self.linear.iter().map(|&(j, c)| c * dx[j]).sum::<f64>();
        let smooth = match &self.smooth {
            Smooth::None => 0.0,
            Smooth::SumOfSquares(forms) => forms
                .iter()
                .map(|f| {
                    let u = f.inner(x);
                    let du = alpha * f.inner(dx);
                    f.coeff * du * (2.0 * u + du)
                })
                .sum(),
            Smooth::NegHalfLog2 { var, scale } => {
                let base = 1.0 + scale * x[*var];
                let rel = alpha * scale * dx[*var] / base;
                if rel <= -1.0 {
                    return f64::INFINITY;
                }
                -rel.ln_1p() / (2.0 * LN_2)
            }
        };
        smooth + lin
    }

    /// Adds `weight * grad f(x)` into `out`.
    pub fn add_gradient(&self, x: &[f64], weight: f64, out: &mut [f64]) {
        for &(j, c) in &self.linear {
            out[j] += weight * c;
        }
        match &self.smooth {
            Smooth::None => {}
            Smooth::SumOfSquares(forms) => {
                for f in forms {
                    let s = weight * 2.0 * f.coeff * f.inner(x);
                    for &(j, c) in &f.terms {
                        out[j] += s * c;
                    }
                }
            }
            Smooth::NegHalfLog2 { var, scale } => {
                out[*var] -= weight * scale / (2.0 * LN_2 * (1.0 + scale * x[*var]));
            }
        }
    }

    /// Adds `weight * hess f(x)` into the dense row-major `n x n` matrix `h`.
    pub fn add_hessian(&self, x: &[f64], weight: f64, h: &mut [f64], n: usize) {
        match &self.smooth {
            Smooth::None => {}
            Smooth::SumOfSquares(forms) => {
                for f in forms {
                    let s = weight * 2.0 * f.coeff;
                    for &(i, ci) in &f.terms {
                        let row = &mut h[i * n..(i + 1) * n];
                        for &(j, cj) in &f.terms {
                            row[j] += s * ci * cj;
                        }
                    }
                }
            }
            Smooth::NegHalfLog2 { var, scale } => {
                let base = 1.0 + scale * x[*var];
                h[var * n + var] += weight * scale * scale / (2.0 * LN_2 * base * base);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintClass {
    /// `r1 <= ½ log2(1 + p1)`, kept exact.
    ConcaveLogBound,
    /// Tangent-plane restriction of the received signal power.
    LinearizedSignal,
    /// Tangent of `½ log2(1 + p)` bounding `r2` or `r3` from below.
    LinearizedLog,
    SecrecyThreshold,
    /// `p2 >= sum of squared interference` or `p3 >= sum of squared leakage`.
    ConvexQuadratic,
    RowAmplitude,
    NonNegative,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constraint {
    pub f: Function,
    pub class: ConstraintClass,
    /// Whether feasibility search may relax this constraint. Simple bounds are
    /// never relaxed; they are satisfied directly by the starting point.
    pub relaxable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexProgram {
    pub n: usize,
    pub objective: Function,
    pub constraints: Vec<Constraint>,
}

impl ConvexProgram {
    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    /// Largest constraint value (negative when strictly feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints.iter().map(|c| c.f.value(x)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_strictly_feasible(&self, x: &[f64]) -> bool {
        self.constraints.iter().all(|c| c.f.value(x) < 0.0)
    }

    pub fn count(&self, class: ConstraintClass) -> usize {
        self.constraints.iter().filter(|c| c.class == class).count()
    }
}
