//! Starting points for the design loop.

use log::warn;
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::InitMode;
use crate::convex::barrier::{min_relaxation, BarrierOptions};
use crate::convex::subproblem::{build_subproblem, Expansion, SubproblemSpec};
use crate::error::{Error, Result};
use crate::geometry::ChannelState;
use crate::power::PowerConstants;
use crate::secrecy::{secrecy_rate, Precoder};

/// Fraction of the per-LED amplitude budget used by the zero-forcing start.
pub const ZF_BUDGET_FRACTION: f64 = 0.99;
/// Fraction of the per-LED amplitude budget used by random starts.
pub const RANDOM_BUDGET_FRACTION: f64 = 0.5;
pub const RANDOM_TRIES: usize = 20;
/// Cap on the restoration steps applied to a threshold-infeasible start.
pub const MAX_RESTORATION_STEPS: usize = 100;

/// Right inverse `H (H^T H)^-1` of `H^T`, scaled so every row uses at most
/// 99% of its amplitude budget.
pub fn zero_forcing_init(ch: &ChannelState) -> Result<Precoder> {
    let h = &ch.h;
    if h.nrows() < h.ncols() {
        return Err(Error::DegenerateGeometry(format!("{} LEDs cannot zero-force {} users", h.nrows(), h.ncols())));
    }
    let svd = h.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::DegenerateGeometry(format!(
            "channel matrix is rank deficient (singular values {smin:e} / {smax:e})"
        )));
    }
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let inv = DMatrix::from_diagonal(&svd.singular_values.map(|s| 1.0 / s));
    let w = u * inv * vt;
    Ok(scale_to_budget(w, &ch.amplitude_budget(), ZF_BUDGET_FRACTION))
}

/// Largest uniform scaling with every row L1 norm at most `fraction * budget`.
fn scale_to_budget(w: DMatrix<f64>, budget: &[f64], fraction: f64) -> Precoder {
    let beta = w
        .row_iter()
        .zip(budget)
        .filter_map(|(row, c)| {
            let l1: f64 = row.iter().map(|v| v.abs()).sum();
            (l1 > 0.0).then(|| fraction * c / l1)
        })
        .fold(f64::INFINITY, f64::min);
    Precoder::new(if beta.is_finite() { w * beta } else { w })
}

/// I.i.d. uniform entries in `[-1, 1]`, each row rescaled to `fraction` of its budget.
pub fn random_precoder<R: Rng>(ch: &ChannelState, rng: &mut R, fraction: f64) -> Precoder {
    let budget = ch.amplitude_budget();
    let mut w = DMatrix::from_fn(ch.n_leds(), ch.n_users(), |_, _| rng.gen_range(-1.0..=1.0));
    for (n, c) in budget.iter().enumerate() {
        let l1: f64 = w.row(n).iter().map(|v: &f64| v.abs()).sum();
        if l1 > 0.0 {
            w.row_mut(n).scale_mut(fraction * c / l1);
        }
    }
    Precoder::new(w)
}

/// Whether every user clears its threshold with a strict margin.
pub fn meets_thresholds(w: &Precoder, ch: &ChannelState, lambda: &[f64]) -> bool {
    (0..ch.n_users()).all(|k| secrecy_rate(w, ch, k) > lambda[k])
}

/// Moves a threshold-infeasible precoder into the feasible region.
///
/// Each step linearizes at the current precoder and minimizes the common
/// violation of the (restricted) secrecy constraints, so the true violation
/// decreases monotonically. Returns the iterates after `w0`, or `None` when
/// the violation stalls at a positive value or the step cap is hit.
pub fn restore_feasibility(
    w0: &Precoder,
    ch: &ChannelState,
    pc: &PowerConstants,
    lambda: &[f64],
    opts: &BarrierOptions,
) -> Option<Vec<Precoder>> {
    let mut w = w0.clone();
    let mut steps = Vec::new();
    let mut last = f64::INFINITY;
    for _ in 0..MAX_RESTORATION_STEPS {
        if meets_thresholds(&w, ch, lambda) {
            return Some(steps);
        }
        let spec = SubproblemSpec { mu: 0.0, expansion: Expansion::tight(&w, ch), ch, pc, lambda };
        let sub = build_subproblem(&spec);
        let (x, s) = min_relaxation(&sub.program, &sub.interior_guess(), opts)?;
        w = sub.unpack(&x).w;
        steps.push(w.clone());
        if s >= 0.0 && last - s <= 1e-9 * (1.0 + s.abs()) {
            return None;
        }
        last = s;
    }
    meets_thresholds(&w, ch, lambda).then_some(steps)
}

/// Where the design loop starts, with the path that led there.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialPoint {
    pub mode: InitMode,
    /// First precoder drawn or constructed, before any restoration.
    pub raw: Precoder,
    /// Restoration iterates after `raw`; the last one (or `raw`) is the start.
    pub restoration: Vec<Precoder>,
    /// A random start could not be made feasible and zero-forcing was used.
    pub fell_back_to_zf: bool,
    pub feasible: bool,
}

impl InitialPoint {
    pub fn start(&self) -> &Precoder {
        self.restoration.last().unwrap_or(&self.raw)
    }

    /// `raw` followed by the restoration iterates.
    pub fn path(&self) -> impl Iterator<Item = &Precoder> {
        std::iter::once(&self.raw).chain(&self.restoration)
    }
}

fn from_zero_forcing(
    ch: &ChannelState,
    pc: &PowerConstants,
    lambda: &[f64],
    opts: &BarrierOptions,
    fell_back_to_zf: bool,
) -> Result<InitialPoint> {
    let raw = zero_forcing_init(ch)?;
    if meets_thresholds(&raw, ch, lambda) {
        return Ok(InitialPoint {
            mode: InitMode::ZeroForcing,
            raw,
            restoration: Vec::new(),
            fell_back_to_zf,
            feasible: true,
        });
    }
    // Scaling zero-forcing down only lowers every rate, so no back-off can help.
    let (restoration, feasible) = match restore_feasibility(&raw, ch, pc, lambda, opts) {
        Some(r) => (r, true),
        None => (Vec::new(), false),
    };
    Ok(InitialPoint { mode: InitMode::ZeroForcing, raw, restoration, fell_back_to_zf, feasible })
}

/// Builds the starting point for `mode`.
///
/// Random starts are redrawn up to [`RANDOM_TRIES`] times. If no draw clears
/// the thresholds, the first draw is restored to feasibility, and only if
/// that fails does the start fall back to zero-forcing.
pub fn initial_point<R: Rng>(
    mode: InitMode,
    ch: &ChannelState,
    pc: &PowerConstants,
    lambda: &[f64],
    opts: &BarrierOptions,
    rng: &mut R,
) -> Result<InitialPoint> {
    match mode {
        InitMode::ZeroForcing => from_zero_forcing(ch, pc, lambda, opts, false),
        InitMode::RandomFeasible => {
            let first = random_precoder(ch, rng, RANDOM_BUDGET_FRACTION);
            if meets_thresholds(&first, ch, lambda) {
                return Ok(random_point(first, Vec::new()));
            }
            for _ in 1..RANDOM_TRIES {
                let w = random_precoder(ch, rng, RANDOM_BUDGET_FRACTION);
                if meets_thresholds(&w, ch, lambda) {
                    return Ok(random_point(w, Vec::new()));
                }
            }
            if let Some(restoration) = restore_feasibility(&first, ch, pc, lambda, opts) {
                return Ok(random_point(first, restoration));
            }
            warn!("random start could not be made feasible; using zero-forcing");
            from_zero_forcing(ch, pc, lambda, opts, true)
        }
    }
}

fn random_point(raw: Precoder, restoration: Vec<Precoder>) -> InitialPoint {
    InitialPoint { mode: InitMode::RandomFeasible, raw, restoration, fell_back_to_zf: false, feasible: true }
}
