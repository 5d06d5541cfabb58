//! Secrecy-rate lower bound, secrecy sum-rate and energy efficiency.
//!
//! All logarithms are taken as `ln_1p(x) / (2 ln 2)`, i.e. half a binary log,
//! computed from the natural log once.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::geometry::ChannelState;
use crate::power::{total_power, PowerConstants};

/// Precoding matrix `W` (`N_T x K`, amperes per unit symbol). Column `k` serves user `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct Precoder(DMatrix<f64>);

impl Precoder {
    pub fn new(w: DMatrix<f64>) -> Self {
        Self(w)
    }

    pub fn zeros(n_leds: usize, n_users: usize) -> Self {
        Self(DMatrix::zeros(n_leds, n_users))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn n_leds(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.0.ncols()
    }

    /// `Tr(W W^T)`.
    pub fn frobenius_sq(&self) -> f64 {
        self.0.norm_squared()
    }

    /// Largest row violation of `sum_k |w_nk| <= budget[n]` (negative when strictly feasible).
    pub fn amplitude_residual(&self, budget: &[f64]) -> f64 {
        self.0
            .row_iter()
            .zip(budget)
            .map(|(row, c)| row.iter().map(|v| v.abs()).sum::<f64>() - c)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_amplitude_feasible(&self, budget: &[f64], tol: f64) -> bool {
        self.amplitude_residual(budget) <= tol
    }

    /// Relative Frobenius change `||self - prev|| / ||self||`.
    pub fn relative_change(&self, prev: &Precoder) -> f64 {
        let n = self.0.norm();
        if n == 0.0 {
            return if prev.0.norm() == 0.0 { 0.0 } else { f64::INFINITY };
        }
        (&self.0 - &prev.0).norm() / n
    }
}

impl From<Precoder> for Vec<Vec<f64>> {
    fn from(p: Precoder) -> Self {
        p.0.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Precoder {
    type Error = String;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, String> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err("ragged precoder matrix".into());
        }
        Ok(Self(DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j])))
    }
}

/// The six slack quantities of one user evaluated with equality at `W`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlackValues {
    pub r1: f64,
    pub p1: f64,
    pub r2: f64,
    pub p2: f64,
    pub r3: f64,
    pub p3: f64,
}

impl SlackValues {
    pub fn secrecy(&self) -> f64 {
        self.r1 - self.r2 - self.r3
    }
}

/// `½ log2(1 + p)`.
#[inline]
pub fn half_log2_1p(p: f64) -> f64 {
    p.ln_1p() / (2.0 * LN_2)
}

/// Effective gains `G[k][i] = h_k^T w_i`.
pub fn effective_gains(w: &Precoder, ch: &ChannelState) -> DMatrix<f64> {
    ch.h.transpose() * w.matrix()
}

pub fn slack_values(w: &Precoder, ch: &ChannelState) -> Vec<SlackValues> {
    let g = effective_gains(w, ch);
    let k_users = ch.n_users();
    (0..k_users)
        .map(|k| {
            let mut signal = 0.0;
            let mut interference = 0.0;
            let mut leakage = 0.0;
            for i in 0..k_users {
                let s = g[(k, i)] * g[(k, i)];
                signal += s;
                if i != k {
                    interference += s;
                    leakage += ch.b[i] * g[(i, k)] * g[(i, k)];
                }
            }
            let p1 = ch.a[k] * signal;
            let p2 = ch.b[k] * interference;
            let p3 = leakage;
            SlackValues { r1: half_log2_1p(p1), p1, r2: half_log2_1p(p2), p2, r3: half_log2_1p(p3), p3 }
        })
        .collect()
}

/// Lower bound on user `k`'s confidential rate, bits/s/Hz. Not clamped at zero.
pub fn secrecy_rate(w: &Precoder, ch: &ChannelState, k: usize) -> f64 {
    assert!(k < ch.n_users(), "user index {k} out of range");
    slack_values(w, ch)[k].secrecy()
}

pub fn secrecy_sum_rate(w: &Precoder, ch: &ChannelState) -> f64 {
    slack_values(w, ch).iter().map(SlackValues::secrecy).sum()
}

/// Secrecy sum-rate per watt of total consumption.
pub fn energy_efficiency(w: &Precoder, ch: &ChannelState, pc: &PowerConstants) -> f64 {
    secrecy_sum_rate(w, ch) / total_power(w, &ch.i_dc, pc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecrecyEvaluation {
    pub per_user_rate: Vec<f64>,
    pub sum_rate: f64,
    pub energy_efficiency: f64,
    /// `(r1, r2, r3)` per user.
    pub term_breakdown: Vec<[f64; 3]>,
}

pub fn evaluate(w: &Precoder, ch: &ChannelState, pc: &PowerConstants) -> SecrecyEvaluation {
    let slacks = slack_values(w, ch);
    let per_user_rate: Vec<f64> = slacks.iter().map(SlackValues::secrecy).collect();
    let sum_rate = per_user_rate.iter().sum::<f64>();
    SecrecyEvaluation {
        energy_efficiency: sum_rate / total_power(w, &ch.i_dc, pc),
        per_user_rate,
        sum_rate,
        term_breakdown: slacks.iter().map(|s| [s.r1, s.r2, s.r3]).collect(),
    }
}
