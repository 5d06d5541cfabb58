//! Parameter sweep: mean energy efficiency against optical power (or
//! circuitry power), one curve per value of the other variable.

use log::{info, warn};
use serde::{Deserialize, Serialize};
use vlc_secure_ee::{SolveReport, SolveStatus};

use crate::config::{ExperimentConfig, SweepConfig, SweepVariable};
use crate::error::CliError;
use crate::output::{prepare_dir, write_csv, write_jsonl, Provenance};
use crate::stats::{mean, std_dev};
use crate::{solve_realization, RunContext};

pub const SWEEP_CSV: &str = "power_sweep.csv";
pub const PEAKS_CSV: &str = "power_sweep_peaks.csv";
pub const RUNS_JSONL: &str = "power_sweep_runs.jsonl";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRecord {
    pub optical_power_dbm: f64,
    pub dc_circuitry: f64,
    pub realization: u64,
    pub error: Option<String>,
    pub report: Option<SolveReport>,
}

impl SweepRecord {
    pub fn converged(&self) -> Option<&SolveReport> {
        self.report.as_ref().filter(|r| r.status == SolveStatus::Converged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "P_s_dBm")]
    pub optical_power_dbm: f64,
    #[serde(rename = "P_dc_circuitry")]
    pub dc_circuitry: f64,
    #[serde(rename = "mean_EE")]
    pub mean_ee: f64,
    #[serde(rename = "std_EE")]
    pub std_ee: f64,
    pub n_converged: usize,
    pub n_failed: usize,
}

/// Location of the maximum of one mean-efficiency curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakRow {
    /// Value of the variable held fixed along the curve.
    pub curve: f64,
    pub argmax: f64,
    #[serde(rename = "peak_mean_EE")]
    pub peak_mean_ee: f64,
    /// False when the maximum sits at either end of the grid (a monotone run).
    pub interior: bool,
}

#[derive(Debug, Clone)]
pub struct SweepResults {
    pub records: Vec<SweepRecord>,
    pub rows: Vec<SweepRow>,
    pub peaks: Vec<PeakRow>,
}

pub fn sweep_row(dbm: f64, circuitry: f64, records: &[&SweepRecord]) -> SweepRow {
    let ee: Vec<f64> = records.iter().filter_map(|r| r.converged()).map(|r| r.ee_final).collect();
    SweepRow {
        optical_power_dbm: dbm,
        dc_circuitry: circuitry,
        mean_ee: mean(&ee),
        std_ee: std_dev(&ee),
        n_converged: ee.len(),
        n_failed: records.len() - ee.len(),
    }
}

/// Peak of the curve through `points` (swept value, mean efficiency), in sweep order.
pub fn find_peak(curve: f64, points: &[(f64, f64)]) -> PeakRow {
    let (idx, &(argmax, peak)) = points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.1.is_finite())
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .unwrap_or((0, &(f64::NAN, f64::NAN)));
    PeakRow { curve, argmax, peak_mean_ee: peak, interior: idx > 0 && idx + 1 < points.len() }
}

pub fn run_power_sweep(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<SweepResults, CliError> {
    let sweep: SweepConfig = cfg.sweep_or_default();
    let curves = if sweep.curves.is_empty() { vec![cfg.curve_default(sweep.variable)] } else { sweep.curves.clone() };
    let n = cfg.realizations as u64;
    let points: Vec<(f64, f64)> = curves.iter().flat_map(|&c| sweep.values.iter().map(move |&v| (c, v))).collect();
    let tasks: Vec<(f64, f64, u64)> = points
        .iter()
        .flat_map(|&(c, v)| {
            let (dbm, circ) = sweep.point(c, v);
            (0..n).map(move |i| (dbm, circ, i))
        })
        .collect();
    info!("power sweep: {} solves on {} workers", tasks.len(), ctx.workers);
    let init = cfg.scenario.solver.init;
    let records = ctx.map(tasks.len(), |t| {
        let (dbm, circ, index) = tasks[t];
        let scenario = cfg.scenario_for_point(dbm, circ);
        let (report, error) = match solve_realization(&scenario, init, cfg.seed, index) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        SweepRecord { optical_power_dbm: dbm, dc_circuitry: circ, realization: index, error, report }
    })?;

    let mut rows = Vec::new();
    let mut peaks = Vec::new();
    for &c in &curves {
        let mut curve = Vec::new();
        for &v in &sweep.values {
            let (dbm, circ) = sweep.point(c, v);
            let group: Vec<&SweepRecord> =
                records.iter().filter(|r| r.optical_power_dbm == dbm && r.dc_circuitry == circ).collect();
            let row = sweep_row(dbm, circ, &group);
            if row.n_failed > 0 {
                warn!("({dbm} dBm, {circ} W): {} of {} realizations excluded", row.n_failed, group.len());
            }
            curve.push((v, row.mean_ee));
            rows.push(row);
        }
        let peak = find_peak(c, &curve);
        if !peak.interior {
            warn!("curve {c}: maximum at the edge of the grid ({}), the curve is monotone here", peak.argmax);
        }
        info!("curve {c}: peak mean efficiency {:.4} at {}", peak.peak_mean_ee, peak.argmax);
        peaks.push(peak);
    }

    prepare_dir(&ctx.out_dir)?;
    let axis = match sweep.variable {
        SweepVariable::OpticalPowerDbm => "curves are P_dc_circuitry values, argmax is in dBm",
        SweepVariable::DcCircuitry => "curves are P_s_dBm values, argmax is in W",
    };
    let prov = Provenance::new(cfg, "sweep").with_note("mean_EE and std_EE over converged realizations only");
    write_csv(&ctx.out_dir.join(SWEEP_CSV), &prov, &rows)?;
    write_csv(&ctx.out_dir.join(PEAKS_CSV), &Provenance::new(cfg, "sweep").with_note(axis), &peaks)?;
    write_jsonl(&ctx.out_dir.join(RUNS_JSONL), &prov, &records)?;
    Ok(SweepResults { records, rows, peaks })
}
