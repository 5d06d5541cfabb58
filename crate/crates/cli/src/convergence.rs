//! Convergence study: efficiency traces from zero-forcing and random starts
//! on several LED layouts.

use log::{info, warn};
use serde::{Deserialize, Serialize};
use vlc_secure_ee::{InitMode, SolveReport, SolveStatus};

use crate::config::{ExperimentConfig, LayoutSpec};
use crate::error::CliError;
use crate::output::{prepare_dir, write_csv, write_jsonl, Provenance};
use crate::stats::{mean, quantile};
use crate::{solve_realization, RunContext};

pub const TRACES_CSV: &str = "convergence_traces.csv";
pub const SUMMARY_CSV: &str = "convergence_summary.csv";
pub const RUNS_JSONL: &str = "convergence_runs.jsonl";

const NORMALIZATION_NOTE: &str =
    "normalized_ee = efficiency of each iterate / final efficiency of the same realization; \
     shorter traces are padded with their last value";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceRecord {
    pub layout: String,
    pub init: InitMode,
    pub realization: u64,
    /// Trace index from which every later value stays in the band; `None` unless converged.
    pub iterations_to_band: Option<usize>,
    pub error: Option<String>,
    pub report: Option<SolveReport>,
}

impl ConvergenceRecord {
    pub fn converged(&self) -> Option<&SolveReport> {
        self.report.as_ref().filter(|r| r.status == SolveStatus::Converged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub layout: String,
    pub init: InitMode,
    pub iteration: usize,
    pub mean_normalized_ee: f64,
    pub p10: f64,
    pub p90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub layout: String,
    pub init: InitMode,
    pub realizations: usize,
    pub converged: usize,
    pub failed: usize,
    pub mean_iterations_to_band: f64,
    pub p10_iterations_to_band: f64,
    pub p90_iterations_to_band: f64,
    pub mean_outer_iterations: f64,
    pub mean_inner_iterations: f64,
    pub mean_ee_initial: f64,
    pub mean_ee_final: f64,
    pub zf_fallbacks: usize,
}

#[derive(Debug, Clone)]
pub struct ConvergenceResults {
    pub records: Vec<ConvergenceRecord>,
    pub traces: Vec<TraceRow>,
    pub summary: Vec<SummaryRow>,
}

pub fn normalized_trace(r: &SolveReport) -> Vec<f64> {
    r.ee_trace.iter().map(|v| v / r.ee_final).collect()
}

/// Per-iteration mean and 10/90 percentiles of the normalized traces.
pub fn trace_rows(layout: &str, init: InitMode, reports: &[&SolveReport]) -> Vec<TraceRow> {
    let traces: Vec<Vec<f64>> = reports.iter().map(|r| normalized_trace(r)).collect();
    let len = traces.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let col: Vec<f64> = traces.iter().map(|t| t.get(i).or(t.last()).copied().unwrap_or(f64::NAN)).collect();
            TraceRow {
                layout: layout.into(),
                init,
                iteration: i,
                mean_normalized_ee: mean(&col),
                p10: quantile(&col, 0.1),
                p90: quantile(&col, 0.9),
            }
        })
        .collect()
}

pub fn summary_row(layout: &str, init: InitMode, records: &[&ConvergenceRecord]) -> SummaryRow {
    let ok: Vec<&ConvergenceRecord> = records.iter().copied().filter(|r| r.converged().is_some()).collect();
    let reports: Vec<&SolveReport> = ok.iter().filter_map(|r| r.converged()).collect();
    let counts: Vec<f64> = ok.iter().filter_map(|r| r.iterations_to_band).map(|c| c as f64).collect();
    let avg = |f: &dyn Fn(&SolveReport) -> f64| mean(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
    SummaryRow {
        layout: layout.into(),
        init,
        realizations: records.len(),
        converged: ok.len(),
        failed: records.len() - ok.len(),
        mean_iterations_to_band: mean(&counts),
        p10_iterations_to_band: quantile(&counts, 0.1),
        p90_iterations_to_band: quantile(&counts, 0.9),
        mean_outer_iterations: avg(&|r| r.iterations_outer as f64),
        mean_inner_iterations: avg(&|r| r.iterations_inner_total as f64),
        mean_ee_initial: avg(&|r| r.ee_initial),
        mean_ee_final: avg(&|r| r.ee_final),
        zf_fallbacks: reports.iter().filter(|r| r.init_fell_back_to_zf).count(),
    }
}

pub fn run_convergence_study(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<ConvergenceResults, CliError> {
    let study = &cfg.convergence;
    let n = cfg.realizations;
    let tasks: Vec<(LayoutSpec, InitMode, u64)> = study
        .layouts
        .iter()
        .flat_map(|&l| study.inits.iter().flat_map(move |&m| (0..n as u64).map(move |i| (l, m, i))))
        .collect();
    info!("convergence study: {} solves on {} workers", tasks.len(), ctx.workers);
    let records = ctx.map(tasks.len(), |t| {
        let (layout, init, index) = tasks[t];
        let scenario = cfg.scenario_for_layout(&layout);
        let (report, error) = match solve_realization(&scenario, init, cfg.seed, index) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let mut rec = ConvergenceRecord {
            layout: layout.label(),
            init,
            realization: index,
            iterations_to_band: None,
            error,
            report,
        };
        rec.iterations_to_band = rec.converged().map(|r| r.iterations_to_within(study.band));
        rec
    })?;

    let mut traces = Vec::new();
    let mut summary = Vec::new();
    for layout in &study.layouts {
        let label = layout.label();
        for &init in &study.inits {
            let group: Vec<&ConvergenceRecord> =
                records.iter().filter(|r| r.layout == label && r.init == init).collect();
            let row = summary_row(&label, init, &group);
            if row.failed > 0 {
                warn!(
                    "layout {label} {init:?}: {} of {} realizations excluded (not converged)",
                    row.failed, row.realizations
                );
            }
            info!("layout {label} {init:?}: mean iterations to band {:.2}", row.mean_iterations_to_band);
            let reports: Vec<&SolveReport> = group.iter().filter_map(|r| r.converged()).collect();
            traces.extend(trace_rows(&label, init, &reports));
            summary.push(row);
        }
    }

    prepare_dir(&ctx.out_dir)?;
    let prov = Provenance::new(cfg, "converge").with_note(NORMALIZATION_NOTE);
    write_csv(&ctx.out_dir.join(TRACES_CSV), &prov, &traces)?;
    let prov_summary = Provenance::new(cfg, "converge").with_note(&format!(
        "iterations_to_band: first trace index after which every value stays within {} of the final efficiency",
        study.band
    ));
    write_csv(&ctx.out_dir.join(SUMMARY_CSV), &prov_summary, &summary)?;
    write_jsonl(&ctx.out_dir.join(RUNS_JSONL), &prov, &records)?;
    Ok(ConvergenceResults { records, traces, summary })
}
