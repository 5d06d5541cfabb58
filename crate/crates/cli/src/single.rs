//! One scenario, one solve, full report.

use serde::{Deserialize, Serialize};
use vlc_secure_ee::convex::subproblem::{dump_subproblem, Expansion, SubproblemDump, SubproblemSpec};
use vlc_secure_ee::design::seeded_initial_point;
use vlc_secure_ee::geometry::{generate_realization, init_seed};
use vlc_secure_ee::secrecy::energy_efficiency;
use vlc_secure_ee::{ChannelState, SolveReport, SolverOptions};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{prepare_dir, write_json, Provenance};
use crate::RunContext;

pub const REPORT_JSON: &str = "single_report.json";
pub const DUMP_JSON: &str = "subproblem_dump.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleOutput {
    pub provenance: Provenance,
    /// Effective configuration, with `output_dir` cleared.
    pub config: ExperimentConfig,
    pub realization: u64,
    pub init_seed: u64,
    pub lambda: Vec<f64>,
    pub channel: ChannelState,
    pub iterations_to_band: usize,
    pub report: SolveReport,
}

#[derive(Serialize)]
struct DumpFile<'a> {
    provenance: &'a Provenance,
    subproblem: SubproblemDump,
}

/// Solves realization 0 of `cfg.seed`. With `dump`, also writes the first
/// subproblem of the design loop with its barrier trace.
pub fn run_single(cfg: &ExperimentConfig, ctx: &RunContext, dump: bool) -> Result<SingleOutput, CliError> {
    let scenario = &cfg.scenario;
    let ch = generate_realization(scenario, cfg.seed, 0)?;
    let pc = scenario.power_constants();
    let lambda = scenario.thresholds();
    let opts = SolverOptions::from(&scenario.solver);
    let seed = init_seed(cfg.seed, 0);
    let report = vlc_secure_ee::design::dinkelbach_solve_seeded(&ch, &pc, &lambda, &opts, seed)?;
    let prov = Provenance::new(cfg, "single");
    let mut config = cfg.clone();
    config.output_dir = Default::default();
    let out = SingleOutput {
        provenance: prov.clone(),
        config,
        realization: 0,
        init_seed: seed,
        iterations_to_band: report.iterations_to_within(cfg.convergence.band),
        lambda: lambda.clone(),
        channel: ch.clone(),
        report,
    };
    prepare_dir(&ctx.out_dir)?;
    write_json(&ctx.out_dir.join(REPORT_JSON), &out)?;
    if dump {
        let init = seeded_initial_point(&ch, &pc, &lambda, &opts, seed)?;
        let w0 = init.start().clone();
        let mu = opts.mu0.unwrap_or_else(|| energy_efficiency(&w0, &ch, &pc));
        let spec = SubproblemSpec { mu, expansion: Expansion::tight(&w0, &ch), ch: &ch, pc: &pc, lambda: &lambda };
        write_json(&ctx.out_dir.join(DUMP_JSON), &DumpFile { provenance: &prov, subproblem: dump_subproblem(&spec) })?;
    }
    Ok(out)
}
