use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;
use vlc_ee_cli::config::ExperimentConfig;
use vlc_ee_cli::convergence::run_convergence_study;
use vlc_ee_cli::error::EXIT_SOLVE_FAILED;
use vlc_ee_cli::output::{resolve_out_dir, OUT_DIR_ENV};
use vlc_ee_cli::single::run_single;
use vlc_ee_cli::sweep::run_power_sweep;
use vlc_ee_cli::{CliError, RunContext};
use vlc_secure_ee::SolveStatus;

/// Energy-efficient secure precoding for multi-user VLC: experiments.
#[derive(Parser)]
#[command(name = "vlc-ee", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo realizations per point (overrides the config file).
    #[arg(long, global = true)]
    realizations: Option<usize>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (overrides the env var and the config file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Efficiency traces from zero-forcing and random starts per layout.
    Converge,
    /// Mean efficiency against optical power, one curve per circuitry power.
    Sweep,
    /// One realization, full report as JSON. Exits 1 unless the solve converged.
    Single {
        /// Also dump the first convex subproblem and its barrier trace.
        #[arg(long)]
        dump_subproblem: bool,
    },
    /// Parse and check a config file without running anything.
    ValidateConfig,
}

fn load(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(r) = common.realizations {
        cfg.realizations = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let cfg = load(&cli.common)?;
    if let Some(0) = cli.common.workers {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    let ctx = RunContext::new(resolve_out_dir(cli.common.out.clone(), &cfg), cli.common.workers);
    match cli.command {
        Command::ValidateConfig => {
            println!("config ok: sha256 {}", cfg.hash());
            println!("experiment {:?}, {} realizations, seed {}", cfg.experiment, cfg.realizations, cfg.seed);
            println!("output dir {} (set {OUT_DIR_ENV} or --out to override)", ctx.out_dir.display());
            return Ok(0);
        }
        Command::Converge => {
            let res = run_convergence_study(&cfg, &ctx)?;
            println!("layout,init,converged,failed,mean_iterations_to_band");
            for r in &res.summary {
                println!("{},{:?},{},{},{:.3}", r.layout, r.init, r.converged, r.failed, r.mean_iterations_to_band);
            }
        }
        Command::Sweep => {
            let res = run_power_sweep(&cfg, &ctx)?;
            println!("curve,argmax,peak_mean_EE,interior");
            for p in &res.peaks {
                println!("{},{},{:.6},{}", p.curve, p.argmax, p.peak_mean_ee, p.interior);
            }
        }
        Command::Single { dump_subproblem } => {
            let out = run_single(&cfg, &ctx, dump_subproblem)?;
            let r = &out.report;
            println!(
                "status {:?}, EE {:.6} bits/s/Hz/W, {} outer / {} inner iterations",
                r.status, r.ee_final, r.iterations_outer, r.iterations_inner_total
            );
            if r.status != SolveStatus::Converged {
                return Ok(EXIT_SOLVE_FAILED);
            }
        }
    }
    println!("outputs in {}", ctx.out_dir.display());
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
