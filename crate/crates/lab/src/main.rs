//! fracperim: fractional multiphase perimeter experiments on grids.
//!
//! Subcommands mirror the experiment kinds; `verify` replays a manifest.
//! Exit codes: 0 success, 2 configuration error, 1 anything else
//! (including verification that found deviations).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracperim_lab::config::{load_config, ExperimentKind};
use fracperim_lab::run::run_to_dir;
use fracperim_lab::verify::verify;
use fracperim_lab::LabError;

/// Environment variable holding the default worker thread cap.
const THREADS_ENV: &str = "FRACPERIM_THREADS";

#[derive(Parser)]
#[command(name = "fracperim", version, about = "Fractional multiphase perimeter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the [output] dir from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker thread cap; FRACPERIM_THREADS sets the default.
    #[arg(long)]
    threads: Option<usize>,
    /// Random seed; overrides the [minimize] seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Manifest written by a previous run.
    #[arg(long)]
    manifest: PathBuf,
    /// Worker thread cap; FRACPERIM_THREADS sets the default.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Metric closure of a surface-tension matrix.
    Relax(RunArgs),
    /// Multiphase energy of one partition.
    Energy(RunArgs),
    /// Scaled-energy scan over exponents and resolutions.
    GammaScan(RunArgs),
    /// Max-flow/min-cut two-chamber replacement.
    MincutReplace(RunArgs),
    /// Local energy minimization from a start partition.
    Minimize(RunArgs),
    /// Wetting runs under triangle-violating tensions.
    Wetting(RunArgs),
    /// Relaxed-interface energy estimate for a chamber pair.
    GammaBar(RunArgs),
    /// Re-run a manifest and report per-column deviations.
    Verify(VerifyArgs),
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, LabError> {
    let (kind, args) = match &cli.command {
        Command::Relax(a) => (ExperimentKind::Relax, a),
        Command::Energy(a) => (ExperimentKind::Energy, a),
        Command::GammaScan(a) => (ExperimentKind::GammaScan, a),
        Command::MincutReplace(a) => (ExperimentKind::MincutReplace, a),
        Command::Minimize(a) => (ExperimentKind::Minimize, a),
        Command::Wetting(a) => (ExperimentKind::Wetting, a),
        Command::GammaBar(a) => (ExperimentKind::GammaBar, a),
        Command::Verify(args) => {
            init_threads(args.threads)?;
            let report = verify(&args.manifest)?;
            print!("{}", report.render());
            return Ok(if report.zero_deviation() { ExitCode::SUCCESS } else { ExitCode::from(1) });
        }
    };
    init_threads(args.threads)?;
    let resolved = load_config(&args.config, args.seed)?;
    if resolved.config.kind != kind {
        return Err(LabError::Config(format!(
            "config kind '{}' does not match subcommand '{}'",
            resolved.config.kind, kind
        )));
    }
    let out_dir = args.out.clone().or(resolved.out_dir).ok_or_else(|| {
        LabError::Config("no output directory: pass --out or set [output] dir".into())
    })?;
    let names = run_to_dir(&resolved.config, &out_dir)?;
    for name in &names {
        println!("wrote {}", out_dir.join(name).display());
    }
    Ok(ExitCode::SUCCESS)
}

fn init_threads(flag: Option<usize>) -> Result<(), LabError> {
    let count = match flag {
        Some(k) => Some(k),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| {
                LabError::Config(format!("{THREADS_ENV}: expected a positive integer, got '{v}'"))
            })?),
            Err(std::env::VarError::NotPresent) => None,
            Err(std::env::VarError::NotUnicode(_)) => {
                return Err(LabError::Config(format!("{THREADS_ENV} is not valid unicode")));
            }
        },
    };
    if let Some(count) = count {
        if count == 0 {
            return Err(LabError::Config("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(count)
            .build_global()
            .map_err(|e| LabError::Io(format!("thread pool: {e}")))?;
    }
    Ok(())
}
