//! `eigenmap-lab`: mesh generation, eigenmap solves, gauge construction,
//! verification suites, and dimension sweeps, with reproducible outputs.
//!
//! Every subcommand writes its dumps plus a `manifest.txt` listing each
//! output file with a SHA-256 content hash; identical config and seed give
//! identical manifests. `EIGENMAP_LAB_THREADS` caps sweep parallelism.

mod config;
mod runner;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "eigenmap-lab", about = "harmonic eigenmap laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the mesh and write its dump.
    Mesh(CommonArgs),
    /// Solve the configured eigenmap problem and dump the fields.
    Solve(CommonArgs),
    /// Solve, build the Uhlenbeck/Riviere/∂̄ gauge objects, dump them.
    Gauge(CommonArgs),
    /// Solve and measure every estimate; writes report.json / report.csv.
    Verify(CommonArgs),
    /// Solve and compute the weighted eigenproblem spectrum.
    Spectrum(CommonArgs),
    /// Dimension-independence sweep over the configured m list.
    Sweep(CommonArgs),
}

#[derive(Parser)]
struct CommonArgs {
    /// Path to the JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, run): (&CommonArgs, runner::Mode) = match &cli.command {
        Command::Mesh(a) => (a, runner::Mode::Mesh),
        Command::Solve(a) => (a, runner::Mode::Solve),
        Command::Gauge(a) => (a, runner::Mode::Gauge),
        Command::Verify(a) => (a, runner::Mode::Verify),
        Command::Spectrum(a) => (a, runner::Mode::Spectrum),
        Command::Sweep(a) => (a, runner::Mode::Sweep),
    };
    let cfg_text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read config {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let cfg: config::ExperimentConfig = match serde_json::from_str(&cfg_text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: invalid config: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = cfg.validate() {
        eprintln!("error: invalid config: {e}");
        return ExitCode::from(2);
    }
    let out_dir = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    match runner::run(run, &cfg, &out_dir) {
        Ok(runner::Outcome::Ok) => ExitCode::SUCCESS,
        Ok(runner::Outcome::NonConverged) => {
            eprintln!("warning: non-convergence; reports written");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
