//! `mlms`: config-driven experiment runner.
//!
//! Exit codes: 0 success, 1 configuration or runtime error, 2 usage error,
//! 3 `validate` found error-level diagnostics.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use config::Experiment;

#[derive(Parser)]
#[command(name = "mlms", version, about = "Momentum LMS tracking and noise-cancellation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track a jump system with each configured filter; writes MSE-dB curves.
    SynthTrack(RunArgs),
    /// Speech enhancement over recorded or synthetic scenes; writes a ΔSNR table.
    Anc(RunArgs),
    /// ΔSNR of one momentum filter across a grid of β values.
    SweepBeta(RunArgs),
    /// Monte Carlo norms of products of error-transition matrices.
    StabilityProbe(RunArgs),
    /// Check filter settings and print the admissible step-size bound.
    Validate(ConfigArg),
}

#[derive(Args)]
struct ConfigArg {
    /// TOML experiment configuration.
    config: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration.
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

const EXIT_ERROR: u8 = 1;
const EXIT_INVALID: u8 = 3;

fn run(cli: Cli) -> Result<u8> {
    let (expected, path, out_override) = match &cli.command {
        Command::SynthTrack(a) => (Experiment::SynthTrack, &a.config, a.output_dir.clone()),
        Command::Anc(a) => (Experiment::Anc, &a.config, a.output_dir.clone()),
        Command::SweepBeta(a) => (Experiment::SweepBeta, &a.config, a.output_dir.clone()),
        Command::StabilityProbe(a) => (Experiment::StabilityProbe, &a.config, a.output_dir.clone()),
        Command::Validate(a) => (Experiment::Validate, &a.config, None),
    };
    let loaded = config::load(path)?;
    if loaded.config.experiment != expected {
        bail!(
            "{} declares `experiment = \"{}\"`, which belongs to `mlms {}`, not `mlms {expected}`",
            path.display(),
            loaded.config.experiment.key(),
            loaded.config.experiment
        );
    }
    let out_dir = out_override.unwrap_or_else(|| loaded.config.output_dir());
    let summary = match expected {
        Experiment::SynthTrack => commands::synth_track(&loaded, &out_dir)?,
        Experiment::Anc => commands::anc(&loaded, &out_dir)?,
        Experiment::SweepBeta => commands::sweep_beta(&loaded, &out_dir)?,
        Experiment::StabilityProbe => commands::stability_probe(&loaded, &out_dir)?,
        Experiment::Validate => {
            let bad = commands::validate(&loaded, std::io::stdout().lock())?;
            return Ok(if bad { EXIT_INVALID } else { 0 });
        }
    };
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
