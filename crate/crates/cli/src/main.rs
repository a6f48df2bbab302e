//! Experiment runner: each subcommand drives one pipeline stage against a
//! JSON experiment description.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure,
//! 3 verification or fit failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fractal_ids::config::ExperimentConfig;
use fractal_ids::pipeline::{
    cmd_fit, cmd_fractal, cmd_ids, cmd_label, cmd_spectrum, cmd_verify, PipelineError, RunContext,
};

#[derive(Parser)]
#[command(
    name = "fractal-ids",
    version,
    about = "Spectra, integrated density of states, and Lifshitz-tail fits for random Schrödinger operators on nested fractals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment description (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured worker-thread count.
    #[arg(long)]
    threads: Option<usize>,
    /// Override the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build and validate the fractal, export window graphs.
    Fractal(Common),
    /// Construct and verify the corner labeling.
    Label(Common),
    /// Compute (or serve from cache) the free subordinated spectra.
    Spectrum(Common),
    /// Run the annealed ensembles and convergence diagnostics.
    Ids(Common),
    /// Fit the low-energy and long-time exponents.
    Fit(Common),
    /// Run the bound-verification suite.
    Verify(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Fractal(c)
            | Command::Label(c)
            | Command::Spectrum(c)
            | Command::Ids(c)
            | Command::Fit(c)
            | Command::Verify(c) => c,
        }
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let common = cli.command.common();
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        config.output_dir = out.display().to_string();
    }
    if let Some(threads) = common.threads {
        config.threads = threads;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let ctx = RunContext::new(config)?;
    eprintln!("output root: {}", ctx.out_root.display());
    match cli.command {
        Command::Fractal(_) => {
            let report = cmd_fractal(&ctx)?;
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
        }
        Command::Label(_) => {
            let report = cmd_label(&ctx)?;
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
        }
        Command::Spectrum(_) => {
            let report = cmd_spectrum(&ctx)?;
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
        }
        Command::Ids(_) => {
            let outcome = cmd_ids(&ctx)?;
            let violations: usize = outcome
                .diagnostics
                .iter()
                .map(|(_, d)| d.monotonicity.violations.len() + d.dn_gap.violations.len())
                .sum();
            println!(
                "{}",
                serde_json::json!({
                    "tau": outcome.scaling.tau,
                    "walk_dim": outcome.scaling.walk_dim,
                    "ensembles": outcome.ensembles.len(),
                    "diagnostic_violations": violations,
                })
            );
        }
        Command::Fit(_) => {
            let outcome = cmd_fit(&ctx)?;
            println!(
                "{}",
                serde_json::json!({
                    "fits": outcome.fits,
                    "nu_scaling": outcome.nu_scaling,
                })
            );
        }
        Command::Verify(_) => {
            let report = cmd_verify(&ctx)?;
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
