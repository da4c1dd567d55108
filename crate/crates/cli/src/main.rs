use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use errw_cli::*;

#[derive(Parser)]
#[command(name = "errw", version, about = "Regimes, speed and path identities for ERRW/RWDE on Galton-Watson trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config worker count
    #[arg(long)]
    workers: Option<usize>,
    /// Output file (default stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, workers: self.workers }
    }

    fn required(&self) -> Result<&Path> {
        self.config.as_deref().ok_or_else(|| anyhow::anyhow!("--config is required for this subcommand"))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Regime classification over an (alpha_p, alpha_c) grid, as CSV
    PhaseDiagram(Common),
    /// Replicated ERRW/RWDE runs with empirical speed estimates
    Simulate(Common),
    /// Monte Carlo evaluation of the speed formula
    Speed(Common),
    /// Exact and Monte Carlo checks of the path identities
    Verify(Common),
    /// Transience and positive-speed criteria at one point
    Criteria(Common),
}

fn run(cli: Cli) -> Result<bool> {
    let (text, ok, out) = match &cli.command {
        Command::PhaseDiagram(c) => (cmd_phase_diagram(&load_config(c.required()?)?)?, true, c),
        Command::Simulate(c) => (cmd_simulate(&load_config(c.required()?)?, c.overrides())?, true, c),
        Command::Speed(c) => (cmd_speed(&load_config(c.required()?)?, c.overrides())?, true, c),
        Command::Criteria(c) => (cmd_criteria(&load_config(c.required()?)?)?, true, c),
        Command::Verify(c) => {
            let cfg: VerifyConfig = match &c.config {
                Some(p) => load_config(p)?,
                None => VerifyConfig::default(),
            };
            let report = run_verify(&cfg, c.overrides())?;
            (verify_json(&report)?, report.all_pass, c)
        }
    };
    emit(&text, out.out.as_deref())?;
    Ok(ok)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("errw: verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("errw: {e:#}");
            ExitCode::from(2)
        }
    }
}
