mod artifact;
mod cache;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ilbk",
    version,
    about = "Collision-operator toolkit for a test particle in a thermal background"
)]
struct Cli {
    /// JSON configuration file; built-in defaults apply when omitted
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. --set grid.nr=128 (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Output directory; falls back to the config `out` field, then $ILBK_OUT, then ./out
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Random seed override
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for the independent-scan loops
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the microscopic identity suite (needs no calibration)
    Validate,
    /// Resolve the normalization constants against the defining integrals
    Calibrate,
    /// Tabulate the collision frequency with its analytic sandwich bounds
    Sigma,
    /// Scan kernel moment products and tail masses
    Kernel,
    /// Compute the radial spectrum, gap, and coercivity certificate
    Spectrum,
    /// Relax an initial state and trace mass, distance, and entropies
    Evolve,
    /// Split-step slab transport demonstration
    TransportDemo,
    /// Aggregate all artifact checks in the output directory into one verdict
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) if outcome.pass => ExitCode::SUCCESS,
        Ok(outcome) => {
            eprintln!("FAILED: {}", outcome.first_failure.unwrap_or_default());
            ExitCode::from(1)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<commands::Outcome> {
    let cfg = config::resolve(cli.config.as_deref(), &cli.set, cli.seed)?;
    let out = config::resolve_out_dir(cli.out.as_deref(), &cfg);
    std::fs::create_dir_all(&out)?;
    let hash = cfg.hash();
    let env =
        commands::Env { cfg: &cfg, out: &out, threads: cli.threads.max(1), hash: hash.clone() };

    // echo the effective configuration so every run is reconstructible
    artifact::write_json(
        &out.join("effective_config.json"),
        &serde_json::json!({ "config_hash": hash, "config": cfg }),
    )?;

    match cli.command {
        Command::Validate => commands::timed("validate", || commands::cmd_validate(&env)),
        Command::Calibrate => commands::timed("calibrate", || commands::cmd_calibrate(&env)),
        Command::Sigma => commands::timed("sigma", || commands::cmd_sigma(&env)),
        Command::Kernel => commands::timed("kernel", || commands::cmd_kernel(&env)),
        Command::Spectrum => commands::timed("spectrum", || commands::cmd_spectrum(&env)),
        Command::Evolve => commands::timed("evolve", || commands::cmd_evolve(&env)),
        Command::TransportDemo => {
            commands::timed("transport-demo", || commands::cmd_transport(&env))
        }
        Command::Report => commands::timed("report", || commands::cmd_report(&env)),
    }
}
