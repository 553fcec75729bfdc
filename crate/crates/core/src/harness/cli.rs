//! Command-line entry point.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 when a
//! run fails.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::compare::run_compare;
use super::config::RunConfig;
use super::output::emit_csv;
use super::sweep::run_sweep;
use super::{run_experiment, updates_to_target};
use crate::error::Error;

#[derive(Debug, Parser)]
#[command(
    name = "fedbuff",
    version,
    about = "Buffered asynchronous federated learning simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the run seed (`sim.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for CSV outputs.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for sweeps and comparisons.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Override `sim.budget_updates`.
    #[arg(long, global = true)]
    budget_updates: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one configuration.
    Run { config: PathBuf },
    /// Run the configured grid or random sweep.
    Sweep { config: PathBuf },
    /// Run all strategies under the same federation and timing model.
    Compare { config: PathBuf },
    /// Parse and check a configuration without running it.
    Validate { config: PathBuf },
}

impl Command {
    fn config(&self) -> &Path {
        match self {
            Command::Run { config }
            | Command::Sweep { config }
            | Command::Compare { config }
            | Command::Validate { config } => config,
        }
    }
}

pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                1
            } else {
                2
            }
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::from_file(cli.command.config())?;
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    if let Some(b) = cli.budget_updates {
        cfg.sim.budget_updates = b;
    }
    if let Some(p) = cli.parallelism {
        cfg.sweep.parallelism = p;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let cfg = load(cli)?;
    match &cli.command {
        Command::Validate { config } => {
            println!("{}: ok", config.display());
        }
        Command::Run { .. } => {
            let path = match &cli.out_dir {
                Some(dir) => dir.join(cfg.output.file_name().unwrap_or("run.csv".as_ref())),
                None => cfg.output.clone(),
            };
            let log = run_experiment(&cfg)?;
            emit_csv(&log, &path)?;
            let last = log.last_row().copied();
            println!(
                "{} {}: outcome={} updates_to_target={} final_accuracy={:.4} -> {}",
                cfg.strategy.kind,
                cfg.sim.duration.kind,
                log.outcome.name(),
                updates_to_target(&log, cfg.target_accuracy).render(cfg.sim.budget_updates),
                last.map_or(f64::NAN, |r| r.accuracy),
                path.display()
            );
        }
        Command::Sweep { .. } => {
            let dir = out_dir(cli);
            let report = run_sweep(&cfg, Some(&dir), cfg.sweep.parallelism)?;
            print!("{}", report.render(cfg.sim.budget_updates));
        }
        Command::Compare { .. } => {
            let dir = out_dir(cli);
            let report = run_compare(&cfg, &dir, cfg.sweep.parallelism)?;
            print!("{}", report.render());
        }
    }
    Ok(())
}
