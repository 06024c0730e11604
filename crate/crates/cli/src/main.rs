use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use drt_cli::commands::{self, read_config, Context};
use drt_cli::config::{parse_run_config, CertifyRun, ConditionsRun, EvalRun, SimulateRun, TrainRun};
use drt_cli::Result;

/// Certified robustness for classifier ensembles.
#[derive(Debug, Parser)]
#[command(name = "drt", version)]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "DRT_OUT", default_value = "out")]
    out: PathBuf,

    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train ensemble members and write checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Randomized-smoothing certification of a trained ensemble.
    Certify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate the gradient/margin robustness conditions on test inputs.
    Conditions {
        #[arg(long)]
        config: PathBuf,
    },
    /// Statistical bound simulations.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Certified-accuracy curve from a records CSV.
    Eval {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run any command from a configuration with a `command` field.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

fn context(cli: &Cli, config: &Path) -> Context {
    let base = config
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    Context {
        base,
        out: cli.out.clone(),
        seed: cli.seed,
        jobs: cli.jobs,
    }
}

fn dispatch(cli: &Cli) -> Result<Vec<PathBuf>> {
    match &cli.command {
        Command::Train { config } => commands::run_train(read_config::<TrainRun>(config)?, &context(cli, config)),
        Command::Certify { config } => commands::run_certify(read_config::<CertifyRun>(config)?, &context(cli, config)),
        Command::Conditions { config } => {
            commands::run_conditions(read_config::<ConditionsRun>(config)?, &context(cli, config))
        }
        Command::Simulate { config } => {
            commands::run_simulate(read_config::<SimulateRun>(config)?, &context(cli, config))
        }
        Command::Eval { config } => commands::run_eval(read_config::<EvalRun>(config)?, &context(cli, config)),
        Command::Run { config } => {
            let bytes = std::fs::read(config).map_err(|e| drt_cli::CliError::Io {
                path: config.display().to_string(),
                source: e,
            })?;
            commands::run(parse_run_config(&bytes)?, &context(cli, config))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
