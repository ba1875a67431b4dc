mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Globals;
use error::{CliError, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "pitomo", version, about = "Physics-informed tomography surrogates")]
struct Cli {
    /// Subcommand config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a contribution matrix from a grid and chord set.
    GenCmatrix,
    /// Generate a phantom dataset.
    GenPhantom,
    /// Report the back-projection quality of a dataset.
    Assess {
        /// Include the per-sample errors.
        #[arg(long)]
        per_sample: bool,
    },
    /// Train one model.
    Train {
        /// Continue the run from its last saved epoch.
        #[arg(long)]
        resume: bool,
    },
    /// Score checkpoints on a dataset.
    Eval {
        /// Number of per-sample dumps per model.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Forward-project a file of predicted fields.
    Backproject,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    let config = cli.config.ok_or_else(|| CliError::config("--config is required"))?;
    let g = Globals { out: cli.out, seed: cli.seed };
    match cli.command {
        Command::GenCmatrix => commands::gen_cmatrix(&config, &g),
        Command::GenPhantom => commands::gen_phantom(&config, &g),
        Command::Assess { per_sample } => commands::assess(&config, per_sample, &g),
        Command::Train { resume } => commands::train(&config, resume, &g),
        Command::Eval { samples } => commands::eval(&config, samples, &g),
        Command::Backproject => commands::backproject(&config, &g),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
