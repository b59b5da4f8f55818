//! `egcn`: train, cross-validate, ablate and inspect evolving graph
//! convolutional networks.
//!
//! Exit codes: 0 success, 1 usage, 2 data, 3 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use egcn_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e {
                Error::Parameter { .. } => 1,
                Error::Numerical { .. } | Error::NoConvergence { .. } | Error::Divergence { .. } | Error::Shape { .. } => 3,
                Error::Data { .. }
                | Error::Io { .. }
                | Error::Structural(_)
                | Error::Capacity { .. }
                | Error::EmptyBatch
                | Error::NoSupervisedSignal => 2,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "egcn", version, about = "Evolving graph convolutional networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON file with TrainConfig fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for every artifact of the run.
    #[arg(long, default_value = "egcn-out")]
    out_dir: PathBuf,
    /// Dotted overrides applied after the config file, e.g. `lr=0.01`
    /// or `architecture.0.out_features=16`.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model and write curves, metrics and parameters.
    Train {
        /// Dataset manifest.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// k-fold cross-validation; writes results.csv.
    Cv {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Paired evolving vs frozen-metric runs; writes ablation.csv.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        /// Number of seeds, counting up from the configured seed.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train and dump the learned similarity matrix of one sample.
    InspectLaplacian {
        #[arg(long)]
        data: PathBuf,
        /// Sample id (default: the first sample).
        #[arg(long)]
        sample: Option<String>,
        /// Index among the sgc_ll layers.
        #[arg(long, default_value_t = 0)]
        layer: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,5,10,15,20")]
        epochs: Vec<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Lint a dataset without training.
    ValidateData {
        #[arg(long)]
        data: PathBuf,
    },
    /// Write a hidden-metric synthetic regression dataset.
    SynthData {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 600)]
        samples: usize,
        #[arg(long, default_value_t = 6)]
        min_nodes: usize,
        #[arg(long, default_value_t = 14)]
        max_nodes: usize,
        #[arg(long, default_value_t = 4)]
        dim: usize,
        #[arg(long, default_value_t = 11)]
        seed: u64,
    },
}

fn configure_threads() -> Result<(), CliError> {
    match std::env::var("EGCN_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::Usage(format!("EGCN_THREADS must be a positive integer, got `{v}`")))?;
            egcn_core::parallel::init_thread_pool(n);
            Ok(())
        }
        Err(_) => Ok(()),
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    configure_threads()?;
    use commands::Run;
    match &cli.command {
        Command::Train { data, run } => commands::train_cmd(&Run { verb: "train", args: run, data })?,
        Command::Cv { data, run } => commands::cv_cmd(&Run { verb: "cv", args: run, data })?,
        Command::Ablate { data, seeds, run } => commands::ablate_cmd(&Run { verb: "ablate", args: run, data }, *seeds)?,
        Command::InspectLaplacian {
            data,
            sample,
            layer,
            epochs,
            run,
        } => commands::inspect_cmd(
            &Run {
                verb: "inspect-laplacian",
                args: run,
                data,
            },
            sample.as_deref(),
            *layer,
            epochs,
        )?,
        Command::ValidateData { data } => {
            if !commands::validate_cmd(data)? {
                return Ok(ExitCode::from(2));
            }
        }
        Command::SynthData {
            out_dir,
            samples,
            min_nodes,
            max_nodes,
            dim,
            seed,
        } => commands::synth_cmd(
            out_dir,
            &commands::SynthArgs {
                samples: *samples,
                min_nodes: *min_nodes,
                max_nodes: *max_nodes,
                dim: *dim,
                seed: *seed,
            },
        )?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("egcn: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
