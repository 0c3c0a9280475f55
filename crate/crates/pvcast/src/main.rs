//! `pvcast` binary: day-ahead photovoltaic power forecasting with
//! drift-aware online fine-tuning. Subcommands wrap `pvcast::cli`; the
//! process exits non-zero exactly when a command reports an error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pvcast::cli::commands::{self, SweepAxis};
use pvcast::cli::config::{resolve, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "pvcast",
    version,
    about = "Day-ahead PV power forecasting with drift-aware online fine-tuning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic historical/stream dataset
    Generate(Common),
    /// Pretrain a model; write its checkpoint and loss trace
    Pretrain(Common),
    /// Replay the stream: adaptive vs frozen forecasts, baselines, drift log
    Replay(Common),
    /// Sweep supplementary-set size or hidden width over four case days
    Sweep {
        #[arg(value_enum)]
        axis: Axis,
        #[command(flatten)]
        common: Common,
    },
    /// Verify analytic gradients against finite differences
    Gradcheck(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    /// Supplementary days per fine-tune set
    #[value(name = "supp_size")]
    SuppSize,
    /// LSTM hidden width, pretraining per point
    #[value(name = "hidden_units")]
    HiddenUnits,
}

impl From<Axis> for SweepAxis {
    fn from(axis: Axis) -> Self {
        match axis {
            Axis::SuppSize => SweepAxis::SuppSize,
            Axis::HiddenUnits => SweepAxis::HiddenUnits,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Config file (flat `key = value` text)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the run seed
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Override the report directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Drift onset in days from the stream start
    #[arg(long, value_name = "DAY")]
    drift_start: Option<usize>,
    /// Drift output multiplier in (0, 1)
    #[arg(long, value_name = "X")]
    drift_bias: Option<f64>,
    /// Sweep worker threads
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
}

impl Common {
    fn config(&self) -> pvcast::Result<RunConfig> {
        let overrides = Overrides {
            seed: self.seed,
            out_dir: self.out.clone(),
            drift_start: self.drift_start,
            drift_bias: self.drift_bias,
            workers: self.workers,
        };
        resolve(self.config.as_deref(), &overrides)
    }
}

fn run() -> pvcast::Result<()> {
    match Cli::parse().command {
        Command::Generate(c) => commands::cmd_generate(&c.config()?),
        Command::Pretrain(c) => commands::cmd_pretrain(&c.config()?),
        Command::Replay(c) => commands::cmd_replay(&c.config()?),
        Command::Sweep { axis, common } => commands::cmd_sweep(&common.config()?, axis.into()),
        Command::Gradcheck(c) => commands::cmd_gradcheck(&c.config()?),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::FAILURE
        }
    }
}
