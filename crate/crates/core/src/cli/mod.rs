//! Command-line entry point: corpus generation, task-model and codec
//! training, SNR/delay sweeps, the link-budget table and gradient-check
//! reports. Every command reads an optional JSON [`RunConfig`], applies flag
//! overrides and writes CSV/JSON artifacts under the output directory.

mod commands;
mod config;
mod gradcheck;
mod sweep;
mod table1;

pub use commands::{
    cmd_finetune, cmd_gen_data, cmd_gradcheck, cmd_pretrain, cmd_sweep, cmd_table1, cmd_train_task,
    load_codec, load_task_model, Table1Overrides, CODEC_STEM, DISC_STEM, TASK_STEM,
};
pub use config::{DatasetConfig, RunConfig, SweepConfig, DESK_BUDGET_SHARE, SCHEMA_VERSION};
pub use gradcheck::{run_gradcheck, BlockReport, GradcheckReport, BLOCKS, FAULT_SCALE, GRADCHECK_TOLERANCE};
pub use sweep::{run_sweep, write_sweep, DecisionLine, SweepRow, SWEEP_COLUMNS};
pub use table1::{matches_printed, table1, write_table1, Table1Row, REFERENCE_L_MAX_E5};

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::acc::AccError;
use crate::dataset::DatasetError;
use crate::gjscc::GjsccError;
use crate::losses::LossError;
use crate::numerics::NumericsError;
use crate::training::TrainError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}

runtime_from!(std::io::Error, csv::Error, serde_json::Error, NumericsError, GjsccError, LossError, AccError);

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => CliError::Validation(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Config(_) | DatasetError::AccuracyNotReached { .. } => CliError::Validation(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tascom", version, about = "Task-oriented semantic communication simulator")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for every artifact.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the labeled synthetic corpus.
    GenData,
    /// Train the frozen downstream classifier.
    TrainTask,
    /// Stage I: random-mask pre-training of the codec.
    Pretrain {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Stage II: fine-tuning with the controller in the loop.
    Finetune {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a trained codec over the SNR × delay grid.
    Sweep {
        /// Codec checkpoint stem; defaults to the stage II codec.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Cap on test images per cell.
        #[arg(long)]
        max_images: Option<usize>,
        /// Also write every controller decision as JSON lines.
        #[arg(long)]
        decisions: bool,
    },
    /// Link budget L_max versus SNR under the reference link.
    Table1 {
        /// Delay budget D in seconds.
        #[arg(long)]
        delay: Option<f64>,
        /// Bits per constellation symbol.
        #[arg(long)]
        q_mod: Option<f64>,
        /// Bandwidth B in Hz.
        #[arg(long)]
        bandwidth: Option<f64>,
    },
    /// Analytic versus finite-difference gradients of every block.
    Gradcheck {
        /// Number of consecutive seeds, starting at --seed.
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        /// Scale one block's analytic gradient to exercise the failure path.
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
}

/// Effective configuration: file (or defaults), then flag overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    match &cli.command {
        Command::Pretrain { epochs: Some(n) } => cfg.pretrain.epochs = *n,
        Command::Finetune { epochs: Some(n) } => cfg.finetune.epochs = *n,
        Command::Sweep { max_images: Some(n), .. } => cfg.sweep.max_images = Some(*n),
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::GenData => cmd_gen_data(&cfg).map(|_| ()),
        Command::TrainTask => cmd_train_task(&cfg).map(|_| ()),
        Command::Pretrain { .. } => cmd_pretrain(&cfg).map(|_| ()),
        Command::Finetune { .. } => cmd_finetune(&cfg).map(|_| ()),
        Command::Sweep { checkpoint, decisions, .. } => cmd_sweep(&cfg, checkpoint.as_deref(), *decisions).map(|_| ()),
        Command::Table1 { delay, q_mod, bandwidth } => {
            let overrides = Table1Overrides {
                delay_s: *delay,
                constellation_bits: *q_mod,
                bandwidth_hz: *bandwidth,
            };
            cmd_table1(&cfg, overrides).map(|_| ())
        }
        Command::Gradcheck { seeds, inject_fault } => {
            let report = cmd_gradcheck(&cfg, *seeds, inject_fault.as_deref())?;
            if report.passed {
                Ok(())
            } else {
                Err(CliError::Validation(format!(
                    "gradient check failed for {}",
                    report.failing_blocks().join(", ")
                )))
            }
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Messages go to stdout/stderr as for the binary.
pub fn run_from<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("tascom: {e}");
            e.exit_code()
        }
    }
}

/// Entry point of the `tascom` binary.
pub fn run() -> ExitCode {
    ExitCode::from(run_from(std::env::args_os()))
}
