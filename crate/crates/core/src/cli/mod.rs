//! Command-line front end: `train`, `eval`, `ablate`, `inspect`, `synth`.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_ablate, cmd_eval, cmd_inspect, cmd_synth, cmd_train, AblationRow};
pub use config::{DataConfig, DatasetSpec, RunConfig};

use crate::arch::Variant;
use crate::error::Error;
use crate::tensor::Precision;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Exit code an error maps to.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Usage(_)
        | Error::Label(_)
        | Error::Pairing { .. }
        | Error::UnknownColor { .. }
        | Error::Checkpoint(_)
        | Error::Empty(_) => EXIT_USAGE,
        Error::Dimension { .. }
        | Error::DegenerateStatistics { .. }
        | Error::Diverged { .. }
        | Error::Image(_)
        | Error::Io(_) => EXIT_RUNTIME,
    }
}

#[derive(Debug, Parser)]
#[command(name = "fanet", version, about = "Fastidious-attention segmentation networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags that override fields of the config document.
#[derive(Clone, Debug, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr0: Option<f64>,
    #[arg(long)]
    pub precision: Option<String>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> crate::Result<()> {
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(v) = &self.variant {
            cfg.architecture.variant = v.parse::<Variant>()?;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(m) = self.max_steps {
            cfg.train.max_steps = Some(m);
        }
        if let Some(b) = self.batch_size {
            cfg.train.batch_size = b;
        }
        if let Some(l) = self.lr0 {
            cfg.train.lr0 = l;
        }
        if let Some(p) = &self.precision {
            cfg.train.precision = match p.to_ascii_lowercase().as_str() {
                "single" | "f32" => Precision::Single,
                "double" | "f64" => Precision::Double,
                other => return Err(Error::Config(format!("unknown precision {other:?} (single or double)"))),
            };
        }
        cfg.train.seed = cfg.seed;
        cfg.validate()
    }
}

/// Evaluation data: the config's validation (else training) set, a VOC
/// directory pair, or a synthetic set.
#[derive(Clone, Debug, Default, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, requires = "masks")]
    pub images: Option<PathBuf>,
    #[arg(long, requires = "images")]
    pub masks: Option<PathBuf>,
    /// Number of synthetic samples to generate instead.
    #[arg(long)]
    pub synthetic: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub synthetic_seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model from a config document.
    Train {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate a checkpoint; prints the metrics row and writes P/R/F1 CSVs.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        batch_size: usize,
    },
    /// Train all five variants under one seed and report them side by side.
    Ablate {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Attention-parameter statistics and excitation maps of a checkpoint.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Site for excitation maps, e.g. `FSAM4_64` or `fsam4`; all sites
        /// when absent.
        #[arg(long)]
        module: Option<String>,
        /// Channels to export, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [0usize, 1, 2, 3])]
        channels: Vec<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Write a synthetic dataset in VOC layout (`images/`, `masks/`).
    Synth {
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 64)]
        count: usize,
        #[arg(long, default_value_t = 96)]
        size: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Train { config, overrides } => cmd_train(&config, &overrides).map(|_| ()),
        Command::Eval { checkpoint, data, output_dir, batch_size } => {
            cmd_eval(&checkpoint, &data, output_dir.as_deref(), batch_size).map(|_| ())
        }
        Command::Ablate { config, overrides } => cmd_ablate(&config, &overrides).map(|_| ()),
        Command::Inspect { checkpoint, data, module, channels, output_dir } => {
            cmd_inspect(&checkpoint, &data, module.as_deref(), &channels, output_dir.as_deref())
        }
        Command::Synth { output_dir, count, size, seed } => cmd_synth(&output_dir, count, size, seed),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
