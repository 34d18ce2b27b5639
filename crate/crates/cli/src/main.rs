//! `strata`: reproducible heterogeneity experiments from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// CLI-level error with a process exit code attached.
///
/// Exit codes: 0 success, 1 usage or configuration, 2 verification failure,
/// 3 data-format error.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Verification(String),
    DataFormat(String),
    Core(strata_core::Error),
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    pub fn verification(message: impl Into<String>) -> Self {
        CliError::Verification(message.into())
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Verification(m) | CliError::DataFormat(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Verification(_) => 2,
            CliError::DataFormat(_) => 3,
            CliError::Core(_) => 1,
        }
    }
}

impl From<strata_core::Error> for CliError {
    fn from(e: strata_core::Error) -> Self {
        use strata_core::Error::*;
        match &e {
            IdxMagic { .. } | IdxTruncated { .. } | Parse { .. } | Csv(_)
            | InsufficientClass { .. } => CliError::DataFormat(e.to_string()),
            _ => CliError::Core(e),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "strata",
    about = "Training-data heterogeneity: pairwise influence statistics, \
             purification, and verification experiments",
    version
)]
struct Cli {
    /// Path to a TOML experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. --set train.ridge=0.01 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Output directory; overrides output.dir from the config.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Worker thread cap; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic mixture dataset and write it as CSV.
    Generate,
    /// Train once and report loss and accuracies.
    Train,
    /// Train, then emit the influence matrix and its moments.
    Influence,
    /// Sweep mixture compositions; emit per-replicate and aggregate CSVs.
    Sweep,
    /// Sweep label-error rates; emit per-replicate and aggregate CSVs.
    ErrorRateSweep,
    /// Run iterative purification and emit the trace CSV.
    Purify,
    /// Verify the influence identities and drop theorems against frozen
    /// tolerances; exits 2 on any violation.
    Verify,
    /// Convert an IDX image/label pair into the CSV dataset format.
    Convert {
        /// IDX image file (plain or gzip).
        #[arg(long)]
        images: PathBuf,
        /// IDX label file (plain or gzip).
        #[arg(long)]
        labels: PathBuf,
        /// Source labels to keep, re-indexed in the given order.
        #[arg(long, value_delimiter = ',', default_values_t = vec![4usize, 8])]
        classes: Vec<usize>,
        /// Points drawn per class.
        #[arg(long, default_value_t = 375)]
        per_class: usize,
        /// Sampling seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Train => "train",
            Command::Influence => "influence",
            Command::Sweep => "sweep",
            Command::ErrorRateSweep => "error-rate-sweep",
            Command::Purify => "purify",
            Command::Verify => "verify",
            Command::Convert { .. } => "convert",
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot configure thread pool: {e}")))?;
    }

    let cfg = config::load(cli.config.as_deref(), &cli.overrides)?;
    let out_dir = cli.out_dir.clone().unwrap_or_else(|| cfg.output.dir.clone());
    config::write_resolved(&cfg, &out_dir, cli.command.name())?;

    match &cli.command {
        Command::Generate => commands::cmd_generate(&cfg, &out_dir),
        Command::Train => commands::cmd_train(&cfg, &out_dir),
        Command::Influence => commands::cmd_influence(&cfg, &out_dir),
        Command::Sweep => commands::cmd_sweep(&cfg, &out_dir),
        Command::ErrorRateSweep => commands::cmd_error_rate_sweep(&cfg, &out_dir),
        Command::Purify => commands::cmd_purify(&cfg, &out_dir),
        Command::Verify => commands::cmd_verify(&out_dir),
        Command::Convert {
            images,
            labels,
            classes,
            per_class,
            seed,
            out,
        } => commands::cmd_convert(images, labels, classes, *per_class, *seed, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
