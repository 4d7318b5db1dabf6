//! `vista` — train / eval / infer / export-cache / gradcheck / bench for
//! the two-stage attention recommender.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure,
//! 4 I/O or corrupt-file failure.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

// Counting allocator so bench can report peak allocation.
#[global_allocator]
static ALLOC: vista_core::alloc_stats::CountingAllocator = vista_core::alloc_stats::CountingAllocator;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numeric(m) | CliError::Io(m) => m,
        }
    }
}

impl From<vista_core::train::TrainError> for CliError {
    fn from(e: vista_core::train::TrainError) -> Self {
        use vista_core::data::DataError;
        use vista_core::train::TrainError;
        match &e {
            TrainError::Model(_) => CliError::Numeric(e.to_string()),
            TrainError::Data(DataError::DegenerateLabels) => CliError::Numeric(e.to_string()),
            TrainError::Data(DataError::Io(_)) | TrainError::Data(DataError::Csv(_)) => {
                CliError::Io(e.to_string())
            }
            TrainError::Data(_) => CliError::Config(e.to_string()),
            TrainError::Delivery(_) => CliError::Io(e.to_string()),
        }
    }
}

impl From<vista_core::model::checkpoint::CheckpointError> for CliError {
    fn from(e: vista_core::model::checkpoint::CheckpointError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<vista_core::delivery::DeliveryError> for CliError {
    fn from(e: vista_core::delivery::DeliveryError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "vista", version, about = "Two-stage attention recommender: quasi-linear summarization, cached summary serving, target attention")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train on the configured data source, publishing quantized summaries
    /// to the export log and writing checkpoint + curve files.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Fixed batch order and timestamp-free outputs (byte-reproducible
        /// from config + seed). This is also the default behavior.
        #[arg(long, default_value_t = true)]
        deterministic: bool,
    },
    /// Evaluate a checkpoint on a data source (synthetic config TOML or CSV).
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Write the JSON report here as well as stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score requests against cached summaries only (no summarization).
    Infer {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        requests: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Fail requests whose cached summary lags the model by more than
        /// this many versions.
        #[arg(long = "strict-staleness")]
        strict_staleness: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize every user with a checkpoint, publish, and snapshot the
    /// resulting cache.
    ExportCache {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference validation of the analytic gradients.
    Gradcheck {
        #[arg(long, default_value = "all", value_parser = ["kernel", "model", "all"])]
        suite: String,
        /// Random instances per (shape, activation) in the kernel sweep.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Test hook: corrupt the named kernel gradient (e.g. "d_ks") to
        /// prove the harness catches it.
        #[arg(long, hide = true)]
        corrupt: Option<String>,
    },
    /// Wall-clock scaling of QLA vs softmax attention, plus cached vs full
    /// pipeline inference latency.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = vec![1024usize, 4096, 16384, 65536])]
        grid: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value = "f64", value_parser = ["f64", "f32"])]
        dtype: String,
        /// Write the CSV here as well as stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Train { config, deterministic } => commands::train::run(&config, deterministic),
        Cmd::Eval { checkpoint, data, out } => commands::eval::run(&checkpoint, &data, out.as_deref()),
        Cmd::Infer { cache, requests, checkpoint, strict_staleness, out } => {
            commands::infer::run(&cache, &requests, &checkpoint, strict_staleness, out.as_deref())
        }
        Cmd::ExportCache { checkpoint, data, out } => {
            commands::export_cache::run(&checkpoint, &data, &out)
        }
        Cmd::Gradcheck { suite, seeds, corrupt } => {
            commands::gradcheck::run(&suite, corrupt.as_deref(), seeds)
        }
        Cmd::Bench { grid, reps, dim, dtype, out } => {
            commands::bench::run(&grid, reps, dim, &dtype, out.as_deref())
        }
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}
