//! `iseg`: data generation, ingestion, training, evaluation, the ablation
//! grid, debug map export and the HTTP service.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod run;

#[derive(Parser)]
#[command(name = "iseg", version, about = "Click-guided interactive segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options every subcommand takes.
#[derive(Args, Clone)]
pub struct Common {
    /// TOML run configuration; missing keys take defaults.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Seed for data generation, training and evaluation.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to a fresh directory under `run_root`.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// Disable data parallelism.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Args, Clone)]
pub struct DataArgs {
    /// Dataset manifest; overrides `data.manifest`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset manifest.
    GenerateData {
        #[command(flatten)]
        common: Common,
    },
    /// Build a manifest from NIfTI volumes.
    Ingest {
        #[command(flatten)]
        common: Common,
        /// `image.nii.gz` or `image.nii.gz,label.nii.gz`; adds to `ingest.volumes`.
        #[arg(long = "volume")]
        volumes: Vec<String>,
        /// Label value of the organ to segment, for `--volume` entries.
        #[arg(long, default_value_t = 1)]
        roi_label: i64,
    },
    /// Train one configuration and evaluate it on the test split.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Skip the evaluation after training.
        #[arg(long)]
        no_eval: bool,
    },
    /// Evaluate a checkpoint at the configured interaction budgets.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and evaluate the nine-row ablation grid.
    Grid {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated experiment numbers; overrides `grid.experiments`.
        #[arg(long, value_delimiter = ',')]
        experiments: Vec<usize>,
    },
    /// Write PNG previews of guidance and weight maps.
    ExportMaps {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long, default_value_t = 8)]
        count: usize,
    },
    /// Run the HTTP API.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenerateData { common } => commands::generate_data(&common),
        Command::Ingest { common, volumes, roi_label } => commands::ingest(&common, &volumes, roi_label),
        Command::Train { common, data, no_eval } => commands::train(&common, &data, !no_eval),
        Command::Evaluate { common, data, checkpoint } => commands::evaluate(&common, &data, &checkpoint),
        Command::Grid { common, data, experiments } => commands::grid(&common, &data, &experiments),
        Command::ExportMaps { common, data, split, count } => commands::export_maps(&common, &data, &split, count),
        Command::Serve { common, port, checkpoint_dir } => commands::serve(&common, port, checkpoint_dir),
    };
    match result {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
