//! Command-line front end: dataset generation and ingestion, training,
//! evaluation, sweeps and reports.

pub mod commands;
pub mod config;
pub mod dataset;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use commands::{run, RunDir};
pub use config::{FeatureOverrides, ModelOverrides, Preset, RunConfig, SweepConfig};
pub use dataset::{generate_toy, ingest, stratified_split, ClipEntry, DatasetManifest, Split, ToySpec};

#[derive(Debug, Parser)]
#[command(name = "pcaudio", version, about = "Audio classification over spectral point clouds")]
pub struct Cli {
    /// Seed for every randomised step; overrides seeds in config files (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory that receives a fresh timestamped run directory.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    Repr,
    Subsample,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate band-limited noise classes; --config may give the generator settings.
    GenToy,
    /// Trim and split a directory with one subdirectory of WAV files per class.
    Ingest {
        root: PathBuf,
        /// Resample every clip to this rate (default: the first file's rate).
        #[arg(long)]
        sample_rate: Option<u32>,
    },
    /// Train a preset on a dataset manifest.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        preset: Preset,
    },
    /// Evaluate a checkpoint on the test split of a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Representation or subsampling sweep of a checkpoint on the test split.
    Sweep {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        kind: SweepKind,
    },
    /// Merge run manifests, tabulate parameter and MAC counts and dump pooling attention.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Test example whose attention is dumped.
        #[arg(long, default_value_t = 0)]
        example: usize,
    },
}
