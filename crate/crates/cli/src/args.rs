use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Gradient-similarity analysis and masked fine-tuning experiments.
#[derive(Debug, Parser)]
#[command(name = "cnl", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pretrain each seed's reference model and write mastered/injection counts.
    Split(RunArgs),
    /// Run every configured arm for every seed.
    Train(RunArgs),
    /// Similarity report and per-group forgetting at a checkpoint.
    Analyze {
        #[command(flatten)]
        run: RunArgs,
        /// Parameters to analyze. Defaults to each seed's reference model.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Long-format learning and forgetting curves from finished runs.
    Curves {
        /// A seed directory written by `train`, or the output root holding several.
        run_dir: PathBuf,
        /// Write curve files below this directory instead of next to the runs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment description in TOML.
    #[arg(long)]
    pub config: PathBuf,
    /// Output root; overrides the config and the environment.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    pub seed_override: Option<u64>,
}
