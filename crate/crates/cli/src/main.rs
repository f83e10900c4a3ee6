use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "blockgibbs", version, about = "Blocked collapsed Gibbs sampling for Gaussian mixtures")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the configured dataset; writes data.csv and labels.csv.
    Simulate {
        /// Clustered rows of the outlier study (157 gives 160 rows in total).
        #[arg(long)]
        clustered: Option<usize>,
    },
    /// Run the sampler; writes one JSONL trace per chain.
    Sample {
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        clustered: Option<usize>,
    },
    /// Joint table of a pair of allocations given the rest.
    AnalyzePair,
    /// Convergence-rate lower bound from a pair table.
    Bound,
    /// Correlation surface over a grid.
    Surface,
    /// Posterior similarity matrix of a trace.
    Psm,
    /// Autocorrelation of an allocation indicator.
    Acf,
    /// Search an allocation for a group of coupled outliers.
    DetectOutliers,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Sample { .. } => "sample",
            Command::AnalyzePair => "analyze-pair",
            Command::Bound => "bound",
            Command::Surface => "surface",
            Command::Psm => "psm",
            Command::Acf => "acf",
            Command::DetectOutliers => "detect-outliers",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let name = cli.command.name();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut chain = e.chain().map(ToString::to_string);
            let operation = chain.next().unwrap_or_default();
            let message = chain.collect::<Vec<_>>().join(": ");
            let line = serde_json::json!({ "command": name, "operation": operation, "error": message });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
