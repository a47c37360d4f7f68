//! Batch driver for the saccade pipeline.
//!
//! Each subcommand reads the files of the previous stage from the work
//! directory and writes its own, so a full run is
//! `ingest → trials → gmm / features → classify → report`. Every output
//! carries a schema name, a version and the fully resolved configuration.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod settings;
pub mod store;

#[derive(Debug, Parser)]
#[command(name = "saccade", version, about = "Saccadic step-length modelling and observer identification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Directory holding the stage files.
    #[arg(long, default_value = ".")]
    pub work_dir: PathBuf,
    /// key=value file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse trace CSVs, segment fixations and write the normalized store.
    Ingest(commands::ingest::IngestArgs),
    /// Fit a GPD per observer on random image subsets.
    Trials(commands::trials::TrialsArgs),
    /// Fit a Gaussian mixture to the (k, σ) parameter cloud.
    Gmm(commands::gmm::GmmArgs),
    /// Embed fitted pdfs and select high-variance components.
    Features(commands::features::FeaturesArgs),
    /// Evaluate one-vs-rest SVM recognition rates.
    Classify(commands::classify::ClassifyArgs),
    /// Emit plot-ready CSVs.
    Report(commands::report::ReportArgs),
    /// Generate synthetic traces in the ingest CSV format.
    Synth(commands::synth::SynthArgs),
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest(a) => commands::ingest::run(&a),
        Command::Trials(a) => commands::trials::run(&a),
        Command::Gmm(a) => commands::gmm::run(&a),
        Command::Features(a) => commands::features::run(&a),
        Command::Classify(a) => commands::classify::run(&a),
        Command::Report(a) => commands::report::run(&a),
        Command::Synth(a) => commands::synth::run(&a),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_args<I, T>(args: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run(Cli::try_parse_from(args)?)
}
