//! Command-line interface for the chest X-ray report labeling toolkit.
//!
//! Exit codes: 0 success, 1 usage error, 2 input error, 3 compute error
//! (training divergence and kin), 4 transport error. Every run prints a
//! reproducibility header (tool version, seed, config digest) and writes
//! the same header into its text outputs; reruns with identical flags
//! produce byte-identical files.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use cxrlab::taxonomy::LabelSchema;

mod commands;
mod util;

use commands::{ablate, build_dataset, clean, convert, eval, label, llm, stats, train};

#[derive(Parser)]
#[command(
    name = "cxrlab",
    version,
    about = "Chest X-ray report labeling toolkit"
)]
struct Cli {
    /// Label-schema file; the built-in schema is used when omitted.
    #[arg(long, global = true)]
    schema: Option<PathBuf>,
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Convert DICOM studies to windowed 8-bit grayscale PNGs.
    Convert(convert::ConvertArgs),
    /// Clean a raw report table and split off rejects.
    Clean(clean::CleanArgs),
    /// Assemble a labeled dataset manifest: label, exclude, split.
    BuildDataset(build_dataset::BuildDatasetArgs),
    /// Summarize a dataset manifest.
    Stats(stats::StatsArgs),
    /// Train the neural labeler and write a checkpoint.
    Train(train::TrainArgs),
    /// Label reports with a trained checkpoint or the rule lexicon.
    Label(label::LabelArgs),
    /// Score predicted labels against gold labels.
    Eval(eval::EvalArgs),
    /// Train the architecture ablations and compare them.
    Ablate(ablate::AblateArgs),
    /// Label reports through a chat-model transport.
    LlmLabel(llm::LlmLabelArgs),
}

/// A failed run, carrying the exit-code category.
pub enum Failure {
    Usage(String),
    Input(anyhow::Error),
    Compute(anyhow::Error),
    Transport(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Input(_) => 2,
            Failure::Compute(_) => 3,
            Failure::Transport(_) => 4,
        }
    }

    pub fn message(&self) -> String {
        match self {
            Failure::Usage(msg) => msg.clone(),
            Failure::Input(e) | Failure::Compute(e) | Failure::Transport(e) => format!("{e:#}"),
        }
    }
}

pub fn input(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Input(e.into())
}

pub fn compute(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Compute(e.into())
}

pub fn transport(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Transport(e.into())
}

pub fn labeler_failure(e: cxrlab::labeler::LabelerError) -> Failure {
    use cxrlab::labeler::LabelerError;
    match e {
        LabelerError::Divergence { .. } => Failure::Compute(e.into()),
        LabelerError::BadConfig { .. } => Failure::Usage(e.to_string()),
        _ => Failure::Input(e.into()),
    }
}

/// State shared by every command.
pub struct Ctx {
    pub schema: LabelSchema,
    /// The --schema flag as given, for the config digest.
    pub schema_source: String,
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let (schema, schema_source) = match &cli.schema {
        Some(path) => (
            cxrlab::taxonomy::load_schema(path).map_err(input)?,
            path.display().to_string(),
        ),
        None => (LabelSchema::default_schema(), "builtin".to_string()),
    };
    let ctx = Ctx {
        schema,
        schema_source,
    };
    match &cli.command {
        Commands::Convert(args) => convert::run(args, &ctx),
        Commands::Clean(args) => clean::run(args, &ctx),
        Commands::BuildDataset(args) => build_dataset::run(args, &ctx),
        Commands::Stats(args) => stats::run(args, &ctx),
        Commands::Train(args) => train::run(args, &ctx),
        Commands::Label(args) => label::run(args, &ctx),
        Commands::Eval(args) => eval::run(args, &ctx),
        Commands::Ablate(args) => ablate::run(args, &ctx),
        Commands::LlmLabel(args) => llm::run(args, &ctx),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; everything else is
            // a usage error.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(failure) = run(&cli) {
        eprintln!("error: {}", failure.message());
        std::process::exit(failure.code());
    }
}
