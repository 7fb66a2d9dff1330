//! `caue`: synthesize or ingest a clinical corpus, extract concepts, train
//! patient embeddings, and evaluate them against the baselines.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "caue", version, about)]
struct Cli {
    /// TOML file with hyperparameters and input paths; unknown keys are errors.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides CAUE_OUTPUT_DIR and the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus, lexicon and manifest under `<out>/synth`.
    Synth,
    /// Read and preprocess the raw corpus into `<out>/corpus.json`.
    Ingest,
    /// Match lexicon concepts in every note into `<out>/mentions.json`.
    ExtractConcepts,
    /// Train patient embeddings; writes checkpoints, a loss log and `embeddings/caue.txt`.
    Train {
        /// Continue from `<out>/checkpoint.bin`.
        #[arg(long)]
        resume: bool,
    },
    /// Score CAUE and the configured baselines; writes `reports/<method>.json`.
    Evaluate,
    /// Print the k patients nearest to one patient.
    Retrieve {
        #[arg(long)]
        patient: String,
        #[arg(long)]
        visit: Option<String>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value = "caue")]
        method: String,
    },
    /// Consolidate the reports into `report.json` and `summary.csv`.
    Report,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Ingest => "ingest",
            Command::ExtractConcepts => "extract-concepts",
            Command::Train { .. } => "train",
            Command::Evaluate => "evaluate",
            Command::Retrieve { .. } => "retrieve",
            Command::Report => "report",
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = RunConfig::load(cli.config.as_deref())?.resolve(cli.out);
    if !matches!(cli.command, Command::Retrieve { .. }) {
        commands::record_config(&cfg, cli.command.name())?;
    }
    match &cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Ingest => commands::ingest_cmd(&cfg),
        Command::ExtractConcepts => commands::extract(&cfg),
        Command::Train { resume } => commands::train_cmd(&cfg, *resume),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Retrieve { patient, visit, k, method } => {
            commands::retrieve(&cfg, patient, visit.as_deref(), *k, method)
        }
        Command::Report => commands::report(&cfg),
    }
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    if let Some(e) = err.downcast_ref::<caue::Error>() {
        e.kind()
    } else if err.is::<ConfigError>() {
        "invalid_config"
    } else if let Some(e) = err.downcast_ref::<std::io::Error>() {
        if e.kind() == std::io::ErrorKind::NotFound {
            "missing_file"
        } else {
            "io"
        }
    } else {
        "error"
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let chain: Vec<String> = err.chain().map(ToString::to_string).collect();
            let body = serde_json::json!({
                "error": {
                    "command": command,
                    "kind": error_kind(&err),
                    "message": chain.join(": "),
                }
            });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
