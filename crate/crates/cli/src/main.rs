mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::Overrides;

#[derive(Parser)]
#[command(
    name = "stresshmm",
    version,
    about = "Talking-condition identification with HMM, CHMM2 and SPHMM classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Preset {
    Stress,
    Emotion,
    ProsodyOnly,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus (WAV files plus manifest).
    Synth {
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "stress")]
        preset: Preset,
        /// Full-size shape: 30 speakers, 8 sentences, 9 repetitions.
        #[arg(long)]
        paper_shaped: bool,
        /// Number of speakers, alternating male and female.
        #[arg(long)]
        speakers: Option<usize>,
        /// Sentences per speaker.
        #[arg(long)]
        sentences: Option<u32>,
        /// Repetitions per sentence and condition.
        #[arg(long)]
        repetitions: Option<u32>,
        /// Generator seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Print the plan without writing anything.
        #[arg(long)]
        dry_run: bool,
    },
    /// Train one model per condition on the training side of the split.
    Train {
        #[command(flatten)]
        opts: Overrides,
    },
    /// Score the test side of the split with a trained bank.
    Evaluate {
        #[command(flatten)]
        opts: Overrides,
        /// Bank written by `train`.
        #[arg(long)]
        bank: PathBuf,
        /// Also re-score a suprasegmental bank at each weight in start:end:step.
        #[arg(long)]
        alpha_sweep: Option<String>,
    },
    /// Train a suprasegmental bank once and evaluate it across fusion weights.
    Sweep {
        #[command(flatten)]
        opts: Overrides,
        #[arg(long, default_value = "0.0:1.0:0.1")]
        alpha_sweep: String,
    },
    /// Combine the reports of several evaluation runs into one table.
    Report {
        /// Run directories containing report.jsonl.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Also write the table to this file.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth {
            out,
            preset,
            paper_shaped,
            speakers,
            sentences,
            repetitions,
            seed,
            dry_run,
        } => commands::synth(&commands::SynthArgs {
            out,
            preset,
            paper_shaped,
            speakers,
            sentences,
            repetitions,
            seed,
            dry_run,
        }),
        Command::Train { opts } => commands::train(&opts),
        Command::Evaluate {
            opts,
            bank,
            alpha_sweep,
        } => commands::evaluate(&opts, &bank, alpha_sweep.as_deref()),
        Command::Sweep { opts, alpha_sweep } => commands::sweep(&opts, &alpha_sweep),
        Command::Report { runs, out } => commands::report(&runs, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
