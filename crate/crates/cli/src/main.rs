//! `negcamp`: annotate messages, score them against gold labels, and model party negativity.

mod commands;
mod config;
mod exit;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{RunArgs, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "negcamp", version, about = "Negative-campaigning annotation and analysis pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Label every corpus document with the chat model (or a mock)
    Annotate(RunArgs),
    /// Score annotation runs against human gold labels
    Evaluate(RunArgs),
    /// Aggregate by party, fit the regressions, and write figure data
    Study(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Annotate(args) => RunConfig::load(args).and_then(|c| commands::annotate::run(&c)),
        Command::Evaluate(args) => RunConfig::load(args).and_then(|c| commands::evaluate::run(&c)),
        Command::Study(args) => RunConfig::load(args).and_then(|c| commands::study::run(&c)),
    };
    match result {
        Ok(()) => ExitCode::from(exit::EXIT_OK),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit::status_of(&err))
        }
    }
}
