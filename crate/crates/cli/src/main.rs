//! `embalign`: fit, apply, and evaluate alignment maps between embedding
//! spaces, generate planted synthetic worlds, and verify the identifiability
//! bounds on seeded instance sweeps.
//!
//! Reports go to stdout (or `--out`); diagnostics go to stderr. Exit codes:
//! 0 success, 1 assertion/bound failure, 2 input-contract violation,
//! 3 format error.

mod commands;
mod util;

use clap::{Parser, Subcommand};
use embalign_core::Error;

#[derive(Parser)]
#[command(name = "embalign", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an alignment map from two paired embedding files.
    Fit(commands::fit::FitArgs),
    /// Transform an embedding file with a stored map.
    Apply(commands::apply::ApplyArgs),
    /// Full metric battery before and after alignment.
    Eval(commands::eval::EvalArgs),
    /// Fit on a growing class prefix and report seen/unseen metrics.
    SweepSeenUnseen(commands::sweep::SweepArgs),
    /// Composition and cycle consistency across model chains.
    CycleCompose(commands::cycle::CycleArgs),
    /// Compare direct and text-mediated retrieval paths.
    TwoPath(commands::two_path::TwoPathArgs),
    /// Verify the identifiability bounds on seeded instance sweeps.
    Theory(commands::theory::TheoryArgs),
    /// Generate planted scenarios as EMB1 files plus scenario.json.
    Synth(commands::synth::SynthArgs),
    /// Convert a headerless CSV into an EMB1 file.
    ImportCsv(commands::import::ImportArgs),
}

fn exit_code_for(err: &Error) -> i32 {
    if err.is_format() {
        3
    } else {
        2
    }
}

fn main() {
    if let Ok(raw) = std::env::var("ALIGN_NUM_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n > 0 => embalign_core::set_max_threads(n),
            _ => eprintln!("warning: ignoring unparsable ALIGN_NUM_THREADS={raw:?}"),
        }
    }
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(args) => commands::fit::run(&args),
        Command::Apply(args) => commands::apply::run(&args),
        Command::Eval(args) => commands::eval::run(&args),
        Command::SweepSeenUnseen(args) => commands::sweep::run(&args),
        Command::CycleCompose(args) => commands::cycle::run(&args),
        Command::TwoPath(args) => commands::two_path::run(&args),
        Command::Theory(args) => commands::theory::run(&args),
        Command::Synth(args) => commands::synth::run(&args),
        Command::ImportCsv(args) => commands::import::run(&args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(exit_code_for(&err));
        }
    }
}
