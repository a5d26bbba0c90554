//! `faceid`: the mining and evaluation pipeline as subcommands.
//!
//! Exit codes: 0 on success, 1 on validation errors, 2 on I/O errors.

mod commands;

use std::process::ExitCode;

use clap::{error::ErrorKind, Parser, Subcommand};

use commands::{EvalReidArgs, EvalVerifyArgs, FilterArgs, SynthArgs, TrackArgs};

#[derive(Debug, Parser)]
#[command(
    name = "faceid",
    version,
    about = "Face-track mining and open-set re-ID evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic detections or embedding stores.
    Synth(SynthArgs),
    /// Associate a detection stream into tracks.
    Track(TrackArgs),
    /// Confidence-filter and subsample a track file into a corpus manifest.
    Filter(FilterArgs),
    /// Re-identification protocol: k sweep, held-out k, repeated splits.
    EvalReid(EvalReidArgs),
    /// Verification protocol: balanced pairs and ROC-AUC.
    EvalVerify(EvalVerifyArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err
        .chain()
        .any(|e| e.downcast_ref::<std::io::Error>().is_some());
    if io {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Track(a) => commands::track(a),
        Command::Filter(a) => commands::filter(a),
        Command::EvalReid(a) => commands::eval_reid(a),
        Command::EvalVerify(a) => commands::eval_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
