//! `capgen`: synthetic data, training, captioning and evaluation.

mod cmd;
mod failure;
mod settings;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "capgen", version, about = "Image caption generation with LSTM decoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic shapes dataset with features and vocabulary.
    Synth(cmd::synth::Args),
    /// Train a caption model on a dataset directory.
    Train(cmd::train::Args),
    /// Caption every image of a feature file.
    Caption(cmd::caption::Args),
    /// Score candidate captions against references.
    Eval(cmd::eval::Args),
    /// Tile an image with seeded perspective augmentations.
    Augment(cmd::augment::Args),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(cmd::gradcheck::Args),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { failure::USAGE as u8 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd::synth::run(a),
        Command::Train(a) => cmd::train::run(a),
        Command::Caption(a) => cmd::caption::run(a),
        Command::Eval(a) => cmd::eval::run(a),
        Command::Augment(a) => cmd::augment::run(a),
        Command::Gradcheck(a) => cmd::gradcheck::run(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}
