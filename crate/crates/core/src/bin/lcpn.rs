use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lc_protonets::cli_io::{
    cmd_bench, cmd_evaluate, cmd_split_labels, cmd_synth, cmd_train_adapter, BenchArgs, EvaluateArgs, SplitArgs,
    SynthArgs, TrainArgs,
};

/// Multi-label few-shot classification over embedding manifests.
#[derive(Debug, Parser)]
#[command(name = "lcpn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic embedding manifest.
    Synth(SynthArgs),
    /// Partition a manifest's vocabulary into base, validation and novel labels.
    SplitLabels(SplitArgs),
    /// Run episodic evaluation and print a score table.
    Evaluate(EvaluateArgs),
    /// Train a linear adapter on base-label episodes.
    TrainAdapter(TrainArgs),
    /// Measure prototype counts and inference latency against N.
    Bench(BenchArgs),
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::SplitLabels(a) => cmd_split_labels(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::TrainAdapter(a) => cmd_train_adapter(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(text) => {
            let mut out = std::io::stdout().lock();
            if out.write_all(text.as_bytes()).and_then(|_| out.flush()).is_err() {
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
