mod args_file;
mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use locmahal::Error;

/// Local maximal-margin Mahalanobis metrics: learning, kNN evaluation,
/// pair verification and solver benchmarks.
#[derive(Parser, Debug)]
#[command(name = "locmahal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn one local metric and write it to a metric file.
    Learn(commands::LearnArgs),
    /// kNN classification error of each method on a test set.
    KnnEval(commands::KnnEvalArgs),
    /// Same/not-same verification of feature-vector pairs.
    VerifyPairs(commands::PairsArgs),
    /// Time single metric solves over a grid of problem sizes.
    Bench(commands::BenchArgs),
    /// Compare the solver against the reference oracles on random problems.
    OracleCheck(commands::OracleArgs),
}

fn main() -> ExitCode {
    let argv = match args_file::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(argv);
    let result = match cli.command {
        Command::Learn(a) => commands::learn(a),
        Command::KnnEval(a) => commands::knn_eval(a),
        Command::VerifyPairs(a) => commands::verify_pairs(a),
        Command::Bench(a) => commands::bench(a),
        Command::OracleCheck(a) => commands::oracle_check(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidConfig(_) | Error::InsufficientFolds(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
