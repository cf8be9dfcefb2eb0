mod eval;
mod manifest;
mod simulate;
mod svg;
mod sweep;
mod verify;

use std::fmt;
use std::process::ExitCode;

use clap::{error::ErrorKind, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "loopgate", version, about = "Loop-closure verification by trajectory change")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic run: ground truth, noisy odometry, labeled candidates.
    Simulate(simulate::Args),
    /// Score loop candidates against a trajectory and write a verdict CSV.
    Verify(verify::Args),
    /// Simulate and verify across noise levels and seeds; report PR metrics.
    Sweep(sweep::Args),
    /// Compute AP/MR from verdicts and/or ATE and tATE from trajectories.
    Eval(eval::Args),
}

/// Failure reported as one `error: <kind>: <message>` line.
#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flat: Vec<&str> = self.message.split_whitespace().collect();
        write!(f, "error: {}: {}", self.kind, flat.join(" "))
    }
}

impl From<loopgate::Error> for CliError {
    fn from(e: loopgate::Error) -> Self {
        Self::new(e.kind(), e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let msg: Vec<&str> = text
                .lines()
                .take_while(|l| !l.is_empty() && !l.starts_with("Usage:"))
                .map(|l| l.trim().trim_start_matches("error: "))
                .collect();
            eprintln!("{}", CliError::new("usage", msg.join(" ")));
            return ExitCode::from(2);
        }
    };

    let outcome = match cli.command {
        Command::Simulate(args) => simulate::run(args),
        Command::Verify(args) => verify::run(args),
        Command::Sweep(args) => sweep::run(args),
        Command::Eval(args) => eval::run(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}
