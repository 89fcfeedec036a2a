//! `soar`: command-line front end for the honeypot orchestration engine.
//!
//! Exit status is 0 on success, 2 for configuration or usage errors and 3
//! for failures while running.

/// `println!` that tolerates a closed stdout, so `soar ... | head` exits
/// cleanly.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

mod learn;
mod live;
mod sim;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "soar", version, about = "Dynamic honeypot orchestration engine")]
struct Cli {
    /// Raise log verbosity (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Process a packet capture through the live engine.
    Run(live::RunArgs),
    /// Run an attack scenario in virtual time.
    Simulate(sim::SimulateArgs),
    /// Train a detector model from a corpus CSV.
    Train(learn::TrainArgs),
    /// Evaluate a saved model on a corpus CSV.
    Eval(learn::EvalArgs),
    /// Generate a labelled synthetic corpus.
    Gen(learn::GenArgs),
    /// Summarize a scenario run directory.
    Report(sim::ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn enabled(self) -> bool {
        self == Switch::On
    }
}

/// A failure tagged with the exit status it maps to.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn config(context: impl fmt::Display, e: impl fmt::Display) -> Self {
        CliError::Config(format!("{context}: {e}"))
    }

    pub fn runtime(context: impl fmt::Display, e: impl fmt::Display) -> Self {
        CliError::Runtime(format!("{context}: {e}"))
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

pub type CmdResult = Result<(), CliError>;

/// Load the engine config, or defaults when no file is given.
pub fn load_config(path: Option<&PathBuf>) -> Result<soar_core::config::EngineConfig, CliError> {
    match path {
        Some(p) => soar_core::config::EngineConfig::load(p).map_err(|e| CliError::config(p.display(), e)),
        None => Ok(Default::default()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Run(a) => live::run(a),
        Command::Simulate(a) => sim::simulate(a),
        Command::Train(a) => learn::train(a),
        Command::Eval(a) => learn::eval(a),
        Command::Gen(a) => learn::gen(a),
        Command::Report(a) => sim::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
