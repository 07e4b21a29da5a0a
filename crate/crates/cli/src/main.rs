use std::path::Path;
use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod report;

use args::{Cli, Command};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Core(mekt_core::Error),
}

impl CliError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    /// A core error raised while reading or writing `path`.
    fn at(path: &Path, e: mekt_core::Error) -> Self {
        match e {
            mekt_core::Error::Io(io) => CliError::io(path, io),
            mekt_core::Error::Format { .. } | mekt_core::Error::UnsupportedVersion(_) => CliError::Io(format!("{}: {e}", path.display())),
            other => CliError::Core(other),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Core(mekt_core::Error::Io(_) | mekt_core::Error::Format { .. } | mekt_core::Error::UnsupportedVersion(_)) => EXIT_IO,
            CliError::Core(_) => EXIT_USAGE,
        }
    }

    fn report(&self) {
        match self {
            CliError::Usage(m) => eprintln!("error: {m}"),
            CliError::Io(m) => eprintln!("io error: {m}"),
            CliError::Core(e) if e.is_numerical() => {
                eprintln!("numerical failure: {e}");
                eprintln!("diagnostics: {e:#?}");
            }
            CliError::Core(e) => eprintln!("error: {e}"),
        }
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
    let outcome = match &cli.command {
        Command::Synth(a) => commands::cmd_synth(a),
        Command::Run(a) => commands::cmd_run(a),
        Command::Dte(a) => commands::cmd_dte(a),
        Command::Bench(a) => commands::cmd_bench(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            e.report();
            ExitCode::from(e.exit_code())
        }
    }
}
