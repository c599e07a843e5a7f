mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use neurcam::Error;

use crate::args::{Cli, Command};

/// Exit status for bad input or configuration, matching clap's usage errors.
const EXIT_USAGE: u8 = 2;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Shape { .. } | Error::Parse { .. } | Error::Format(_) | Error::Config(_) | Error::Input(_) => EXIT_USAGE,
        _ => 1,
    }
}

fn init_threads() {
    let Ok(v) = std::env::var("NEURCAM_THREADS") else {
        return;
    };
    match v.parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not size the thread pool: {e}");
            }
        }
        _ => log::warn!("ignoring NEURCAM_THREADS={v:?}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    init_threads();

    let result = match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Predict(a) => commands::predict(a),
        Command::Explain(a) => commands::explain(a),
        Command::Eval(a) => commands::eval(a),
        Command::BaselineKmeans(a) => commands::baseline_kmeans(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
