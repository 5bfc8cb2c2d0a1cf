mod args;
mod commands;
mod run;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::Status;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match &cli.command {
        Command::Estimate(a) => commands::estimate(a),
        Command::Ape(a) => commands::ape(a),
        Command::Describe(a) => commands::describe(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Recover(a) => commands::recover(a),
    };
    match outcome {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => {
            eprintln!("warning: the optimizer did not converge; results were written");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
