//! `datnet`: corpus synthesis, mixing, training, enhancement, evaluation,
//! electrodogram simulation, gradient audits and parameter accounting.
//!
//! Every command that writes files records a `run.json` manifest in its run
//! directory first. Exit codes: 0 success, 2 configuration error, 3 I/O
//! error, 4 numeric failure.

mod args;
mod cmd;
mod data;
mod exit;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use exit::{CliError, CliResult};
use manifest::{RunContext, RunManifest};

fn dispatch(ctx: &RunContext, command: &Command) -> CliResult<()> {
    match command {
        Command::Synth(a) => cmd::synth::run(ctx, a),
        Command::Mix(a) => cmd::mix::run(ctx, a),
        Command::Train(a) => cmd::train::run(ctx, a),
        Command::Enhance(a) => cmd::enhance::run(ctx, a),
        Command::Eval(a) => cmd::eval::run(ctx, a),
        Command::Electrodogram(a) => cmd::electrodogram::run(ctx, a),
        Command::Gradcheck(a) => cmd::gradcheck::run(ctx, a),
        Command::Params(a) => cmd::params::run(ctx, a),
        Command::Rerun(a) => {
            let recorded = RunManifest::read(&a.manifest)?;
            let mut cli = Cli::try_parse_from(&recorded.argv)
                .map_err(|e| CliError::config(format!("recorded command line does not parse: {e}")))?;
            if let Command::Rerun(_) = cli.command {
                return Err(CliError::config("a rerun manifest cannot point at another rerun"));
            }
            if let Some(out) = &a.out {
                cli.command.set_out(out.clone());
            }
            let ctx = RunContext {
                argv: recorded.argv,
                workers: ctx.workers,
            };
            dispatch(&ctx, &cli.command)
        }
    }
}

fn run(cli: Cli, argv: Vec<String>) -> CliResult<()> {
    if cli.workers == 0 {
        return Err(CliError::config("--workers must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build_global()
        .map_err(|e| CliError::config(e.to_string()))?;
    let ctx = RunContext {
        argv,
        workers: cli.workers,
    };
    dispatch(&ctx, &cli.command)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("datnet {name}: {e}");
            e.exit_code()
        }
    }
}
