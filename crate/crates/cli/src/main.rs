//! `distsum`: synthesize data, build instances, train, evaluate, rank and
//! serve from the command line.

mod args;
mod commands;
mod exit;
mod manifest;
mod settings;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use crate::args::{Cli, Command};

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind::*;
            if matches!(e.kind(), DisplayHelp | DisplayVersion | DisplayHelpOnMissingArgumentOrSubcommand) {
                e.exit();
            }
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("usage error"));
            return ExitCode::from(exit::USAGE);
        }
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into());
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();

    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", exit::one_line(&e));
            ExitCode::from(exit::classify(&e))
        }
    }
}

fn run(matches: &clap::ArgMatches) -> anyhow::Result<()> {
    let cli = Cli::from_arg_matches(matches).map_err(|e| exit::usage(e.to_string()))?;
    let settings = settings::Settings::load(cli.settings.as_deref())?;
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let section = settings.section(name);
    match cli.command {
        Command::SynthData(a) => commands::synth::run(settings::merge(a, sub, section)?),
        Command::BuildInstances(a) => commands::instances::run(settings::merge(a, sub, section)?),
        Command::Train(a) => commands::train::run(settings::merge(a, sub, section)?),
        Command::Evaluate(a) => commands::evaluate::run(settings::merge(a, sub, section)?),
        Command::Rank(a) => commands::rank::run(settings::merge(a, sub, section)?),
        Command::Serve(a) => commands::serve::run(settings::merge(a, sub, section)?),
    }
}
