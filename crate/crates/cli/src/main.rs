//! `energy-recon <command> --config <file> [--key value ...]`
//!
//! Exit status: 0 on success, 2 on configuration errors, 3 on numerical
//! failures, 1 on other errors (I/O, corrupt checkpoints).

// `!(x > 0.0)` checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use crate::commands::train::Mode;
use crate::config::Config;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    TrainSup,
    TrainShared,
    Reconstruct,
    Eval,
    Consistency,
    MakeData,
    TrainAe,
}

#[derive(Debug, Parser)]
#[command(name = "energy-recon", version, about = "Learned energy-based image reconstruction")]
struct Cli {
    command: Command,

    /// Flat `section.key = value` configuration file.
    #[arg(long)]
    config: PathBuf,

    /// Overrides as `--section.key value` or `--section.key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
    overrides: Vec<String>,
}

fn parse_overrides(args: &[String]) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let key = a
            .strip_prefix("--")
            .ok_or_else(|| CliError::Config(format!("expected --key value, got '{a}'")))?;
        match key.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it.next().ok_or_else(|| CliError::Config(format!("--{key} needs a value")))?;
                out.push((key.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}

fn run(cli: &Cli) -> CliResult<()> {
    let name = cli.command.to_possible_value().expect("no skipped variants").get_name().to_string();
    let c = Config::load(&name, &cli.config, &parse_overrides(&cli.overrides)?)?;
    match cli.command {
        Command::TrainSup => commands::train::run(&c, Mode::Supervised),
        Command::TrainShared => commands::train::run(&c, Mode::Shared),
        Command::Reconstruct => commands::reconstruct::run(&c),
        Command::Eval => commands::eval::run(&c),
        Command::Consistency => commands::consistency::run(&c),
        Command::MakeData => commands::make_data::run(&c),
        Command::TrainAe => commands::train_ae::run(&c),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
