//! `schro`: experiment runner for the free Schrödinger laboratory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod error;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{value_parser, Arg, ArgMatches, Command};

use config::Config;
use error::{CliError, Result};
use experiments::{Ctx, CATALOG};
use output::{summary_path, Summary};

fn cli() -> Command {
    let flags = [
        Arg::new("config").long("config").value_name("PATH").value_parser(value_parser!(PathBuf)).global(true)
            .help("key = value config file, or JSON when the extension is .json"),
        Arg::new("out").long("out").value_name("PATH").value_parser(value_parser!(PathBuf)).global(true)
            .help("CSV destination; the summary goes next to it as <stem>.summary.json"),
        Arg::new("seed").long("seed").value_name("U64").value_parser(value_parser!(u64)).global(true)
            .help("seed for random sampling and Lanczos start vectors"),
        Arg::new("threads").long("threads").value_name("N").value_parser(value_parser!(usize)).global(true)
            .help("worker threads for independent parameter tuples"),
    ];
    let mut cmd = Command::new("schro")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Numerical laboratory for the free Schrödinger equation")
        .subcommand_required(true)
        .args(flags);
    for e in CATALOG {
        cmd = cmd.subcommand(Command::new(e.name).about(e.about));
    }
    cmd.subcommand(Command::new("list").about("print the experiment catalog"))
}

fn execute(name: &str, m: &ArgMatches) -> Result<()> {
    if name == "list" {
        print!("{}", experiments::catalog_text());
        return Ok(());
    }
    let entry = experiments::find(name).ok_or_else(|| CliError::UnknownExperiment(name.to_string()))?;
    if let Some(&n) = m.get_one::<usize>("threads") {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("--threads: {e}")))?;
    }
    let cfg = match m.get_one::<PathBuf>("config") {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let kind = cfg.string("experiment", name);
    if kind != name {
        return Err(match experiments::find(&kind) {
            Some(_) => CliError::Validation(format!("config is for `{kind}` but the subcommand is `{name}`")),
            None => CliError::UnknownExperiment(kind),
        });
    }
    let seed = match m.get_one::<u64>("seed") {
        Some(&s) => s,
        None => cfg.get("seed", 0u64)?,
    };
    let out = m
        .get_one::<PathBuf>("out")
        .cloned()
        .or_else(|| cfg.has("output.path").then(|| PathBuf::from(cfg.string("output.path", ""))));
    let (table, findings) = (entry.run)(&Ctx { cfg: &cfg, seed })?;
    cfg.finish()?;
    let echo = cfg.echo();
    let summary = Summary { experiment: name, seed, config: &echo, rows: table.rows.len(), findings: &findings }.to_json();
    match out {
        Some(path) => {
            output::write(&path, &table.to_csv())?;
            output::write(&summary_path(&path), &summary)?;
        }
        None => {
            print!("{}", table.to_csv());
            eprint!("{summary}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let m = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                ErrorKind::InvalidSubcommand => {
                    let bad = e
                        .get(clap::error::ContextKind::InvalidSubcommand)
                        .map(|v| v.to_string())
                        .unwrap_or_default();
                    let err = CliError::UnknownExperiment(bad);
                    eprintln!("error: {err}");
                    ExitCode::from(err.exit_code() as u8)
                }
                _ => {
                    let _ = e.print();
                    ExitCode::from(64)
                }
            };
        }
    };
    let (name, sub) = m.subcommand().expect("subcommand required");
    match execute(name, sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
