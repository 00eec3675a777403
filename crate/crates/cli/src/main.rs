//! `turnpike` — batch front-end for the dual turnpike solver.
//!
//! Exit status: 0 on success, 1 when a computation or check fails, 2 on a
//! configuration error.

mod commands;
mod config;
mod error;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use crate::commands::Outcome;
use crate::config::{parse_config, parse_range, RunConfig};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Value,
    Allocate,
    Turnpike,
    Bound,
    Validate,
    Simulate,
    Classify,
}

#[derive(Debug, Parser)]
#[command(name = "turnpike", version, about = "Turnpike solver: value surfaces, allocations, bounds and checks")]
struct Args {
    command: Command,
    /// JSON run configuration (optional for `validate`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `mc.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// `a:b:n`, overrides `grids.tau`.
    #[arg(long)]
    grid_tau: Option<String>,
    /// `a:b:n`, overrides `grids.x`.
    #[arg(long)]
    grid_x: Option<String>,
}

fn load(args: &Args) -> Result<Option<RunConfig>, CliError> {
    let Some(path) = &args.config else {
        if args.command == Command::Validate {
            return Ok(None);
        }
        return Err(CliError::Config("--config is required for this command".into()));
    };
    let mut cfg = parse_config(path)?;
    if let Some(seed) = args.seed {
        cfg.mc.seed = seed;
    }
    if let Some(g) = &args.grid_tau {
        cfg.grids.tau = parse_range(g)?;
    }
    if let Some(g) = &args.grid_x {
        cfg.grids.x = parse_range(g)?;
        if cfg.grids.x.iter().any(|x| !(*x > 0.0)) {
            return Err(CliError::Config("--grid-x entries must be positive".into()));
        }
    }
    if cfg.grids.tau.iter().any(|t| !(*t >= 0.0)) {
        return Err(CliError::Config("--grid-tau entries must be non-negative".into()));
    }
    Ok(Some(cfg))
}

/// Writes every file or none: anything already written is removed when a
/// later write fails.
fn write_all(dir: &Path, files: &[(String, String)]) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, body) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            let _ = fs::remove_file(&path);
            return Err(e.into());
        }
        written.push(path);
    }
    Ok(())
}

fn run(args: &Args) -> Result<Outcome, CliError> {
    let cfg = load(args)?;
    let outcome = match (args.command, &cfg) {
        (Command::Validate, c) => commands::validate(c.as_ref())?,
        (_, None) => unreachable!("config presence checked in load"),
        (Command::Value, Some(c)) => commands::value(c)?,
        (Command::Allocate, Some(c)) => commands::allocate(c)?,
        (Command::Turnpike, Some(c)) => commands::turnpike(c)?,
        (Command::Bound, Some(c)) => commands::bound(c)?,
        (Command::Simulate, Some(c)) => commands::simulate(c)?,
        (Command::Classify, Some(c)) => commands::classify(c)?,
    };
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.as_ref().map(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    write_all(&dir, &outcome.files)?;
    Ok(outcome)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            match outcome.failed {
                Some(why) => {
                    eprintln!("{}", CliError::Failed(why));
                    ExitCode::from(1)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
