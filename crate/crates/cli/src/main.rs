use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use stpath_cli::config::{load, Command};
use stpath_cli::run::run_experiment;
use stpath_cli::CliError;

/// Spacetime-path laboratory: kernels, propagators, two-slit screens,
/// diagram amplitudes and frequency statistics, written as CSV/JSON with a
/// hashed manifest.
#[derive(Parser, Debug)]
#[command(name = "stpath", version)]
struct Args {
    /// Subcommand; overrides `command` in the config file.
    #[arg(value_enum)]
    command: Option<Command>,
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default runs/<command>).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: STPATH_THREADS, else all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Override a config key, e.g. `--set freq.n=200`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stpath: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(args: Args) -> Result<(), CliError> {
    let mut cfg = load(args.config.as_deref(), &args.overrides)?;
    if args.command.is_some() {
        cfg.command = args.command;
    }
    if args.out.is_some() {
        cfg.out = args.out;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    let manifest = run_experiment(&cfg)?;
    println!("{}: wrote {} artifacts to {}", manifest.command.name(), manifest.artifacts.len(), cfg.out_dir().display());
    if let Some(suites) = &manifest.suites {
        for s in suites {
            println!("suite {:>2} {:<34} {} ({:.1} s) {}", s.id, s.name, if s.passed { "PASS" } else { "FAIL" }, s.seconds, s.detail);
        }
    }
    Ok(())
}
