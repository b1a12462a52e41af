//! `nbmo`: run, validate and list experiments.
//!
//! Exit codes: 0 all rows pass, 1 the run finished with failing rows or an
//! I/O error, 2 invalid configuration, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use neumann_bmo::config::{RunConfig, EXPERIMENTS};
use neumann_bmo::experiments::{self, Artifacts};
use neumann_bmo::Error;

#[derive(Debug, Parser)]
#[command(name = "nbmo", version, about = "Neumann heat semigroup experiments")]
struct Cli {
    /// Root directory for run artifacts.
    #[arg(long, global = true, env = "NBMO_OUT", default_value = "runs")]
    out: PathBuf,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true, env = "NBMO_THREADS")]
    threads: Option<usize>,
    /// Overrides the seed in the config file.
    #[arg(long, global = true, env = "NBMO_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment named in a config file.
    Run { config: PathBuf },
    /// Parse and validate a config file without running it.
    Validate { config: PathBuf },
    /// Print the available experiment names.
    ListExperiments,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Io(_) => 1,
        _ => 3,
    }
}

fn load(path: &PathBuf, seed: Option<u64>) -> Result<(String, RunConfig), Error> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let cfg = RunConfig::parse(&src, seed).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok((src, cfg))
}

fn summarize(art: &Artifacts) {
    for t in &art.tables {
        let failed = t.rows.iter().filter(|r| !r.pass).count();
        let status = if failed == 0 { "PASS" } else { "FAIL" };
        println!("{status} {}: {} rows, {failed} failing", t.name, t.rows.len());
        for r in t.rows.iter().filter(|r| !r.pass) {
            println!("  failing: {}", r.input_id);
        }
    }
}

fn main_inner(cli: Cli) -> Result<u8, Error> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        experiments::configure_threads(k)?;
    }
    match cli.command {
        Command::ListExperiments => {
            for e in EXPERIMENTS {
                println!("{e}");
            }
            Ok(0)
        }
        Command::Validate { config } => {
            let (_, cfg) = load(&config, cli.seed)?;
            let grid = cfg.build_grid()?;
            let balls = cfg.build_balls(&grid)?;
            println!("valid: {}", config.display());
            println!("experiment: {}", cfg.experiment);
            println!("seed: {}", cfg.seed);
            println!("grid: {}", grid.descriptor());
            println!("ball family: {}", balls.descriptor());
            Ok(0)
        }
        Command::Run { config } => {
            let (src, cfg) = load(&config, cli.seed)?;
            let art = match experiments::run(&cfg) {
                Ok(a) => a,
                Err(e) => {
                    eprintln!("numerical failure in '{}' (seed {}): {e}", cfg.experiment, cfg.seed);
                    return Err(e);
                }
            };
            let dir = experiments::write_artifacts(&cfg, &src, &art, &cli.out)?;
            summarize(&art);
            println!("artifacts: {}", dir.display());
            Ok(if art.passed() { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
