//! `seqmix` binary: run experiments from flat config files and summarize
//! the record files they produce.
//!
//! Exit codes: 0 success, 2 bad configuration or usage, 3 execution
//! failure mid-run, 4 unreadable or malformed summarize input.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use seqmix_cli::config::ExperimentConfig;
use seqmix_cli::records::{read_oracle, read_records, to_ndjson, write_oracle, write_records};
use seqmix_cli::{experiments, summarize};

#[derive(Parser)]
#[command(
    name = "seqmix",
    version,
    about = "Markov chain sequence preparation experiments on a simulated quantum walk"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment described by a flat key=value config file.
    ///
    /// Records go to the path under the config's `out` key (with a
    /// `.oracle.json` sidecar next to them), or to stdout as NDJSON when
    /// no `out` is set.
    Run {
        /// Config file path.
        config: PathBuf,
        /// Override the config's rng seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's mode.
        #[arg(long)]
        mode: Option<String>,
        /// Override the config's trial count.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Summarize record files, scoring against oracle sidecars when
    /// present.
    Summarize {
        /// NDJSON record files.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Run { config, seed, out, mode, trials } => run_cmd(config, seed, out, mode, trials),
        Cmd::Summarize { paths } => summarize_cmd(paths),
    }
}

fn run_cmd(
    config: PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
    mode: Option<String>,
    trials: Option<usize>,
) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(&config).map_err(|e| Failure::new(2, e.0))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(mode) = mode {
        cfg.mode = mode.parse().map_err(|e: seqmix_cli::config::ConfigError| Failure::new(2, e.0))?;
    }
    if let Some(trials) = trials {
        cfg.trials = trials;
    }
    if let Some(out) = out {
        cfg.out = Some(out.display().to_string());
    }
    cfg.validate().map_err(|e| Failure::new(2, e.0))?;

    let output = experiments::run(&cfg).map_err(|e| Failure::new(3, e.to_string()))?;
    match &cfg.out {
        Some(path) => {
            let path = PathBuf::from(path);
            write_records(&path, &output.records)
                .map_err(|e| Failure::new(3, format!("cannot write {}: {e}", path.display())))?;
            write_oracle(&path, &output.oracle)
                .map_err(|e| Failure::new(3, format!("cannot write oracle: {e}")))?;
            println!("wrote {} records to {}", output.records.len(), path.display());
        }
        None => print!("{}", to_ndjson(&output.records)),
    }
    Ok(())
}

fn summarize_cmd(paths: Vec<PathBuf>) -> Result<(), Failure> {
    for path in &paths {
        let records = read_records(path).map_err(|e| Failure::new(4, e))?;
        let oracle = read_oracle(path).map_err(|e| Failure::new(4, e))?;
        let summary = summarize::summarize(&records, oracle.as_ref());
        println!("== {} ==", path.display());
        print!("{}", summarize::render(&summary));
    }
    Ok(())
}
