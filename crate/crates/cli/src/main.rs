//! Batch front-end: verification suites and experiment sweeps as CSV.

mod commands;
mod config;

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Failure;
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "secquant", version, about = "Second quantization and Ornstein-Uhlenbeck evolution experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; overrides the config, stdout when neither is set.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Run every invariant suite; JSON report.
    Verify,
    /// Hypercontractivity thresholds over the sweep.
    HyperScan,
    /// Cameron-Martin norms, thresholds and decay ratios over the sweep.
    Decay,
    /// Hilbert-Schmidt partial sums against the closed form.
    HsTable,
    /// Series form of Gamma(e^{-t} I) against the classical semigroup.
    MehlerDemo,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output = Some(out.clone());
    }
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &ExperimentConfig) -> Result<(), Failure> {
    let mut buf: Vec<u8> = Vec::new();
    let result = match cli.command {
        Command::Verify => commands::verify(cfg, &mut buf),
        Command::HyperScan => commands::hyper_scan(cfg, &mut buf),
        Command::Decay => commands::decay(cfg, &mut buf),
        Command::HsTable => commands::hs_table(cfg, &mut buf),
        Command::MehlerDemo => commands::mehler_demo(cfg, &mut buf),
    };
    match &cfg.output {
        Some(path) => fs::write(path, &buf)?,
        None => io::stdout().write_all(&buf)?,
    }
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("config error: threads: {e}");
            return ExitCode::from(2);
        }
    }
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cli, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Assertion(e)) => {
            eprintln!("assertion failed: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Compute(e)) => {
            eprintln!("{}: {e}", e.kind());
            ExitCode::from(1)
        }
    }
}
