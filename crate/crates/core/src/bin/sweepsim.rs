use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use sweepsim::config::{parse_config, Mode};
use sweepsim::experiment::run_experiment;
use sweepsim::par::Execution;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Simulate,
    Analytic,
    Compare,
    Diagnostics,
}

impl From<Command> for Mode {
    fn from(c: Command) -> Mode {
        match c {
            Command::Simulate => Mode::Simulate,
            Command::Analytic => Mode::Analytic,
            Command::Compare => Mode::Compare,
            Command::Diagnostics => Mode::Diagnostics,
        }
    }
}

/// Selective-sweep simulator and ancestral sampling formula.
#[derive(Debug, Parser)]
#[command(name = "sweepsim", version)]
struct Cli {
    /// What to run; overrides `mode` in the config file.
    #[arg(value_enum)]
    mode: Option<Command>,
    /// Configuration file (`key = value` lines).
    #[arg(long, short)]
    config: PathBuf,
    /// Worker threads; 1 runs sequentially. Defaults to SWEEPSIM_THREADS or
    /// the number of cores.
    #[arg(long, env = "SWEEPSIM_THREADS")]
    threads: Option<usize>,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Compact JSON on stdout.
    #[arg(long)]
    compact: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(1);
        }
    };
    let mut config = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(mode) = cli.mode {
        config.mode = Some(mode.into());
    }
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }

    let execution = match cli.threads {
        Some(1) => Execution::Sequential,
        _ => Execution::Parallel,
    };
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.threads.filter(|&n| n > 1) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: {e}");
        }
    }

    match run_experiment(&config, execution) {
        Ok(outcome) => {
            let json = if cli.compact {
                serde_json::to_string(&outcome.json)
            } else {
                serde_json::to_string_pretty(&outcome.json)
            };
            println!("{}", json.expect("summary serializes"));
            if let Some(err) = &outcome.truncated {
                eprintln!("error: stopped early: {err}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
