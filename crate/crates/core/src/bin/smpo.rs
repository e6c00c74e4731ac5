use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use smpo::harness::{compare_runs, format_summaries, parse_config, run_experiment, run_suite, Suite};

/// Safety-modulated policy optimization experiments.
///
/// Set RUST_LOG (e.g. RUST_LOG=debug) for per-epoch progress.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed in a config file and write metrics and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run this single seed instead of the config's seed list.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize the final K epochs of one or more metrics files.
    Compare {
        #[arg(long)]
        window: usize,
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Run a verification suite and print one line per check.
    Check {
        #[arg(long, value_parser = ["weights", "gradients", "oracle"])]
        suite: String,
    },
}

fn run(cli: Cli) -> smpo::Result<bool> {
    match cli.command {
        Command::Train {
            config,
            seed_override,
            out,
        } => {
            let mut cfg = parse_config(&config)?;
            if let Some(seed) = seed_override {
                cfg.seeds = vec![seed];
            }
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            for path in run_experiment(&cfg)?.all() {
                println!("{}", path.display());
            }
            Ok(true)
        }
        Command::Compare { window, paths } => {
            print!("{}", format_summaries(&compare_runs(&paths, window)?));
            Ok(true)
        }
        Command::Check { suite } => {
            let results = run_suite(suite.parse::<Suite>()?)?;
            for r in &results {
                println!("{r}");
            }
            Ok(results.iter().all(|r| r.passed))
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
