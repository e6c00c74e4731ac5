//! Runs SMPO, vanilla PG and Lagrangian PG on the grid world through the
//! experiment harness and prints the final-window comparison table.
//!
//! ```text
//! cargo run --release --example compare_methods -- [epochs] [out_dir]
//! ```
//!
//! Each method writes per-seed metrics, an aggregate CSV, checkpoints and its
//! resolved config into `out_dir` (default: a fresh directory under the
//! system temp dir).

use std::path::PathBuf;

use smpo::harness::{compare_runs, format_summaries, run_experiment, ExperimentConfig};

const CONFIG: &str = r#"
method = "smpo"
seeds = [0, 1]

[env]
name = "hazard_grid"
"#;

fn main() -> smpo::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(200, |s| s.parse().expect("epochs"));
    let out: PathBuf = args
        .next()
        .map_or_else(|| std::env::temp_dir().join("smpo_compare"), PathBuf::from);

    let base = ExperimentConfig::from_toml_str(CONFIG)?;
    let mut metrics = Vec::new();
    for method in ["smpo", "vanilla_pg", "lagrangian_pg"] {
        let mut cfg = base.clone();
        cfg.method = method.parse()?;
        cfg.smpo.epochs = epochs;
        cfg.output_dir = out.clone();
        let outputs = run_experiment(&cfg)?;
        println!("{method}: wrote {} files", outputs.all().len());
        metrics.extend(outputs.per_seed);
    }

    let rows = compare_runs(&metrics, 10.min(epochs))?;
    println!("\n{}", format_summaries(&rows));
    println!("outputs in {}", out.display());
    Ok(())
}
