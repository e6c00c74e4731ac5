use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentConfig;
use super::metrics::{aggregate, read_metrics_csv, write_aggregate_csv, write_metrics_csv};
use crate::approx::{write_checkpoint, Checkpoint};
use crate::smpo::{TrainOutcome, Trainer};
use crate::{Error, Result};

/// Files written by [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutputs {
    /// One metrics CSV per seed, in seed order.
    pub per_seed: Vec<PathBuf>,
    pub aggregate: PathBuf,
    /// Final policy (and critic, for SMPO) checkpoints.
    pub checkpoints: Vec<PathBuf>,
    /// The resolved configuration.
    pub config: PathBuf,
}

impl ExperimentOutputs {
    pub fn all(&self) -> Vec<PathBuf> {
        let mut out = self.per_seed.clone();
        out.push(self.aggregate.clone());
        out.extend(self.checkpoints.iter().cloned());
        out.push(self.config.clone());
        out
    }
}

/// Trains one seed of the experiment.
pub fn train_seed(cfg: &ExperimentConfig, seed: u64) -> Result<TrainOutcome> {
    let env = cfg.env.build(cfg.smpo.discount)?;
    Trainer::with_lagrange(env, cfg.method, cfg.smpo.clone(), cfg.lagrangian, seed)?.train()
}

/// Runs every seed (in parallel), then writes per-seed metrics, checkpoints
/// and an aggregate with `_mean`/`_std` columns under `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutputs> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let method = cfg.method.name();

    let outcomes: Vec<Result<TrainOutcome>> = std::thread::scope(|scope| {
        let jobs: Vec<_> = cfg
            .seeds
            .iter()
            .map(|&seed| scope.spawn(move || train_seed(cfg, seed)))
            .collect();
        jobs.into_iter()
            .map(|j| j.join().expect("training thread panicked"))
            .collect()
    });

    let mut out = ExperimentOutputs {
        per_seed: Vec::new(),
        aggregate: dir.join(format!("{method}_aggregate.csv")),
        checkpoints: Vec::new(),
        config: dir.join(format!("{method}_config.toml")),
    };
    let mut logs = Vec::new();
    for (&seed, outcome) in cfg.seeds.iter().zip(outcomes) {
        let outcome = outcome?;
        let path = dir.join(format!("{method}_seed{seed}.csv"));
        write_metrics_csv(&outcome.log, &path)?;
        out.per_seed.push(path);

        let path = dir.join(format!("{method}_seed{seed}.policy.ckpt"));
        write_checkpoint(&path, &Checkpoint::from_policy(&outcome.policy))?;
        out.checkpoints.push(path);
        if let Some(critic) = &outcome.critic {
            let path = dir.join(format!("{method}_seed{seed}.critic.ckpt"));
            write_checkpoint(&path, &Checkpoint::from_mlp(critic.network()))?;
            out.checkpoints.push(path);
        }
        logs.push(outcome.log);
    }
    write_aggregate_csv(&aggregate(&logs)?, &out.aggregate)?;
    std::fs::write(&out.config, cfg.to_toml_string()?).map_err(|e| Error::io(&out.config, e))?;
    Ok(out)
}

/// Final-window summary of one metrics file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    /// File stem of the metrics file.
    pub label: String,
    pub mean_reward: f64,
    pub mean_cost: f64,
    /// Threshold the run was held to: its final `d_prime`.
    pub threshold: f64,
    pub cost_adherent: bool,
}

pub fn compare_runs<P: AsRef<Path>>(paths: &[P], window: usize) -> Result<Vec<RunSummary>> {
    if paths.is_empty() {
        return Err(Error::EmptyBatch("compare needs at least one metrics file"));
    }
    let logs: Vec<_> = paths.iter().map(read_metrics_csv).collect::<Result<_>>()?;
    let shortest = logs.iter().map(|l| l.len()).min().unwrap_or(0);
    if window == 0 || window > shortest {
        return Err(Error::contract(format!(
            "window {window} must lie in 1..={shortest} (the shortest log)"
        )));
    }
    paths
        .iter()
        .zip(&logs)
        .map(|(p, log)| {
            let (mean_reward, mean_cost) = log.tail_means(window)?;
            let threshold = log.records().last().expect("non-empty log").d_prime;
            Ok(RunSummary {
                label: p
                    .as_ref()
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                mean_reward,
                mean_cost,
                threshold,
                cost_adherent: mean_cost <= threshold,
            })
        })
        .collect()
}

/// Fixed-width table of summaries.
pub fn format_summaries(rows: &[RunSummary]) -> String {
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(5);
    let mut s = format!(
        "{:<width$}  {:>12}  {:>10}  {:>6}  {}\n",
        "label", "mean_reward", "mean_cost", "d", "cost_adherent"
    );
    for r in rows {
        s += &format!(
            "{:<width$}  {:>12.4}  {:>10.4}  {:>6.2}  {}\n",
            r.label, r.mean_reward, r.mean_cost, r.threshold, r.cost_adherent
        );
    }
    s
}
