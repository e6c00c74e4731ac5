use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Column order of per-seed metrics files.
pub const METRIC_COLUMNS: [&str; 7] = [
    "epoch",
    "env_steps",
    "avg_episode_reward",
    "avg_episode_cost",
    "d_prime",
    "critic_loss",
    "multiplier",
];

/// One row of a training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Environment steps taken so far, including this epoch.
    pub env_steps: u64,
    /// Mean undiscounted episode reward.
    pub avg_episode_reward: f64,
    /// Mean undiscounted episode cost.
    pub avg_episode_cost: f64,
    pub d_prime: f64,
    /// Mean critic loss over the epoch's gradient steps; absent without a critic.
    pub critic_loss: Option<f64>,
    /// Lagrange multiplier in force during the epoch; Lagrangian runs only.
    pub multiplier: Option<f64>,
}

/// Per-epoch records with strictly increasing epochs and non-decreasing step counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    records: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn from_records(records: Vec<EpochRecord>) -> Result<Self> {
        let mut log = Self::default();
        for r in records {
            log.push(r)?;
        }
        Ok(log)
    }

    pub fn push(&mut self, record: EpochRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.epoch <= last.epoch {
                return Err(Error::contract(format!(
                    "epoch {} does not follow epoch {}",
                    record.epoch, last.epoch
                )));
            }
            if record.env_steps < last.env_steps {
                return Err(Error::contract("env_steps must be non-decreasing"));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Mean reward and mean cost over the last `window` epochs.
    pub fn tail_means(&self, window: usize) -> Result<(f64, f64)> {
        if window == 0 || window > self.len() {
            return Err(Error::contract(format!(
                "window {window} must lie in 1..={}",
                self.len()
            )));
        }
        let tail = &self.records[self.len() - window..];
        let n = window as f64;
        Ok((
            tail.iter().map(|r| r.avg_episode_reward).sum::<f64>() / n,
            tail.iter().map(|r| r.avg_episode_cost).sum::<f64>() / n,
        ))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Format {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

pub fn write_metrics<W: Write>(log: &TrainingLog, w: W) -> csv::Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(METRIC_COLUMNS)?;
    for r in log.records() {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Header row, then one row per epoch. Floats use shortest round-trip formatting.
pub fn write_metrics_csv(log: &TrainingLog, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_metrics(log, file).map_err(|e| csv_error(path, e))
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<TrainingLog> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().ne(METRIC_COLUMNS) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "expected columns {}, found {}",
                METRIC_COLUMNS.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let records = reader
        .deserialize()
        .collect::<std::result::Result<Vec<EpochRecord>, _>>()
        .map_err(|e| csv_error(path, e))?;
    TrainingLog::from_records(records).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Mean and population standard deviation of each column across seeds, epoch by epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub epoch: usize,
    /// `(mean, std)` for every column after `epoch`, in [`METRIC_COLUMNS`] order;
    /// `None` when the column is absent in every log.
    pub columns: Vec<Option<(f64, f64)>>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn aggregate(logs: &[TrainingLog]) -> Result<Vec<AggregateRow>> {
    let Some(first) = logs.first() else {
        return Err(Error::EmptyBatch("aggregate needs at least one log"));
    };
    if logs.iter().any(|l| l.len() != first.len()) {
        return Err(Error::contract("logs to aggregate must have equal length"));
    }
    let mut rows = Vec::with_capacity(first.len());
    for i in 0..first.len() {
        let at: Vec<&EpochRecord> = logs.iter().map(|l| &l.records()[i]).collect();
        if at.iter().any(|r| r.epoch != at[0].epoch) {
            return Err(Error::contract("logs to aggregate disagree on epoch numbering"));
        }
        let fields: [fn(&EpochRecord) -> Option<f64>; 6] = [
            |r| Some(r.env_steps as f64),
            |r| Some(r.avg_episode_reward),
            |r| Some(r.avg_episode_cost),
            |r| Some(r.d_prime),
            |r| r.critic_loss,
            |r| r.multiplier,
        ];
        let columns = fields
            .iter()
            .map(|f| {
                let v: Option<Vec<f64>> = at.iter().map(|r| f(r)).collect();
                v.map(|v| mean_std(&v))
            })
            .collect();
        rows.push(AggregateRow {
            epoch: at[0].epoch,
            columns,
        });
    }
    Ok(rows)
}

/// `epoch` followed by `<column>_mean,<column>_std` pairs.
pub fn write_aggregate_csv(rows: &[AggregateRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = csv::Writer::from_writer(file);
    let mut header = vec!["epoch".to_string()];
    for c in &METRIC_COLUMNS[1..] {
        header.push(format!("{c}_mean"));
        header.push(format!("{c}_std"));
    }
    out.write_record(&header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        let mut fields = vec![row.epoch.to_string()];
        for col in &row.columns {
            match col {
                Some((m, s)) => {
                    fields.push(m.to_string());
                    fields.push(s.to_string());
                }
                None => fields.extend([String::new(), String::new()]),
            }
        }
        out.write_record(&fields).map_err(|e| csv_error(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(epoch: usize, reward: f64, cost: f64) -> EpochRecord {
        EpochRecord {
            epoch,
            env_steps: 100 * (epoch as u64 + 1),
            avg_episode_reward: reward,
            avg_episode_cost: cost,
            d_prime: 5.0,
            critic_loss: None,
            multiplier: None,
        }
    }

    #[test]
    fn invariants_enforced() {
        let mut log = TrainingLog::default();
        log.push(record(0, 1.0, 0.0)).unwrap();
        assert!(log.push(record(0, 1.0, 0.0)).is_err());
        let mut back = record(3, 1.0, 0.0);
        back.env_steps = 10;
        assert!(log.push(back).is_err());
    }

    #[test]
    fn empty_log_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_metrics_csv(&TrainingLog::default(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(text.trim_end(), METRIC_COLUMNS.join(","));
        assert!(read_metrics_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "epoch,reward\n0,1\n").unwrap();
        assert!(matches!(read_metrics_csv(&path), Err(Error::Format { .. })));
        assert!(matches!(
            read_metrics_csv(dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn aggregate_mean_and_population_std() {
        let a = TrainingLog::from_records(vec![record(0, 1.0, 2.0), record(1, 3.0, 0.0)]).unwrap();
        let b = TrainingLog::from_records(vec![record(0, 3.0, 4.0), record(1, 5.0, 0.0)]).unwrap();
        let rows = aggregate(&[a, b]).unwrap();
        assert_eq!(rows[0].columns[1], Some((2.0, 1.0)));
        assert_eq!(rows[0].columns[2], Some((3.0, 1.0)));
        assert_eq!(rows[1].columns[4], None);
    }

    fn arb_log() -> impl Strategy<Value = TrainingLog> {
        proptest::collection::vec(
            (
                0u64..500,
                -1e6f64..1e6,
                0.0f64..1e3,
                0.1f64..100.0,
                proptest::option::of(0.0f64..10.0),
                proptest::option::of(0.0f64..10.0),
            ),
            0..20,
        )
        .prop_map(|rows| {
            let mut steps = 0;
            let records = rows
                .into_iter()
                .enumerate()
                .map(|(i, (ds, r, c, d, l, m))| {
                    steps += ds;
                    EpochRecord {
                        epoch: i,
                        env_steps: steps,
                        avg_episode_reward: r,
                        avg_episode_cost: c,
                        d_prime: d,
                        critic_loss: l,
                        multiplier: m,
                    }
                })
                .collect();
            TrainingLog::from_records(records).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn csv_round_trip(log in arb_log()) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.csv");
            write_metrics_csv(&log, &path).unwrap();
            let text = std::fs::read_to_string(&path).unwrap();
            prop_assert_eq!(text.lines().count(), log.len() + 1);
            prop_assert_eq!(read_metrics_csv(&path).unwrap(), log);
        }
    }
}
