use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::LagrangeConfig;
use crate::cmdp::{Cell, Environment, GoalMode, HazardGrid, PointHazard, PointHazardParams, TabularEnv};
use crate::smpo::{Method, SmpoConfig};
use crate::{Error, Result};

/// Grid-world layout. `hazards` defaults to the built-in band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    pub start: [usize; 2],
    pub goal: [usize; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hazards: Option<Vec<[usize; 2]>>,
    pub goal_mode: GoalMode,
    pub max_episode_steps: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        let grid = HazardGrid::default();
        Self {
            width: grid.width(),
            height: grid.height(),
            start: [grid.start().x, grid.start().y],
            goal: [grid.goal().x, grid.goal().y],
            hazards: None,
            goal_mode: GoalMode::Respawn,
            max_episode_steps: 50,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<HazardGrid> {
        let hazards: BTreeSet<Cell> = match &self.hazards {
            Some(cells) => cells.iter().map(|&[x, y]| Cell::new(x, y)).collect(),
            None => HazardGrid::default().hazards().clone(),
        };
        HazardGrid::new(
            self.width,
            self.height,
            Cell::new(self.start[0], self.start[1]),
            Cell::new(self.goal[0], self.goal[1]),
            hazards,
            self.goal_mode,
        )
    }
}

/// Environment selection; the `name` key picks the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum EnvConfig {
    HazardGrid(GridConfig),
    PointHazard(PointHazardParams),
}

impl EnvConfig {
    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::HazardGrid(_) => "hazard_grid",
            EnvConfig::PointHazard(_) => "point_hazard",
        }
    }

    /// Algorithm defaults suited to this environment.
    pub fn default_smpo(&self) -> SmpoConfig {
        match self {
            EnvConfig::HazardGrid(_) => SmpoConfig::hazard_grid(),
            EnvConfig::PointHazard(_) => SmpoConfig {
                threshold: 10.0,
                e_max: 20,
                steps_per_epoch: 4000,
                epochs: 100,
                gradient_steps: 20,
                policy_lr: 1e-3,
                policy_hidden: vec![32, 32],
                critic_hidden: vec![32, 32],
                ..SmpoConfig::default()
            },
        }
    }

    /// Builds the environment; its discount is taken from `discount`.
    pub fn build(&self, discount: f64) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvConfig::HazardGrid(g) => Box::new(TabularEnv::new(g.build()?, g.max_episode_steps, discount)?),
            EnvConfig::PointHazard(p) => Box::new(PointHazard::new(PointHazardParams { discount, ..p.clone() })?),
        })
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub env: EnvConfig,
    pub smpo: SmpoConfig,
    #[serde(default)]
    pub lagrangian: LagrangeConfig,
}

/// On-disk shape: `[smpo]` is a partial overlay on the environment's defaults.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    method: Method,
    #[serde(default = "default_seeds")]
    seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
    env: toml::Table,
    #[serde(default)]
    smpo: toml::Table,
    #[serde(default)]
    lagrangian: LagrangeConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must list at least one seed"));
        }
        let unique: BTreeSet<_> = self.seeds.iter().collect();
        if unique.len() != self.seeds.len() {
            return Err(Error::config("seeds must be distinct"));
        }
        self.smpo.validate()?;
        self.lagrangian.validate()?;
        self.env.build(self.smpo.discount)?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config(format!("syntax error: {}", e.message())))?;
        let raw: RawConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
        let env: EnvConfig = toml::Value::Table(raw.env)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(format!("[env]: {}", e.message())))?;
        let mut smpo = match toml::Value::try_from(env.default_smpo()) {
            Ok(toml::Value::Table(t)) => t,
            _ => unreachable!("SmpoConfig serializes to a table"),
        };
        smpo.extend(raw.smpo);
        let smpo: SmpoConfig = toml::Value::Table(smpo)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(format!("[smpo]: {}", e.message())))?;
        let cfg = Self {
            method: raw.method,
            seeds: raw.seeds,
            output_dir: raw.output_dir,
            env,
            smpo,
            lagrangian: raw.lagrangian,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fully explicit TOML that parses back to `self`.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialize config: {e}")))
    }
}

/// Reads and validates a config file.
///
/// Missing files surface as [`Error::Io`]; syntax errors, unknown keys and
/// out-of-range values as [`Error::Config`] with distinct messages.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_toml_str(&text)
}
