use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crowdrule_core::dataset::Dataset;
use crowdrule_core::orchestration::{Condition, ConditionTable, ExperimentConfig, FilterConfig};

/// `serve` configuration, read from TOML. Relative paths resolve against
/// the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    /// Directory holding the dataset files.
    pub data_dir: PathBuf,
    /// Replaces the dataset's `conditions.json`.
    #[serde(default)]
    pub conditions: Option<PathBuf>,
    /// Append-only event log; created if missing.
    pub event_log: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Conditions new workers are drawn from. Empty means all of them.
    #[serde(default)]
    pub active_conditions: Vec<Condition>,
    #[serde(default)]
    pub filter: FilterConfig,
    /// Sync the log to disk after every append.
    #[serde(default = "yes")]
    pub fsync: bool,
    #[serde(default)]
    pub judging: Option<JudgingConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgingConfig {
    /// Blinded items from `judge-export`.
    pub items: PathBuf,
    /// Verdicts are appended here.
    pub judgments: PathBuf,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

fn yes() -> bool {
    true
}

impl ServiceConfig {
    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: ServiceConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.data_dir);
        resolve(&mut cfg.event_log);
        if let Some(c) = cfg.conditions.as_mut() {
            resolve(c);
        }
        if let Some(j) = cfg.judging.as_mut() {
            resolve(&mut j.items);
            resolve(&mut j.judgments);
        }
        Ok(cfg)
    }

    pub fn experiment(&self) -> ExperimentConfig {
        let active = if self.active_conditions.is_empty() {
            Condition::ALL.to_vec()
        } else {
            self.active_conditions.clone()
        };
        ExperimentConfig {
            seed: self.seed,
            active_conditions: active,
            filter: self.filter,
        }
    }

    /// Loads and checks the dataset, applying the condition override.
    pub fn dataset(&self) -> anyhow::Result<Dataset> {
        let mut ds = Dataset::load(&self.data_dir).with_context(|| format!("loading {}", self.data_dir.display()))?;
        if let Some(p) = &self.conditions {
            ds.conditions = load_conditions(p)?;
        }
        ds.check().context("dataset check")?;
        for c in self.experiment().active_conditions {
            if ds.conditions.get(c).is_err() {
                bail!("active condition {c} has no entry in the condition table");
            }
        }
        Ok(ds)
    }
}

pub fn load_conditions(path: &Path) -> anyhow::Result<ConditionTable> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let t: ConditionTable = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    t.validate().with_context(|| format!("checking {}", path.display()))?;
    Ok(t)
}
