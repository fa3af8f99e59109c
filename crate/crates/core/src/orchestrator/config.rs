//! Experiment configuration file (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::{MutationConfig, NetworkShape};
use crate::grid::AblationConfig;
use crate::maze::MazeParams;
use crate::meta::{MetaConfig, ObjectiveMode};
use crate::qd::QdConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    MazeMeta,
    GridAblation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutationSettings {
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Defaults to one over the genome length.
    #[serde(default)]
    pub per_gene_prob: Option<f64>,
}

fn default_eta() -> f64 {
    15.0
}

impl Default for MutationSettings {
    fn default() -> Self {
        MutationSettings {
            eta: default_eta(),
            per_gene_prob: None,
        }
    }
}

impl MutationSettings {
    pub fn resolve(&self, genome_len: usize) -> Result<MutationConfig> {
        let p = self.per_gene_prob.unwrap_or(1.0 / genome_len as f64);
        MutationConfig::new(self.eta, p).map_err(|e| match e {
            Error::InvalidConfig { field, reason } => {
                Error::config(format!("maze.mutation.{field}"), reason)
            }
            other => other,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MazeExperiment {
    pub n: usize,
    pub train_count: usize,
    pub test_count: usize,
    /// Directory holding `mazes_train.txt` / `mazes_test.txt`; when absent the
    /// pools are generated from the master seed.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub sim: MazeParams,
    #[serde(default)]
    pub mutation: MutationSettings,
    pub meta: MetaConfig,
}

fn default_hidden() -> Vec<usize> {
    vec![10, 10, 10]
}

impl Default for MazeExperiment {
    fn default() -> Self {
        MazeExperiment {
            n: 8,
            train_count: 1200,
            test_count: 200,
            dataset: None,
            hidden: default_hidden(),
            sim: MazeParams::default(),
            mutation: MutationSettings::default(),
            meta: MetaConfig {
                mu: 24,
                lambda: 24,
                m_train: 30,
                m_test: 30,
                g_outer: 100,
                test_every: 1,
                objectives: ObjectiveMode::Joint,
                qd: QdConfig::default(),
            },
        }
    }
}

impl MazeExperiment {
    pub fn shape(&self) -> Result<NetworkShape> {
        NetworkShape::new(5, self.hidden.clone(), 2)
            .map_err(|_| Error::config("maze.hidden", "layer widths must be positive"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("maze.n", "must be positive"));
        }
        if self.train_count == 0 {
            return Err(Error::config("maze.train_count", "must be positive"));
        }
        if self.test_count == 0 {
            return Err(Error::config("maze.test_count", "must be positive"));
        }
        let shape = self.shape()?;
        self.mutation.resolve(shape.parameter_count())?;
        self.sim.validate()?;
        self.meta.validate().map_err(|e| prefix_field(e, "maze"))
    }
}

/// Prepends `prefix` to the field path of a configuration error.
fn prefix_field(e: Error, prefix: &str) -> Error {
    match e {
        Error::InvalidConfig { field, reason } if !field.starts_with(prefix) => {
            Error::config(format!("{prefix}.{field}"), reason)
        }
        other => other,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    #[serde(default)]
    pub kind: ExperimentKind,
    /// Master seed; required here or on the command line.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[serde(default)]
    pub parallelism: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub maze: Option<MazeExperiment>,
    #[serde(default)]
    pub ablation: Option<AblationConfig>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| describe_span(text, s))
                .unwrap_or_else(|| "<file>".into());
            Error::config(field, e.message().to_string())
        })?;
        if cfg.format_version != CONFIG_VERSION {
            return Err(Error::config(
                "format_version",
                format!(
                    "unsupported version {} (expected {CONFIG_VERSION})",
                    cfg.format_version
                ),
            ));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| {
            Error::config(
                "seed",
                "a master seed is required (set `seed` or pass --seed)",
            )
        })
    }

    pub fn maze(&self) -> Result<&MazeExperiment> {
        self.maze
            .as_ref()
            .ok_or_else(|| Error::config("maze", "section is required for this command"))
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        if self.parallelism == Some(0) {
            return Err(Error::config("parallelism", "must be positive"));
        }
        if let Some(m) = &self.maze {
            m.validate()?;
        }
        if let Some(a) = &self.ablation {
            a.validate().map_err(|e| prefix_field(e, "ablation"))?;
        }
        match self.kind {
            ExperimentKind::MazeMeta => self.maze().map(|_| ()),
            ExperimentKind::GridAblation => Ok(()),
        }
    }

    /// Worker threads for a run fanning out over `tasks` instances.
    pub fn threads(&self, tasks: usize) -> usize {
        let cores = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1);
        self.parallelism.unwrap_or(cores).min(tasks.max(1))
    }
}

/// `line:column` of a parse error, plus the enclosing table header if any.
fn describe_span(text: &str, span: std::ops::Range<usize>) -> String {
    let before = &text[..span.start.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let table = before
        .lines()
        .rev()
        .find_map(|l| l.trim().strip_prefix('[').and_then(|l| l.strip_suffix(']')))
        .map(|t| t.trim_matches(['[', ']']).to_string());
    let key = text[span.clone()].split('=').next().unwrap_or("").trim();
    let key = if key.starts_with('[') { "" } else { key };
    match (table, key.is_empty()) {
        (Some(t), false) => format!("{t}.{key} (line {line})"),
        (Some(t), true) => format!("{t} (line {line})"),
        (None, false) => format!("{key} (line {line})"),
        (None, true) => format!("line {line}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
format_version = 1
seed = 3

[maze]
n = 4
train_count = 10
test_count = 5

[maze.meta]
mu = 4
lambda = 4
m_train = 2
m_test = 2
g_outer = 1

[maze.meta.qd]
g_qd_max = 5
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        cfg.validate().unwrap();
        let m = cfg.maze().unwrap();
        assert_eq!(m.hidden, vec![10, 10, 10]);
        assert_eq!(m.meta.qd.novelty_k, 15);
        assert_eq!(m.sim, MazeParams::default());
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_field_is_reported_with_path() {
        let text = MINIMAL.replace("g_qd_max = 5", "g_qd_max = 5\nbogus = 1");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert!(err.is_config_error());
        assert!(err.to_string().contains("maze.meta.qd"), "{err}");
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn semantic_errors_carry_field_paths() {
        let text = MINIMAL.replace("mu = 4", "mu = 0");
        let err = ExperimentConfig::parse(&text)
            .unwrap()
            .validate()
            .unwrap_err();
        assert!(err.to_string().contains("maze.meta.mu"), "{err}");
        let text = MINIMAL.replace("g_qd_max = 5", "g_qd_max = 5\nc_lambda = 0.0");
        let err = ExperimentConfig::parse(&text)
            .unwrap()
            .validate()
            .unwrap_err();
        assert!(err.to_string().contains("maze.meta.qd.c_lambda"), "{err}");
    }

    #[test]
    fn version_and_seed_are_required() {
        let text = MINIMAL.replace("format_version = 1", "format_version = 9");
        assert!(ExperimentConfig::parse(&text).is_err());
        let text = MINIMAL.replace("seed = 3", "");
        let err = ExperimentConfig::parse(&text)
            .unwrap()
            .validate()
            .unwrap_err();
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn threads_capped_by_tasks() {
        let mut cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        cfg.parallelism = Some(8);
        assert_eq!(cfg.threads(3), 3);
        assert_eq!(cfg.threads(0), 1);
    }
}
