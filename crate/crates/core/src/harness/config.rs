//! TOML configuration files. Every section is optional; omitted keys take
//! the library defaults. Credentials never live here: the remote judge only
//! names the environment variable that holds its key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::suite::SuiteSpec;
use super::{JudgeSpec, Method, SearchConfig, TaskSource};
use crate::baselines::BaselineSettings;
use crate::budget::Budget;
use crate::elo::EloConfig;
use crate::env::WorldSuite;
use crate::error::{Error, Result};
use crate::judges::{RemoteJudgeConfig, ReplayScript};
use crate::judgment::JudgmentSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    #[default]
    Oracle,
    Replay,
    Remote,
}

impl JudgeKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(JudgeKind::Oracle),
            "replay" => Ok(JudgeKind::Replay),
            "remote" => Ok(JudgeKind::Remote),
            _ => Err(Error::invalid(format!("unknown judge kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeSection {
    pub kind: JudgeKind,
    /// Noise of the oracle judge.
    pub sigma: f64,
    /// Verdict script for the replay judge.
    pub replay_script: Option<PathBuf>,
    pub remote: RemoteJudgeConfig,
}

impl Default for JudgeSection {
    fn default() -> Self {
        Self {
            kind: JudgeKind::Oracle,
            sigma: 1.0,
            replay_script: None,
            remote: RemoteJudgeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSection {
    /// World suite file; relative paths resolve against the config file.
    pub world: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub budgets: Vec<u32>,
    pub seeds: Vec<u64>,
    pub parallel: usize,
    pub rank_trials: u32,
    pub reference_budget: Option<u32>,
}

impl Default for SuiteSection {
    fn default() -> Self {
        let base = SuiteSpec::new(Vec::new(), JudgeSpec::Oracle { sigma: 1.0 });
        Self {
            world: None,
            methods: base.methods,
            budgets: base.budgets,
            seeds: base.seeds,
            parallel: 1,
            rank_trials: base.rank_trials,
            reference_budget: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub elo: EloConfig,
    pub budget: Budget,
    pub judgment: JudgmentSettings,
    pub baselines: BaselineSettings,
    pub judge: JudgeSection,
    pub suite: SuiteSection,
    /// Directory relative paths resolve against; not part of the file.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: FileConfig = toml::from_str(text).map_err(|e| Error::Parse {
            what: "config".into(),
            message: e.to_string(),
        })?;
        config.search().validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        config.base_dir = path.parent().map(Path::to_path_buf);
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            elo: self.elo,
            budget: self.budget,
            judgment: self.judgment,
            baselines: self.baselines,
        }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// The judge this configuration describes. A replay judge needs its
    /// script file to exist.
    pub fn judge_spec(&self) -> Result<JudgeSpec> {
        Ok(match self.judge.kind {
            JudgeKind::Oracle => JudgeSpec::Oracle {
                sigma: self.judge.sigma,
            },
            JudgeKind::Replay => {
                let path = self
                    .judge
                    .replay_script
                    .as_deref()
                    .ok_or_else(|| Error::invalid("the replay judge needs judge.replay_script"))?;
                JudgeSpec::Replay {
                    verdicts: ReplayScript::load(&self.resolve(path))?.verdicts,
                }
            }
            JudgeKind::Remote => JudgeSpec::Remote {
                config: self.judge.remote.clone(),
            },
        })
    }

    /// A suite over `tasks`, or over the configured world file when `tasks`
    /// is `None`.
    pub fn suite_spec(&self, tasks: Option<Vec<TaskSource>>) -> Result<SuiteSpec> {
        let tasks = match tasks {
            Some(t) => t,
            None => {
                let world = self
                    .suite
                    .world
                    .as_deref()
                    .ok_or_else(|| Error::invalid("no tasks given and suite.world is unset"))?;
                WorldSuite::load(&self.resolve(world))?
                    .tasks
                    .into_iter()
                    .map(TaskSource::Tools)
                    .collect()
            }
        };
        let mut spec = SuiteSpec::new(tasks, self.judge_spec()?);
        spec.methods = self.suite.methods.clone();
        spec.budgets = self.suite.budgets.clone();
        spec.seeds = self.suite.seeds.clone();
        spec.config = self.search();
        spec.parallelism = self.suite.parallel;
        spec.rank_trials = self.suite.rank_trials;
        spec.reference_budget = self.suite.reference_budget;
        Ok(spec)
    }
}
