use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Judge, JudgeError, JudgeVerdict, TaskContext, Trail, Winner};
use crate::error::{Error, Result};
use crate::rng::SearchRng;

pub const REPLAY_FORMAT: &str = "elosearch-replay";
pub const REPLAY_VERSION: u32 = 1;

/// One scripted answer: a verdict, or a failure the judge should report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReplayRecord {
    Verdict { winner: Winner },
    Error { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayScript {
    pub format: String,
    pub version: u32,
    pub verdicts: Vec<ReplayRecord>,
}

impl ReplayScript {
    pub fn new(verdicts: Vec<ReplayRecord>) -> Self {
        Self {
            format: REPLAY_FORMAT.into(),
            version: REPLAY_VERSION,
            verdicts,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let script: ReplayScript = serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "replay script".into(),
            message: e.to_string(),
        })?;
        if script.format != REPLAY_FORMAT {
            return Err(Error::Parse {
                what: "replay script".into(),
                message: format!("unexpected format tag {:?}", script.format),
            });
        }
        if script.version != REPLAY_VERSION {
            return Err(Error::IncompatibleVersion {
                kind: REPLAY_FORMAT.into(),
                expected: REPLAY_VERSION,
                found: script.version,
            });
        }
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Deterministic judge that answers from a script, one record per call.
#[derive(Debug, Clone)]
pub struct ReplayJudge {
    remaining: VecDeque<ReplayRecord>,
    served: usize,
}

impl ReplayJudge {
    pub fn new(records: impl IntoIterator<Item = ReplayRecord>) -> Self {
        Self {
            remaining: records.into_iter().collect(),
            served: 0,
        }
    }

    pub fn from_winners(winners: impl IntoIterator<Item = Winner>) -> Self {
        Self::new(winners.into_iter().map(|winner| ReplayRecord::Verdict { winner }))
    }

    pub fn from_script(script: ReplayScript) -> Self {
        Self::new(script.verdicts)
    }

    pub fn remaining(&self) -> usize {
        self.remaining.len()
    }
}

impl Judge for ReplayJudge {
    fn name(&self) -> &str {
        "replay"
    }

    fn compare(
        &mut self,
        _context: &TaskContext,
        _first: &Trail,
        _second: &Trail,
        _rng: &mut SearchRng,
    ) -> Result<JudgeVerdict, JudgeError> {
        let record = self.remaining.pop_front().ok_or(JudgeError::Exhausted(self.served))?;
        self.served += 1;
        match record {
            ReplayRecord::Verdict { winner } => Ok(JudgeVerdict::instant(winner)),
            ReplayRecord::Error { error } => Err(JudgeError::Scripted(error)),
        }
    }
}
