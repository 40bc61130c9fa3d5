//! Pairwise judges.
//!
//! Every judge answers the same question: which of two rendered trails is
//! closer to solving the task? The caller runs the order-swapped second
//! trial; a judge only ever sees one ordering at a time.

mod oracle;
mod remote;
mod render;
mod replay;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SearchRng;

pub use oracle::{oracle_performance_sample, OracleJudge};
pub use remote::{
    assemble_prompt, build_request, parse_preference, LlmJudge, RateLimiter, RemoteJudgeConfig, CHOOSE_PREFERENCE,
    PROMPT_TEMPLATE,
};
pub use render::{render_sequence_for_judge, IN_PROGRESS_MARKER};
pub use replay::{ReplayJudge, ReplayRecord, ReplayScript};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskContext {
    pub task_description: String,
    /// The instruction the searcher is trying to satisfy.
    pub query: String,
}

impl TaskContext {
    pub fn new(task_description: impl Into<String>, query: impl Into<String>) -> Self {
        Self {
            task_description: task_description.into(),
            query: query.into(),
        }
    }
}

/// A candidate shown to a judge.
///
/// `utility` is the environment's hidden value for the trail. Only simulated
/// judges read it; the remote judge sees `text` alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trail {
    pub text: String,
    pub utility: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    First,
    Second,
    Abstain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JudgeVerdict {
    pub winner: Winner,
    pub latency: Duration,
    /// Raw transcript, when the judge has one.
    pub raw: Option<String>,
}

impl JudgeVerdict {
    pub fn instant(winner: Winner) -> Self {
        Self {
            winner,
            latency: Duration::ZERO,
            raw: None,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum JudgeError {
    #[error("judge input rejected: {0}")]
    InvalidInput(String),
    #[error("judge request timed out")]
    Timeout,
    #[error("judge transport failure: {0}")]
    Transport(String),
    #[error("judge endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed judge response: {0}")]
    Malformed(String),
    #[error("replay script exhausted after {0} verdicts")]
    Exhausted(usize),
    #[error("scripted judge failure: {0}")]
    Scripted(String),
    #[error("missing credentials: environment variable {0} is not set")]
    MissingCredentials(String),
}

pub trait Judge {
    fn name(&self) -> &str;

    fn compare(
        &mut self,
        context: &TaskContext,
        first: &Trail,
        second: &Trail,
        rng: &mut SearchRng,
    ) -> Result<JudgeVerdict, JudgeError>;
}

impl<J: Judge + ?Sized> Judge for Box<J> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn compare(
        &mut self,
        context: &TaskContext,
        first: &Trail,
        second: &Trail,
        rng: &mut SearchRng,
    ) -> Result<JudgeVerdict, JudgeError> {
        (**self).compare(context, first, second, rng)
    }
}

/// Shared precondition for every judge.
pub fn judge_compare<J: Judge + ?Sized>(
    judge: &mut J,
    context: &TaskContext,
    first: &Trail,
    second: &Trail,
    rng: &mut SearchRng,
) -> Result<JudgeVerdict, JudgeError> {
    if first.text.is_empty() || second.text.is_empty() {
        return Err(JudgeError::InvalidInput("candidate rendering is empty".into()));
    }
    if context.query.trim().is_empty() {
        return Err(JudgeError::InvalidInput("task query is empty".into()));
    }
    judge.compare(context, first, second, rng)
}

/// Judge backed by a closure over the two trails; handy for scripted policies.
pub struct FnJudge<F> {
    name: String,
    decide: F,
}

impl<F> FnJudge<F>
where
    F: FnMut(&Trail, &Trail) -> Result<Winner, JudgeError>,
{
    pub fn new(name: impl Into<String>, decide: F) -> Self {
        Self {
            name: name.into(),
            decide,
        }
    }
}

impl<F> Judge for FnJudge<F>
where
    F: FnMut(&Trail, &Trail) -> Result<Winner, JudgeError>,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn compare(
        &mut self,
        _context: &TaskContext,
        first: &Trail,
        second: &Trail,
        _rng: &mut SearchRng,
    ) -> Result<JudgeVerdict, JudgeError> {
        (self.decide)(first, second).map(JudgeVerdict::instant)
    }
}
