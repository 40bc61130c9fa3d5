//! Task worlds the searchers act in.
//!
//! An [`Environment`] turns `(state, action)` into an observation and the next
//! state. An [`ActionSampler`] stands in for the language model: it proposes
//! the next action given what has happened so far. Searchers never invent
//! actions themselves.

pub mod taxonomy;
pub mod tools;
pub mod toy;

use crate::judges::TaskContext;
use crate::rng::SearchRng;
use crate::tree::{Action, State, Transition};

pub use taxonomy::{classify_failure, FailureCategory, FailureReport};
pub use tools::{
    FailureMode, ParamKind, ParamSpec, SamplerProfile, TaskSpec, ToolBackend, ToolSampler, ToolSpec, ToolWorld,
    WorldSuite,
};
pub use toy::{ToySampler, ToySamplerMode, ToyWorld};

pub trait Environment: Send + Sync {
    /// Short identifier of the world family ("toy", "tools").
    fn kind(&self) -> &'static str;

    fn context(&self) -> TaskContext;

    fn initial_state(&self) -> State;

    /// Deterministic in `(state, action)` and the world's seed.
    fn step(&self, state: &State, action: &Action) -> Transition;

    fn is_finish(&self, action: &Action) -> bool;

    /// Hidden value of a (possibly partial) path. Only simulated judges and
    /// the metrics layer may look at it.
    fn true_utility(&self, path: &[Transition]) -> f64;

    /// Whether a path counts as solving the task.
    fn is_success(&self, path: &[Transition]) -> bool;

    fn utility_bounds(&self) -> (f64, f64);
}

pub trait ActionSampler: Send + Sync {
    fn propose(&self, state: &State, history: &[Transition], rng: &mut SearchRng) -> Action;

    /// Proposes an action different from every entry of `tried`, or `None`
    /// when the sampler cannot come up with one.
    fn propose_excluding(
        &self,
        state: &State,
        history: &[Transition],
        tried: &[Action],
        rng: &mut SearchRng,
    ) -> Option<Action> {
        const ATTEMPTS: usize = 16;
        (0..ATTEMPTS)
            .map(|_| self.propose(state, history, rng))
            .find(|a| !tried.contains(a))
    }
}

/// A world together with the sampler that acts in it.
pub struct Task {
    pub id: String,
    pub environment: Box<dyn Environment>,
    pub sampler: Box<dyn ActionSampler>,
}

impl std::fmt::Debug for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Task")
            .field("id", &self.id)
            .field("kind", &self.environment.kind())
            .finish()
    }
}
