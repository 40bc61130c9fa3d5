//! Fully enumerable world: `depth` rounds of choosing one of `branching`
//! options, then a finish step. Every full path maps to one utility table entry.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ActionSampler, Environment};
use crate::error::{Error, Result};
use crate::judges::TaskContext;
use crate::rng::{hash_bytes, SearchRng};
use crate::tree::{Action, State, Transition};

pub const FINISH: &str = "finish";

#[derive(Debug, Clone, PartialEq)]
pub struct ToyWorld {
    branching: u32,
    depth: u32,
    table: Vec<f64>,
    seed: u64,
    success_threshold: f64,
}

fn choice_name(k: u32) -> String {
    format!("choice_{k}")
}

fn parse_choice(action: &Action, branching: u32) -> Option<u32> {
    action
        .name
        .strip_prefix("choice_")
        .and_then(|k| k.parse::<u32>().ok())
        .filter(|k| (1..=branching).contains(k))
}

fn path_of(state: &State) -> Vec<u32> {
    state.payload["path"]
        .as_array()
        .map(|a| a.iter().filter_map(|v| v.as_u64()).map(|v| v as u32).collect())
        .unwrap_or_default()
}

impl ToyWorld {
    /// `table[i]` is the utility of the path whose choices, read as base-`b`
    /// digits (most significant first, `choice_k` as digit `k - 1`), equal `i`.
    /// Success means finishing on a path whose utility reaches the table maximum.
    pub fn new(branching: u32, depth: u32, table: Vec<f64>, seed: u64) -> Result<Self> {
        if branching < 2 || depth < 1 {
            return Err(Error::invalid("toy world needs branching >= 2 and depth >= 1"));
        }
        let expected = (branching as usize)
            .checked_pow(depth)
            .ok_or_else(|| Error::invalid("toy world too large"))?;
        if table.len() != expected {
            return Err(Error::invalid(format!(
                "utility table has {} entries, expected {expected}",
                table.len()
            )));
        }
        if table.iter().any(|u| !u.is_finite()) {
            return Err(Error::invalid("utility table entries must be finite"));
        }
        let max = table.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            branching,
            depth,
            table,
            seed,
            success_threshold: max,
        })
    }

    pub fn with_success_threshold(mut self, threshold: f64) -> Self {
        self.success_threshold = threshold;
        self
    }

    pub fn branching(&self) -> u32 {
        self.branching
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    fn index_of(&self, path: &[u32]) -> usize {
        path.iter()
            .fold(0usize, |acc, &k| acc * self.branching as usize + (k as usize - 1))
    }

    /// Every full path with its utility, in canonical (lexicographic) order.
    pub fn enumerate(&self) -> Vec<(Vec<u32>, f64)> {
        (0..self.table.len())
            .map(|mut i| {
                let mut path = vec![0u32; self.depth as usize];
                for slot in path.iter_mut().rev() {
                    *slot = (i % self.branching as usize) as u32 + 1;
                    i /= self.branching as usize;
                }
                let u = self.table[self.index_of(&path)];
                (path, u)
            })
            .collect()
    }

    /// Brute-force argmax; the first path in canonical order wins ties.
    pub fn optimum(&self) -> (Vec<u32>, f64) {
        self.enumerate()
            .into_iter()
            .fold(None::<(Vec<u32>, f64)>, |best, (p, u)| match best {
                Some((bp, bu)) if bu >= u => Some((bp, bu)),
                _ => Some((p, u)),
            })
            .expect("table is non-empty")
    }

    /// Choices along a path of transitions.
    pub fn choices(path: &[Transition]) -> Vec<u32> {
        path.last().map(|t| path_of(&t.state)).unwrap_or_default()
    }

    fn utility_of_prefix(&self, prefix: &[u32]) -> f64 {
        let remaining = self.depth as usize - prefix.len();
        let span = (self.branching as usize).pow(remaining as u32);
        let start = self.index_of(prefix) * span;
        let slice = &self.table[start..start + span];
        slice.iter().sum::<f64>() / span as f64
    }
}

impl Environment for ToyWorld {
    fn kind(&self) -> &'static str {
        "toy"
    }

    fn context(&self) -> TaskContext {
        TaskContext::new(
            format!(
                "Pick one of {} options at each of {} rounds, then finish.",
                self.branching, self.depth
            ),
            "Find the sequence of choices with the highest payoff.",
        )
    }

    fn initial_state(&self) -> State {
        State::new(json!({ "path": [], "steps": 0, "finished": false }), false)
    }

    fn step(&self, state: &State, action: &Action) -> Transition {
        let mut path = path_of(state);
        let steps = state.payload["steps"].as_u64().unwrap_or(0) + 1;
        let at_bottom = path.len() as u32 == self.depth;
        let (observation, finished) = match parse_choice(action, self.branching) {
            Some(k) if !at_bottom => {
                path.push(k);
                let bytes: Vec<u8> = path.iter().flat_map(|k| k.to_le_bytes()).collect();
                let token = hash_bytes(self.seed, &bytes) & 0xffff_ffff;
                (format!("took option {k}; now at node {token:08x}"), false)
            }
            _ if action.name == FINISH && at_bottom => ("final answer submitted".to_string(), true),
            _ => (format!("action {} is not available here", action.name), false),
        };
        Transition {
            action: action.clone(),
            observation,
            state: State::new(json!({ "path": path, "steps": steps, "finished": finished }), finished),
            finish: finished,
        }
    }

    fn is_finish(&self, action: &Action) -> bool {
        action.name == FINISH
    }

    fn true_utility(&self, path: &[Transition]) -> f64 {
        self.utility_of_prefix(&Self::choices(path))
    }

    fn is_success(&self, path: &[Transition]) -> bool {
        path.last().is_some_and(|t| t.finish && t.state.terminal) && self.true_utility(path) >= self.success_threshold
    }

    fn utility_bounds(&self) -> (f64, f64) {
        let lo = self.table.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.table.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToySamplerMode {
    /// Uniform over the options.
    Uniform,
    /// Always the lowest-numbered option not yet tried.
    Canonical,
    /// Options drawn with the given (unnormalized) weights.
    Weighted(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySampler {
    branching: u32,
    depth: u32,
    mode: ToySamplerMode,
}

impl ToySampler {
    pub fn new(branching: u32, depth: u32, mode: ToySamplerMode) -> Self {
        Self { branching, depth, mode }
    }

    fn candidates(&self, state: &State) -> Vec<Action> {
        if path_of(state).len() as u32 >= self.depth {
            vec![Action::new(FINISH)]
        } else {
            (1..=self.branching).map(|k| Action::new(choice_name(k))).collect()
        }
    }

    fn pick(&self, options: &[(u32, Action)], rng: &mut SearchRng) -> Action {
        match &self.mode {
            ToySamplerMode::Canonical => options[0].1.clone(),
            ToySamplerMode::Uniform => options[rng.random_range(0..options.len())].1.clone(),
            ToySamplerMode::Weighted(w) => {
                let weight = |k: u32| w.get(k as usize).copied().unwrap_or(1.0).max(0.0);
                let total: f64 = options.iter().map(|(k, _)| weight(*k)).sum();
                if total <= 0.0 {
                    return options[0].1.clone();
                }
                let mut u = rng.random::<f64>() * total;
                for (k, a) in options {
                    u -= weight(*k);
                    if u < 0.0 {
                        return a.clone();
                    }
                }
                options[options.len() - 1].1.clone()
            }
        }
    }
}

impl ActionSampler for ToySampler {
    fn propose(&self, state: &State, _history: &[Transition], rng: &mut SearchRng) -> Action {
        let options: Vec<(u32, Action)> = self
            .candidates(state)
            .into_iter()
            .enumerate()
            .map(|(i, a)| (i as u32, a))
            .collect();
        self.pick(&options, rng)
    }

    fn propose_excluding(
        &self,
        state: &State,
        _history: &[Transition],
        tried: &[Action],
        rng: &mut SearchRng,
    ) -> Option<Action> {
        let options: Vec<(u32, Action)> = self
            .candidates(state)
            .into_iter()
            .enumerate()
            .map(|(i, a)| (i as u32, a))
            .filter(|(_, a)| !tried.contains(a))
            .collect();
        if options.is_empty() {
            None
        } else {
            Some(self.pick(&options, rng))
        }
    }
}
