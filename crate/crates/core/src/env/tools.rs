//! Synthetic tool-use world with hidden utilities and injected faults.
//!
//! A task declares a set of tools. Successful calls to useful tools add their
//! utility once; the finish action adds a bonus and ends the episode. Faults
//! never abort anything: unavailable tools, malformed calls and made-up tool
//! names all come back as error observations the searcher has to recover from.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ActionSampler, Environment};
use crate::error::{Error, Result};
use crate::judges::TaskContext;
use crate::rng::{hash_bytes, mix64, unit_from_hash, SearchRng};
use crate::tree::{Action, State, Transition};

pub const FINISH: &str = "finish";

/// Observation prefixes. The failure classifier keys on these.
pub const MARK_OK: &str = "ok:";
pub const MARK_UNAVAILABLE: &str = "error[unavailable]:";
pub const MARK_CALL_ERROR: &str = "error[call]:";
pub const MARK_HALLUCINATED: &str = "error[hallucinated]:";
pub const MARK_FINISH: &str = "finish:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    String,
    Number,
    Boolean,
}

impl ParamKind {
    fn accepts(self, value: &Value) -> bool {
        match self {
            ParamKind::String => value.is_string(),
            ParamKind::Number => value.is_number(),
            ParamKind::Boolean => value.is_boolean(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub required: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FailureMode {
    None,
    /// Every call fails, like a tool answering 404.
    Unavailable,
    /// Each call fails independently with probability `p`, like a flaky 500.
    Flaky {
        p: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
    pub failure_mode: FailureMode,
    /// Added once, the first time the tool is called successfully.
    pub utility: f64,
}

/// How the simulated model behaves when proposing actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerProfile {
    /// Probability of calling a tool that does not exist.
    pub hallucination_rate: f64,
    /// Probability that a call omits a required parameter or mistypes one.
    pub param_error_rate: f64,
    /// After an error observation, probability of repeating the same call verbatim.
    pub loop_rate: f64,
    pub finish_base: f64,
    /// Added to the finish probability per useful tool already called successfully.
    pub finish_per_success: f64,
    /// Relative preference per tool name; missing tools weigh 1.
    pub tool_weights: BTreeMap<String, f64>,
    /// Weight multiplier for tools that already succeeded once.
    pub repeat_penalty: f64,
    /// Probability of finishing as soon as the successful calls so far meet
    /// the task's requirement (a model that recognizes it is done).
    #[serde(default)]
    pub finish_when_done: f64,
}

impl Default for SamplerProfile {
    fn default() -> Self {
        Self {
            hallucination_rate: 0.0,
            param_error_rate: 0.0,
            loop_rate: 0.0,
            finish_base: 0.1,
            finish_per_success: 0.2,
            tool_weights: BTreeMap::new(),
            repeat_penalty: 0.2,
            finish_when_done: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub id: String,
    pub description: String,
    pub query: String,
    pub tools: Vec<ToolSpec>,
    pub finish_bonus: f64,
    /// A finished path succeeds when its utility reaches this value.
    pub success_threshold: f64,
    pub sampler: SamplerProfile,
    /// Seeds the world's fault coin flips.
    pub seed: u64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tools.is_empty() {
            return Err(Error::invalid(format!("task {} declares no tools", self.id)));
        }
        if self.query.trim().is_empty() {
            return Err(Error::invalid(format!("task {} has an empty query", self.id)));
        }
        let mut names = BTreeSet::new();
        for tool in &self.tools {
            if tool.name == FINISH || !names.insert(tool.name.as_str()) {
                return Err(Error::invalid(format!(
                    "task {}: duplicate or reserved tool name {}",
                    self.id, tool.name
                )));
            }
            if let FailureMode::Flaky { p } = tool.failure_mode {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::invalid(format!(
                        "tool {}: flaky probability {p} outside [0, 1]",
                        tool.name
                    )));
                }
            }
            if !tool.utility.is_finite() {
                return Err(Error::invalid(format!("tool {}: utility must be finite", tool.name)));
            }
        }
        let s = &self.sampler;
        for (name, v) in [
            ("hallucination_rate", s.hallucination_rate),
            ("param_error_rate", s.param_error_rate),
            ("loop_rate", s.loop_rate),
            ("finish_base", s.finish_base),
            ("finish_when_done", s.finish_when_done),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "task {}: sampler {name}={v} outside [0, 1]",
                    self.id
                )));
            }
        }
        Ok(())
    }

    pub fn context(&self) -> TaskContext {
        TaskContext::new(self.description.clone(), self.query.clone())
    }
}

/// Contract for plugging real tool endpoints in place of the simulation.
///
/// An implementation maps each failure onto a [`BackendFault`] so that the
/// same observation markers (and therefore the same failure taxonomy) apply.
pub trait ToolBackend: Send + Sync {
    fn tools(&self) -> Vec<ToolSpec>;

    fn invoke(&self, tool: &str, arguments: &BTreeMap<String, Value>) -> std::result::Result<String, BackendFault>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendFault {
    Unavailable(String),
    CallError(String),
    UnknownTool(String),
}

impl BackendFault {
    pub fn observation(&self) -> String {
        match self {
            BackendFault::Unavailable(m) => format!("{MARK_UNAVAILABLE} {m}"),
            BackendFault::CallError(m) => format!("{MARK_CALL_ERROR} {m}"),
            BackendFault::UnknownTool(m) => format!("{MARK_HALLUCINATED} {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolWorld {
    spec: TaskSpec,
}

fn successes_of(state: &State) -> Vec<String> {
    state.payload["successes"]
        .as_array()
        .map(|a| a.iter().filter_map(|v| v.as_str().map(String::from)).collect())
        .unwrap_or_default()
}

fn step_of(state: &State) -> u64 {
    state.payload["step"].as_u64().unwrap_or(0)
}

impl ToolWorld {
    pub fn new(spec: TaskSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn tool(&self, name: &str) -> Option<&ToolSpec> {
        self.spec.tools.iter().find(|t| t.name == name)
    }

    pub fn sampler(&self) -> ToolSampler {
        ToolSampler {
            tools: self.spec.tools.clone(),
            profile: self.spec.sampler.clone(),
            required_utility: self.spec.success_threshold - self.spec.finish_bonus,
        }
    }

    fn call(&self, state: &State, action: &Action) -> (String, bool) {
        let Some(tool) = self.tool(&action.name) else {
            return (
                format!("{MARK_HALLUCINATED} tool `{}` does not exist", action.name),
                false,
            );
        };
        if tool.failure_mode == FailureMode::Unavailable {
            return (format!("{MARK_UNAVAILABLE} `{}` answered HTTP 404", tool.name), false);
        }
        let missing: Vec<&str> = tool
            .params
            .iter()
            .filter(|p| p.required && !action.arguments.contains_key(&p.name))
            .map(|p| p.name.as_str())
            .collect();
        if !missing.is_empty() {
            return (
                format!(
                    "{MARK_CALL_ERROR} `{}` missing mandatory parameter fields: {}",
                    tool.name,
                    missing.join(", ")
                ),
                false,
            );
        }
        if let Some(bad) = tool
            .params
            .iter()
            .find(|p| action.arguments.get(&p.name).is_some_and(|v| !p.kind.accepts(v)))
        {
            return (
                format!(
                    "{MARK_CALL_ERROR} `{}` parameter format mismatch for {}",
                    tool.name, bad.name
                ),
                false,
            );
        }
        let coin = {
            let key = format!("{}|{}|{}", state.payload, action.name, action.arguments_json());
            hash_bytes(self.spec.seed, key.as_bytes())
        };
        if let FailureMode::Flaky { p } = tool.failure_mode {
            if unit_from_hash(coin) < p {
                return (format!("{MARK_UNAVAILABLE} `{}` answered HTTP 500", tool.name), false);
            }
        }
        (
            format!("{MARK_OK} `{}` returned result {:06x}", tool.name, coin & 0xff_ffff),
            true,
        )
    }
}

impl Environment for ToolWorld {
    fn kind(&self) -> &'static str {
        "tools"
    }

    fn context(&self) -> TaskContext {
        self.spec.context()
    }

    fn initial_state(&self) -> State {
        State::new(json!({ "step": 0, "successes": [], "finished": false }), false)
    }

    fn step(&self, state: &State, action: &Action) -> Transition {
        let step = step_of(state) + 1;
        let mut successes = successes_of(state);
        if action.name == FINISH {
            return Transition {
                action: action.clone(),
                observation: format!("{MARK_FINISH} final answer submitted"),
                state: State::new(json!({ "step": step, "successes": successes, "finished": true }), true),
                finish: true,
            };
        }
        let (observation, ok) = self.call(state, action);
        if ok && !successes.contains(&action.name) {
            successes.push(action.name.clone());
        }
        Transition {
            action: action.clone(),
            observation,
            state: State::new(
                json!({ "step": step, "successes": successes, "finished": false }),
                false,
            ),
            finish: false,
        }
    }

    fn is_finish(&self, action: &Action) -> bool {
        action.name == FINISH
    }

    fn true_utility(&self, path: &[Transition]) -> f64 {
        let Some(last) = path.last() else {
            return 0.0;
        };
        let gained: f64 = successes_of(&last.state)
            .iter()
            .filter_map(|name| self.tool(name))
            .map(|t| t.utility)
            .sum();
        gained + if last.finish { self.spec.finish_bonus } else { 0.0 }
    }

    fn is_success(&self, path: &[Transition]) -> bool {
        path.last().is_some_and(|t| t.finish) && self.true_utility(path) >= self.spec.success_threshold
    }

    fn utility_bounds(&self) -> (f64, f64) {
        let neg: f64 = self.spec.tools.iter().map(|t| t.utility.min(0.0)).sum();
        let pos: f64 = self.spec.tools.iter().map(|t| t.utility.max(0.0)).sum();
        (neg.min(0.0), pos + self.spec.finish_bonus.max(0.0))
    }
}

/// Stand-in for the model driving a tool world.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolSampler {
    tools: Vec<ToolSpec>,
    profile: SamplerProfile,
    /// Utility from tool calls alone that satisfies the task.
    required_utility: f64,
}

const HALLUCINATION_SUFFIXES: [&str; 4] = ["_v2", "_pro", "_lookup_all", "_search_api"];

impl ToolSampler {
    fn arguments(&self, tool: &ToolSpec, rng: &mut SearchRng) -> BTreeMap<String, Value> {
        let mut args = BTreeMap::new();
        for p in &tool.params {
            if p.required || rng.random_bool(0.5) {
                let v = match p.kind {
                    ParamKind::String => json!(format!("{}_{}", p.name, rng.random_range(1..=3))),
                    ParamKind::Number => json!(rng.random_range(1..=5)),
                    ParamKind::Boolean => json!(rng.random_bool(0.5)),
                };
                args.insert(p.name.clone(), v);
            }
        }
        if rng.random_bool(self.profile.param_error_rate) {
            let required: Vec<&ParamSpec> = tool.params.iter().filter(|p| p.required).collect();
            if let Some(p) = required.choose(rng) {
                if rng.random_bool(0.5) {
                    args.remove(&p.name);
                } else {
                    let wrong = match p.kind {
                        ParamKind::Number | ParamKind::Boolean => json!("not-a-value"),
                        ParamKind::String => json!(0),
                    };
                    args.insert(p.name.clone(), wrong);
                }
            }
        }
        args
    }
}

impl ActionSampler for ToolSampler {
    fn propose(&self, _state: &State, history: &[Transition], rng: &mut SearchRng) -> Action {
        if let Some(last) = history.last() {
            if last.observation.starts_with("error[") && rng.random_bool(self.profile.loop_rate) {
                return last.action.clone();
            }
        }
        let succeeded: BTreeSet<&str> = history
            .iter()
            .filter(|t| t.observation.starts_with(MARK_OK))
            .map(|t| t.action.name.as_str())
            .collect();
        let useful = self
            .tools
            .iter()
            .filter(|t| t.utility > 0.0 && succeeded.contains(t.name.as_str()))
            .count();
        if self.profile.finish_when_done > 0.0 {
            let gained: f64 = self
                .tools
                .iter()
                .filter(|t| succeeded.contains(t.name.as_str()))
                .map(|t| t.utility)
                .sum();
            if gained >= self.required_utility && rng.random_bool(self.profile.finish_when_done.min(1.0)) {
                return Action::new(FINISH);
            }
        }
        let p_finish = (self.profile.finish_base + self.profile.finish_per_success * useful as f64).clamp(0.0, 0.95);
        if rng.random_bool(p_finish) {
            return Action::new(FINISH);
        }
        if rng.random_bool(self.profile.hallucination_rate) {
            let base = self.tools.choose(rng).expect("worlds declare at least one tool");
            let suffix = HALLUCINATION_SUFFIXES.choose(rng).expect("non-empty");
            let name = format!("{}{}", base.name, suffix);
            if !self.tools.iter().any(|t| t.name == name) {
                return Action {
                    name,
                    arguments: self.arguments(base, rng),
                };
            }
        }
        let weights: Vec<f64> = self
            .tools
            .iter()
            .map(|t| {
                let w = self.profile.tool_weights.get(&t.name).copied().unwrap_or(1.0).max(0.0);
                if succeeded.contains(t.name.as_str()) {
                    w * self.profile.repeat_penalty
                } else {
                    w
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let tool = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = &self.tools[self.tools.len() - 1];
            for (t, w) in self.tools.iter().zip(&weights) {
                u -= w;
                if u < 0.0 {
                    pick = t;
                    break;
                }
            }
            pick
        } else {
            self.tools.choose(rng).expect("non-empty")
        };
        Action {
            name: tool.name.clone(),
            arguments: self.arguments(tool, rng),
        }
    }
}

pub const WORLD_FORMAT: &str = "elosearch-world";
pub const WORLD_VERSION: u32 = 1;

/// A versioned collection of tool-world tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSuite {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub tier: String,
    pub tasks: Vec<TaskSpec>,
}

impl WorldSuite {
    pub fn from_json(text: &str) -> Result<Self> {
        let header: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "world suite".into(),
            message: e.to_string(),
        })?;
        if header.get("format").and_then(Value::as_str) != Some(WORLD_FORMAT) {
            return Err(Error::Parse {
                what: "world suite".into(),
                message: format!("missing or wrong format tag (expected {WORLD_FORMAT:?})"),
            });
        }
        let version = header.get("version").and_then(Value::as_u64).unwrap_or(0) as u32;
        if version != WORLD_VERSION {
            return Err(Error::IncompatibleVersion {
                kind: WORLD_FORMAT.into(),
                expected: WORLD_VERSION,
                found: version,
            });
        }
        let suite: WorldSuite = serde_json::from_value(header).map_err(|e| Error::Parse {
            what: "world suite".into(),
            message: e.to_string(),
        })?;
        for task in &suite.tasks {
            task.validate()?;
        }
        Ok(suite)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("suite serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Builds a suite of `n` generated tasks for one difficulty tier
    /// (`easy`, `medium` or `hard`). Same arguments, same suite.
    pub fn generate(tier: &str, n: usize, seed: u64) -> Result<Self> {
        let params = TierParams::for_tier(tier)?;
        let tasks = (0..n)
            .map(|i| generate_task(&params, tier, i, mix64(seed ^ mix64(i as u64))))
            .collect();
        Ok(Self {
            format: WORLD_FORMAT.into(),
            version: WORLD_VERSION,
            name: format!("{tier}-{n}"),
            tier: tier.into(),
            tasks,
        })
    }
}

struct TierParams {
    core_tools: (usize, usize),
    decoy_tools: (usize, usize),
    core_utility: f64,
    decoy_utility: f64,
    finish_bonus: f64,
    unavailable_rate: f64,
    flaky_rate: f64,
    flaky_p: f64,
    sampler: SamplerProfile,
    decoy_weight: (f64, f64),
}

impl TierParams {
    fn for_tier(tier: &str) -> Result<Self> {
        let base = SamplerProfile {
            hallucination_rate: 0.1,
            param_error_rate: 0.2,
            loop_rate: 0.9,
            finish_base: 0.04,
            finish_per_success: 0.08,
            tool_weights: BTreeMap::new(),
            repeat_penalty: 0.15,
            finish_when_done: 0.8,
        };
        match tier {
            "easy" => Ok(Self {
                core_tools: (2, 2),
                decoy_tools: (2, 3),
                core_utility: 1.5,
                decoy_utility: 0.3,
                finish_bonus: 1.0,
                unavailable_rate: 0.0,
                flaky_rate: 0.1,
                flaky_p: 0.3,
                sampler: SamplerProfile {
                    hallucination_rate: 0.05,
                    param_error_rate: 0.1,
                    loop_rate: 0.6,
                    finish_when_done: 0.9,
                    ..base
                },
                decoy_weight: (0.5, 1.0),
            }),
            "medium" => Ok(Self {
                core_tools: (2, 3),
                decoy_tools: (3, 5),
                core_utility: 1.5,
                decoy_utility: 0.3,
                finish_bonus: 1.0,
                unavailable_rate: 0.05,
                flaky_rate: 0.25,
                flaky_p: 0.3,
                sampler: base,
                decoy_weight: (1.0, 1.8),
            }),
            "hard" => Ok(Self {
                core_tools: (3, 4),
                decoy_tools: (4, 6),
                core_utility: 1.5,
                decoy_utility: 0.3,
                finish_bonus: 1.0,
                unavailable_rate: 0.05,
                flaky_rate: 0.35,
                flaky_p: 0.3,
                sampler: base,
                decoy_weight: (1.5, 2.5),
            }),
            other => Err(Error::invalid(format!(
                "unknown tier {other:?} (expected easy, medium or hard)"
            ))),
        }
    }
}

const DOMAINS: [(&str, [&str; 6]); 6] = [
    (
        "travel",
        [
            "flight_search",
            "hotel_rates",
            "visa_rules",
            "weather_forecast",
            "currency_convert",
            "city_guide",
        ],
    ),
    (
        "finance",
        [
            "stock_quote",
            "company_profile",
            "fx_rates",
            "earnings_calendar",
            "news_sentiment",
            "crypto_price",
        ],
    ),
    (
        "music",
        [
            "track_search",
            "artist_info",
            "lyrics_fetch",
            "chart_positions",
            "concert_dates",
            "playlist_build",
        ],
    ),
    (
        "sports",
        [
            "match_scores",
            "team_roster",
            "league_table",
            "player_stats",
            "fixture_list",
            "venue_info",
        ],
    ),
    (
        "food",
        [
            "recipe_search",
            "nutrition_facts",
            "restaurant_finder",
            "menu_lookup",
            "wine_pairing",
            "grocery_prices",
        ],
    ),
    (
        "media",
        [
            "movie_search",
            "cast_lookup",
            "streaming_availability",
            "box_office",
            "review_scores",
            "trailer_links",
        ],
    ),
];

const DECOY_SUFFIXES: [&str; 3] = ["_basic", "_legacy", "_lite"];
const PARAM_NAMES: [&str; 8] = [
    "query", "id", "date", "limit", "region", "language", "currency", "category",
];

fn generate_task(p: &TierParams, tier: &str, index: usize, seed: u64) -> TaskSpec {
    let mut rng = SearchRng::seed_from_u64(seed);
    let (domain, names) = DOMAINS[rng.random_range(0..DOMAINS.len())];
    let n_core = rng.random_range(p.core_tools.0..=p.core_tools.1);
    let n_decoy = rng.random_range(p.decoy_tools.0..=p.decoy_tools.1);

    let mut pool: Vec<&str> = names.to_vec();
    let mut core_names = Vec::new();
    for _ in 0..n_core {
        let i = rng.random_range(0..pool.len());
        core_names.push(pool.remove(i).to_string());
    }
    let mut decoy_names = Vec::new();
    for k in 0..n_decoy {
        // Half the decoys shadow a core tool with a similar name.
        let name = if k % 2 == 0 && k / 2 < core_names.len() {
            let suffix = DECOY_SUFFIXES[rng.random_range(0..DECOY_SUFFIXES.len())];
            format!("{}{}", core_names[k / 2], suffix)
        } else if !pool.is_empty() {
            let i = rng.random_range(0..pool.len());
            pool.remove(i).to_string()
        } else {
            format!("{domain}_misc_{k}")
        };
        if !decoy_names.contains(&name) && !core_names.contains(&name) {
            decoy_names.push(name);
        }
    }

    let make_params = |rng: &mut SearchRng| {
        let n = rng.random_range(1..=3usize);
        let mut names: Vec<&str> = PARAM_NAMES.to_vec();
        (0..n)
            .map(|j| {
                let i = rng.random_range(0..names.len());
                let name = names.remove(i);
                let kind = match rng.random_range(0..4) {
                    0 => ParamKind::Number,
                    1 if j > 0 => ParamKind::Boolean,
                    _ => ParamKind::String,
                };
                ParamSpec {
                    name: name.into(),
                    kind,
                    required: j == 0 || rng.random_bool(0.4),
                }
            })
            .collect::<Vec<_>>()
    };
    let failure = |rng: &mut SearchRng| {
        if rng.random_bool(p.unavailable_rate) {
            FailureMode::Unavailable
        } else if rng.random_bool(p.flaky_rate) {
            FailureMode::Flaky { p: p.flaky_p }
        } else {
            FailureMode::None
        }
    };

    let mut tools = Vec::new();
    let mut weights = BTreeMap::new();
    for name in &core_names {
        tools.push(ToolSpec {
            name: name.clone(),
            description: format!("{} for {domain} requests", name.replace('_', " ")),
            params: make_params(&mut rng),
            failure_mode: failure(&mut rng),
            utility: p.core_utility,
        });
        weights.insert(name.clone(), 1.0);
    }
    for name in &decoy_names {
        tools.push(ToolSpec {
            name: name.clone(),
            description: format!("{} (partial coverage)", name.replace('_', " ")),
            params: make_params(&mut rng),
            failure_mode: failure(&mut rng),
            utility: p.decoy_utility,
        });
        let w = rng.random_range(p.decoy_weight.0..=p.decoy_weight.1);
        weights.insert(name.clone(), (w * 100.0).round() / 100.0);
    }
    // Present tools in a shuffled order so position carries no signal.
    for i in (1..tools.len()).rev() {
        let j = rng.random_range(0..=i);
        tools.swap(i, j);
    }

    let threshold = p.core_utility * core_names.len() as f64 + p.finish_bonus;
    TaskSpec {
        id: format!("{tier}-{index:03}"),
        description: format!("Answer a {domain} request using the available tools."),
        query: format!(
            "Use {} to gather what is needed, then give the final answer.",
            core_names.join(" and ")
        ),
        tools,
        finish_bonus: p.finish_bonus,
        success_threshold: threshold,
        sampler: SamplerProfile {
            tool_weights: weights,
            ..p.sampler.clone()
        },
        seed: rng.random(),
    }
}
