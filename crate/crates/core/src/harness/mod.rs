//! Running searches end to end: the explore/judge loop, final selection,
//! self-contained run records, suites and their metrics.

pub mod config;
pub mod metrics;
pub mod persist;
pub mod suite;

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    bfs_search, cot_at_k_search, cot_search, dfs_search, dfsdt_search, BaselineSettings, SearchFlag, SearchInputs,
    SearcherResult,
};
use crate::budget::{Budget, CallLedger};
use crate::elo::EloConfig;
use crate::env::{
    classify_failure, ActionSampler, Environment, FailureReport, Task, TaskSpec, ToolWorld, ToySampler, ToySamplerMode,
    ToyWorld,
};
use crate::error::{Error, Result};
use crate::explore::{explore_once, ExplorationPolicy, ExplorationTrace};
use crate::judges::{
    render_sequence_for_judge, Judge, LlmJudge, OracleJudge, RateLimiter, RemoteJudgeConfig, ReplayJudge, ReplayRecord,
    Trail,
};
use crate::judgment::{judge_new_sequence, JudgmentEvent, JudgmentSettings};
use crate::tree::{DecisionSequence, DecisionTree};

pub use persist::{RUN_FORMAT, RUN_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Judec,
    /// The same search, with the final answer drawn uniformly from the
    /// completed sequences instead of by score.
    JudecRandSelect,
    Cot,
    CotAtK,
    Bfs,
    Dfs,
    Dfsdt,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Judec,
        Method::JudecRandSelect,
        Method::Cot,
        Method::CotAtK,
        Method::Bfs,
        Method::Dfs,
        Method::Dfsdt,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Judec => "judec",
            Method::JudecRandSelect => "judec_rand_select",
            Method::Cot => "cot",
            Method::CotAtK => "cot_at_k",
            Method::Bfs => "bfs",
            Method::Dfs => "dfs",
            Method::Dfsdt => "dfsdt",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Every knob a single search reads. Embedded verbatim in each run record.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub elo: EloConfig,
    pub budget: Budget,
    pub judgment: JudgmentSettings,
    pub baselines: BaselineSettings,
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        self.elo.validate()?;
        self.budget.validate()?;
        self.baselines.validate()?;
        if self.judgment.comparisons_per_new_sequence == 0 {
            return Err(Error::invalid("comparisons_per_new_sequence must be positive"));
        }
        Ok(())
    }

    pub fn with_calls(mut self, max_calls: u32) -> Self {
        self.budget.max_calls = max_calls;
        self
    }
}

/// Parameters of a toy world together with the sampler acting in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySpec {
    pub id: String,
    pub branching: u32,
    pub depth: u32,
    pub table: Vec<f64>,
    pub seed: u64,
    /// Defaults to the table maximum.
    #[serde(default)]
    pub success_threshold: Option<f64>,
    pub sampler: ToySamplerMode,
}

/// A task description complete enough to rebuild the world from a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "spec", rename_all = "snake_case")]
pub enum TaskSource {
    Toy(ToySpec),
    Tools(TaskSpec),
}

impl TaskSource {
    pub fn id(&self) -> &str {
        match self {
            TaskSource::Toy(t) => &t.id,
            TaskSource::Tools(t) => &t.id,
        }
    }

    pub fn build(&self) -> Result<Task> {
        match self {
            TaskSource::Toy(t) => {
                let mut world = ToyWorld::new(t.branching, t.depth, t.table.clone(), t.seed)?;
                if let Some(th) = t.success_threshold {
                    world = world.with_success_threshold(th);
                }
                Ok(Task {
                    id: t.id.clone(),
                    environment: Box::new(world),
                    sampler: Box::new(ToySampler::new(t.branching, t.depth, t.sampler.clone())),
                })
            }
            TaskSource::Tools(spec) => {
                let world = ToolWorld::new(spec.clone())?;
                let sampler = world.sampler();
                Ok(Task {
                    id: spec.id.clone(),
                    environment: Box::new(world),
                    sampler: Box::new(sampler),
                })
            }
        }
    }
}

/// Which judge a run uses. Remote runs cannot be replayed bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JudgeSpec {
    Oracle { sigma: f64 },
    Replay { verdicts: Vec<ReplayRecord> },
    Remote { config: RemoteJudgeConfig },
}

impl JudgeSpec {
    pub fn is_reproducible(&self) -> bool {
        !matches!(self, JudgeSpec::Remote { .. })
    }

    /// A fresh judge. Replay judges restart their script on every call.
    pub fn build(&self, limiter: Option<&Arc<RateLimiter>>) -> Result<Box<dyn Judge>> {
        Ok(match self {
            JudgeSpec::Oracle { sigma } => Box::new(OracleJudge::new(*sigma)?),
            JudgeSpec::Replay { verdicts } => Box::new(ReplayJudge::new(verdicts.clone())),
            JudgeSpec::Remote { config } => {
                let limiter = match limiter {
                    Some(l) => Arc::clone(l),
                    None => RateLimiter::new(config.max_in_flight, Duration::from_millis(config.min_interval_ms)),
                };
                Box::new(LlmJudge::new(config.clone(), limiter)?)
            }
        })
    }
}

/// One explore-then-judge iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub exploration: ExplorationTrace,
    pub judgments: Vec<JudgmentEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudecRun {
    pub rounds: Vec<Round>,
    /// Completed sequences in creation order; `selected` is the top score.
    pub result: SearcherResult,
    /// Index into `result.sequences` drawn uniformly at random.
    pub rand_selected: Option<usize>,
}

/// The completed leaf with the highest score; the earliest one on ties.
pub fn select_optimum(tree: &DecisionTree) -> Result<DecisionSequence> {
    let mut best: Option<(f64, crate::tree::NodeId)> = None;
    for leaf in tree.completed_leaves() {
        if best.is_none_or(|(elo, _)| leaf.elo > elo) {
            best = Some((leaf.elo, leaf.id));
        }
    }
    let (_, id) = best.ok_or_else(|| Error::NotFound("no completed sequence to select".into()))?;
    tree.sequence_of(id)
}

/// Alternates exploration and judgment until the exploration count or the
/// call budget runs out, then picks the top-scoring completed sequence.
pub fn run_judec(
    env: &dyn Environment,
    sampler: &dyn ActionSampler,
    judge: &mut dyn Judge,
    config: &SearchConfig,
    seed: u64,
) -> Result<JudecRun> {
    config.validate()?;
    let mut tree = DecisionTree::new(env.initial_state(), config.elo)?;
    let policy = ExplorationPolicy::new(config.elo, config.budget.max_steps_per_sequence, seed)?;
    let mut streams = policy.streams();
    let mut ledger = CallLedger::new(config.budget.max_calls);
    let mut flags = BTreeSet::new();
    let mut rounds = Vec::new();

    for _ in 0..config.budget.max_explorations {
        let exploration = match explore_once(&mut tree, env, sampler, &policy, &mut streams, &mut ledger) {
            Ok(t) => t,
            Err(Error::BudgetExhausted { .. }) => {
                flags.insert(SearchFlag::BudgetExhausted);
                break;
            }
            Err(e) => return Err(e),
        };
        if exploration.rollout.truncated {
            flags.insert(SearchFlag::BudgetExhausted);
            rounds.push(Round {
                exploration,
                judgments: Vec::new(),
            });
            break;
        }
        let judgments = judge_new_sequence(
            &mut tree,
            exploration.rollout.leaf,
            judge,
            env,
            &config.judgment,
            &mut streams,
            &mut ledger,
        )?;
        rounds.push(Round { exploration, judgments });
        if ledger.remaining() == 0 {
            flags.insert(SearchFlag::BudgetExhausted);
            break;
        }
    }

    let sequences = tree
        .completed_leaves()
        .map(|n| n.id)
        .collect::<Vec<_>>()
        .into_iter()
        .map(|id| tree.sequence_of(id))
        .collect::<Result<Vec<_>>>()?;
    let (selected, rand_selected) = if sequences.is_empty() {
        flags.insert(SearchFlag::NoSequence);
        (None, None)
    } else {
        let best = select_optimum(&tree)?;
        let i = sequences.iter().position(|s| s.leaf == best.leaf);
        let r = streams.final_pick.random_range(0..sequences.len());
        (i, Some(r))
    };
    if !ledger.judge_errors.is_empty() {
        flags.insert(SearchFlag::JudgeErrors);
    }
    Ok(JudecRun {
        rounds,
        result: SearcherResult {
            tree,
            sequences,
            selected,
            ledger,
            flags,
        },
        rand_selected,
    })
}

/// Everything needed to audit, rank or re-execute one search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub format: String,
    pub version: u32,
    pub task: TaskSource,
    pub method: Method,
    pub seed: u64,
    pub config: SearchConfig,
    pub judge: JudgeSpec,
    /// Explore/judge iterations; empty for the baselines.
    pub rounds: Vec<Round>,
    pub tree: DecisionTree,
    pub sequences: Vec<DecisionSequence>,
    pub selected: Option<DecisionSequence>,
    pub passed: bool,
    /// Score of the selected leaf (meaningful for the score-guided methods).
    pub selected_elo: Option<f64>,
    pub ledger: CallLedger,
    pub flags: BTreeSet<SearchFlag>,
    /// Tool worlds only.
    pub failure: Option<FailureReport>,
    /// Excluded from determinism checks.
    pub wall_time_ms: f64,
}

impl RunRecord {
    pub fn budget_consumed(&self) -> u32 {
        self.ledger.used()
    }

    /// The selected sequence as a judge would see it, with its hidden
    /// utility attached for simulated judges.
    pub fn selected_trail(&self) -> Result<Option<Trail>> {
        let Some(seq) = &self.selected else {
            return Ok(None);
        };
        let built = self.task.build()?;
        let path = self.tree.transitions_of(seq)?;
        Ok(Some(Trail {
            text: render_sequence_for_judge(&path, false),
            utility: built.environment.true_utility(&path),
        }))
    }

    /// Compact JSON of the record with the wall time zeroed: two runs with
    /// the same inputs produce identical fingerprints.
    pub fn fingerprint(&self) -> String {
        let mut copy = self.clone();
        copy.wall_time_ms = 0.0;
        serde_json::to_string(&copy).expect("records serialize")
    }
}

fn selection_report(
    env: &dyn Environment,
    tree: &DecisionTree,
    selected: Option<&DecisionSequence>,
) -> Result<(bool, Option<f64>, Option<FailureReport>)> {
    let Some(seq) = selected else {
        return Ok((false, None, None));
    };
    let path = tree.transitions_of(seq)?;
    let passed = env.is_success(&path);
    let elo = tree.node(seq.leaf)?.elo;
    let failure = if env.kind() == "tools" {
        Some(classify_failure(&path)?)
    } else {
        None
    };
    Ok((passed, Some(elo), failure))
}

/// Runs one method on one task and packages the outcome.
///
/// For [`Method::JudecRandSelect`] the search is the ordinary one; only the
/// reported answer differs.
pub fn run_record(
    task: &TaskSource,
    method: Method,
    config: &SearchConfig,
    judge_spec: &JudgeSpec,
    seed: u64,
    limiter: Option<&Arc<RateLimiter>>,
) -> Result<RunRecord> {
    Ok(run_with_rand_pick(task, method, config, judge_spec, seed, limiter)?.0)
}

/// Like [`run_record`], but for the score-guided method also returns the
/// record the uniform final pick would have produced from the same search.
pub fn run_with_rand_pick(
    task: &TaskSource,
    method: Method,
    config: &SearchConfig,
    judge_spec: &JudgeSpec,
    seed: u64,
    limiter: Option<&Arc<RateLimiter>>,
) -> Result<(RunRecord, Option<RunRecord>)> {
    let built = task.build()?;
    let env = built.environment.as_ref();
    let sampler = built.sampler.as_ref();
    let mut judge = judge_spec.build(limiter)?;
    let started = Instant::now();
    let inputs = SearchInputs {
        env,
        sampler,
        budget: config.budget,
        seed,
    };
    config.validate()?;
    let (result, rounds, rand_selected) = match method {
        Method::Judec | Method::JudecRandSelect => {
            let run = run_judec(env, sampler, judge.as_mut(), config, seed)?;
            (run.result, run.rounds, run.rand_selected)
        }
        Method::Cot => (cot_search(&inputs)?, Vec::new(), None),
        Method::CotAtK => (cot_at_k_search(&inputs, config.baselines.rollouts)?, Vec::new(), None),
        Method::Bfs => (
            bfs_search(&inputs, judge.as_mut(), &config.baselines)?,
            Vec::new(),
            None,
        ),
        Method::Dfs => (dfs_search(&inputs, &config.baselines)?, Vec::new(), None),
        Method::Dfsdt => (
            dfsdt_search(&inputs, judge.as_mut(), &config.baselines)?,
            Vec::new(),
            None,
        ),
    };
    let wall_time_ms = started.elapsed().as_secs_f64() * 1e3;

    let make = |m: Method, pick: Option<usize>| -> Result<RunRecord> {
        let selected = pick.map(|i| result.sequences[i].clone());
        let (passed, selected_elo, failure) = selection_report(env, &result.tree, selected.as_ref())?;
        Ok(RunRecord {
            format: RUN_FORMAT.into(),
            version: RUN_VERSION,
            task: task.clone(),
            method: m,
            seed,
            config: *config,
            judge: judge_spec.clone(),
            rounds: rounds.clone(),
            tree: result.tree.clone(),
            sequences: result.sequences.clone(),
            selected,
            passed,
            selected_elo,
            ledger: result.ledger.clone(),
            flags: result.flags.clone(),
            failure,
            wall_time_ms,
        })
    };
    match method {
        Method::Judec => Ok((
            make(Method::Judec, result.selected)?,
            Some(make(Method::JudecRandSelect, rand_selected)?),
        )),
        Method::JudecRandSelect => Ok((make(Method::JudecRandSelect, rand_selected)?, None)),
        m => Ok((make(m, result.selected)?, None)),
    }
}

/// Outcome of re-executing a stored record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub selected_identical: bool,
    pub ledger_identical: bool,
    pub record_identical: bool,
}

impl ReplayReport {
    pub fn is_identical(&self) -> bool {
        self.selected_identical && self.ledger_identical && self.record_identical
    }
}

/// Re-runs `record` from its embedded task, config, judge and seed and
/// byte-compares the outcome.
pub fn replay_record(record: &RunRecord) -> Result<(ReplayReport, RunRecord)> {
    if !record.judge.is_reproducible() {
        return Err(Error::invalid(
            "records made with the remote judge cannot be replayed exactly",
        ));
    }
    let again = run_record(
        &record.task,
        record.method,
        &record.config,
        &record.judge,
        record.seed,
        None,
    )?;
    let report = ReplayReport {
        selected_identical: json(&record.selected) == json(&again.selected),
        ledger_identical: json(&record.ledger) == json(&again.ledger),
        record_identical: record.fingerprint() == again.fingerprint(),
    };
    Ok((report, again))
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("records serialize")
}
