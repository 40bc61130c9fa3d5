//! Reference searchers sharing the same worlds, judges and call ledger:
//! single and repeated rollouts, breadth-first with judge pruning,
//! depth-first, and depth-first with judge-gated abandonment.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::budget::{Budget, CallKind, CallLedger};
use crate::elo::{ComparisonOutcome, EloConfig};
use crate::env::{ActionSampler, Environment};
use crate::error::{Error, Result};
use crate::explore::{is_extendable, rollout};
use crate::judges::{Judge, Trail};
use crate::judgment::{double_compare, fractional_ranks, trail_for};
use crate::rng::{stream, SearchRng, Stream};
use crate::tree::{Action, DecisionSequence, DecisionTree, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchFlag {
    /// The call budget ran out before the method's own stopping rule.
    BudgetExhausted,
    /// At least one reported sequence was cut short by the budget.
    Truncated,
    /// Nothing was produced.
    NoSequence,
    /// At least one judge call failed.
    JudgeErrors,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSettings {
    /// Children generated per state by the breadth- and depth-first searchers.
    pub breadth: u32,
    /// States kept per level by the breadth-first searcher.
    pub keep_per_level: u32,
    /// Completed sequences after which the tree searchers stop.
    pub max_sequences: u32,
    /// Independent rollouts of the repeated-rollout baseline.
    pub rollouts: u32,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        Self {
            breadth: 2,
            keep_per_level: 3,
            max_sequences: 3,
            rollouts: 3,
        }
    }
}

impl BaselineSettings {
    pub fn validate(&self) -> Result<()> {
        if self.breadth == 0 || self.keep_per_level == 0 || self.max_sequences == 0 || self.rollouts == 0 {
            return Err(Error::invalid("baseline settings must all be positive"));
        }
        Ok(())
    }
}

/// What any searcher hands back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearcherResult {
    pub tree: DecisionTree,
    /// Reported sequences in the order the method produced them.
    pub sequences: Vec<DecisionSequence>,
    /// Index into `sequences` of the method's answer.
    pub selected: Option<usize>,
    pub ledger: CallLedger,
    pub flags: BTreeSet<SearchFlag>,
}

impl SearcherResult {
    pub fn selected_sequence(&self) -> Option<&DecisionSequence> {
        self.selected.map(|i| &self.sequences[i])
    }

    /// Whether any reported sequence solves the task.
    pub fn any_success(&self, env: &dyn Environment) -> Result<bool> {
        for s in &self.sequences {
            if env.is_success(&self.tree.transitions_of(s)?) {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn selected_success(&self, env: &dyn Environment) -> Result<bool> {
        match self.selected_sequence() {
            Some(s) => Ok(env.is_success(&self.tree.transitions_of(s)?)),
            None => Ok(false),
        }
    }
}

/// Shared inputs of every searcher.
#[derive(Clone, Copy)]
pub struct SearchInputs<'a> {
    pub env: &'a dyn Environment,
    pub sampler: &'a dyn ActionSampler,
    pub budget: Budget,
    pub seed: u64,
}

impl SearchInputs<'_> {
    fn start(&self) -> Result<(DecisionTree, CallLedger)> {
        self.budget.validate()?;
        let tree = DecisionTree::new(self.env.initial_state(), EloConfig::default())?;
        Ok((tree, CallLedger::new(self.budget.max_calls)))
    }
}

fn finish(
    mut tree: DecisionTree,
    leaves: Vec<NodeId>,
    ledger: CallLedger,
    mut flags: BTreeSet<SearchFlag>,
    env: &dyn Environment,
) -> Result<SearcherResult> {
    let mut leaves = leaves;
    if leaves.is_empty() {
        // Report the most recent partial path, if the budget allowed any step.
        if let Some(last) = tree.leaves().last().map(|n| n.id) {
            tree.mark_truncated(last)?;
            leaves.push(last);
        }
    }
    if leaves
        .iter()
        .any(|&l| tree.node(l).map(|n| n.truncated).unwrap_or(false))
    {
        flags.insert(SearchFlag::Truncated);
    }
    if leaves.is_empty() {
        flags.insert(SearchFlag::NoSequence);
    }
    if !ledger.judge_errors.is_empty() {
        flags.insert(SearchFlag::JudgeErrors);
    }
    let sequences = leaves
        .iter()
        .map(|&l| tree.sequence_of(l))
        .collect::<Result<Vec<_>>>()?;
    let mut selected = if sequences.is_empty() { None } else { Some(0) };
    for (i, s) in sequences.iter().enumerate() {
        if env.is_success(&tree.transitions_of(s)?) {
            selected = Some(i);
            break;
        }
    }
    Ok(SearcherResult {
        tree,
        sequences,
        selected,
        ledger,
        flags,
    })
}

/// One rollout from the root.
pub fn cot_search(inputs: &SearchInputs<'_>) -> Result<SearcherResult> {
    repeated_rollouts(inputs, 1)
}

/// `k` independent rollouts from the root, the `i`-th drawing from its own
/// proposal stream so that rollout `i` is the same whatever `k` is.
pub fn cot_at_k_search(inputs: &SearchInputs<'_>, k: u32) -> Result<SearcherResult> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    repeated_rollouts(inputs, k)
}

fn repeated_rollouts(inputs: &SearchInputs<'_>, k: u32) -> Result<SearcherResult> {
    let (mut tree, mut ledger) = inputs.start()?;
    let mut flags = BTreeSet::new();
    let mut leaves = Vec::new();
    for i in 0..k {
        let mut rng = stream(inputs.seed, Stream::Rollout(i));
        match rollout(
            &mut tree,
            NodeId::ROOT,
            inputs.env,
            inputs.sampler,
            inputs.budget.max_steps_per_sequence,
            &mut rng,
            &mut ledger,
        ) {
            Ok(r) => {
                leaves.push(r.leaf);
                if r.truncated {
                    flags.insert(SearchFlag::BudgetExhausted);
                    break;
                }
            }
            Err(Error::BudgetExhausted { .. }) => {
                flags.insert(SearchFlag::BudgetExhausted);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    finish(tree, leaves, ledger, flags, inputs.env)
}

/// Takes one environment step from `from` with a proposal not yet tried
/// there. `None` when the sampler has nothing new or the budget is spent.
fn expand_one(
    tree: &mut DecisionTree,
    from: NodeId,
    inputs: &SearchInputs<'_>,
    rng: &mut SearchRng,
    ledger: &mut CallLedger,
) -> Result<Expansion> {
    let node = tree.node(from)?;
    let tried: Vec<Action> = node
        .children
        .iter()
        .map(|&c| tree.node(c).map(|n| n.action.clone().expect("non-root")))
        .collect::<Result<_>>()?;
    let history = tree.transitions_to(from)?;
    let Some(action) = inputs.sampler.propose_excluding(&node.state, &history, &tried, rng) else {
        return Ok(Expansion::Exhausted);
    };
    if ledger.charge(CallKind::EnvironmentStep).is_err() {
        return Ok(Expansion::OutOfBudget);
    }
    let transition = inputs.env.step(&node.state, &action);
    Ok(Expansion::Child(tree.append_path(from, vec![transition])?))
}

enum Expansion {
    Child(NodeId),
    Exhausted,
    OutOfBudget,
}

fn is_complete(tree: &DecisionTree, id: NodeId, max_steps: u32) -> Result<bool> {
    let n = tree.node(id)?;
    Ok(n.is_terminal() || n.depth >= max_steps)
}

/// Level-by-level expansion: up to `breadth` children per kept state, then
/// the non-terminal children are pruned to `keep_per_level` by a round-robin
/// of single judge trials on the partial trails, alternating which side is
/// shown first. Terminal children are reported in the order they appear.
pub fn bfs_search(
    inputs: &SearchInputs<'_>,
    judge: &mut dyn Judge,
    settings: &BaselineSettings,
) -> Result<SearcherResult> {
    settings.validate()?;
    let (mut tree, mut ledger) = inputs.start()?;
    let mut rng = stream(inputs.seed, Stream::Rollout(0));
    let mut judge_rng = stream(inputs.seed, Stream::Judge);
    let context = inputs.env.context();
    let max_steps = inputs.budget.max_steps_per_sequence;
    let mut flags = BTreeSet::new();
    let mut done = Vec::new();
    let mut frontier = vec![NodeId::ROOT];

    'levels: while !frontier.is_empty() {
        let mut next = Vec::new();
        for &state in &frontier {
            for _ in 0..settings.breadth {
                match expand_one(&mut tree, state, inputs, &mut rng, &mut ledger)? {
                    Expansion::Child(c) => {
                        if is_complete(&tree, c, max_steps)? {
                            done.push(c);
                            if done.len() as u32 >= settings.max_sequences {
                                break 'levels;
                            }
                        } else {
                            next.push(c);
                        }
                    }
                    Expansion::Exhausted => break,
                    Expansion::OutOfBudget => {
                        flags.insert(SearchFlag::BudgetExhausted);
                        break 'levels;
                    }
                }
            }
        }
        if next.len() as u32 > settings.keep_per_level {
            let trails = next
                .iter()
                .map(|&c| trail_for(&tree, inputs.env, c, true))
                .collect::<Result<Vec<Trail>>>()?;
            let mut scores = vec![0.0; next.len()];
            let mut turn = 0usize;
            for i in 0..next.len() {
                for j in i + 1..next.len() {
                    if !ledger.can_afford(1) {
                        flags.insert(SearchFlag::BudgetExhausted);
                        break 'levels;
                    }
                    let (a, b) = if turn.is_multiple_of(2) { (i, j) } else { (j, i) };
                    turn += 1;
                    let outcome = match double_compare(
                        judge,
                        &context,
                        &trails[a],
                        &trails[b],
                        true,
                        &mut judge_rng,
                        Some(&mut ledger),
                    ) {
                        Ok(o) => o,
                        Err(Error::Judge(e)) => {
                            ledger.record_judge_error(format!("bfs pruning {} vs {}: {e}", next[a], next[b]));
                            ComparisonOutcome::Draw
                        }
                        Err(e) => return Err(e),
                    };
                    scores[a] += outcome.value();
                    scores[b] += outcome.complement().value();
                }
            }
            let ranks = fractional_ranks(&scores);
            let mut order: Vec<usize> = (0..next.len()).collect();
            // Ties keep generation order.
            order.sort_by(|&x, &y| ranks[x].total_cmp(&ranks[y]).then(x.cmp(&y)));
            let mut kept: Vec<usize> = order.into_iter().take(settings.keep_per_level as usize).collect();
            kept.sort_unstable();
            next = kept.into_iter().map(|i| next[i]).collect();
        }
        frontier = next;
    }
    finish(tree, done, ledger, flags, inputs.env)
}

/// Depth-first expansion with at most `breadth` children per state,
/// stopping after `max_sequences` completed sequences.
pub fn dfs_search(inputs: &SearchInputs<'_>, settings: &BaselineSettings) -> Result<SearcherResult> {
    depth_first(inputs, None, settings)
}

/// Depth-first search in which every completed sequence after the first is
/// double-compared with the best one so far. A win (or a draw) keeps the
/// ordinary backtrack to the deepest ancestor with room left; a loss jumps to
/// a uniformly drawn expandable node shallower than that ancestor, falling
/// back to the ordinary backtrack when there is none.
pub fn dfsdt_search(
    inputs: &SearchInputs<'_>,
    judge: &mut dyn Judge,
    settings: &BaselineSettings,
) -> Result<SearcherResult> {
    depth_first(inputs, Some(judge), settings)
}

fn depth_first(
    inputs: &SearchInputs<'_>,
    mut judge: Option<&mut dyn Judge>,
    settings: &BaselineSettings,
) -> Result<SearcherResult> {
    settings.validate()?;
    let (mut tree, mut ledger) = inputs.start()?;
    let mut rng = stream(inputs.seed, Stream::Rollout(0));
    let mut judge_rng = stream(inputs.seed, Stream::Judge);
    let mut jump_rng = stream(inputs.seed, Stream::Jump);
    let context = inputs.env.context();
    let max_steps = inputs.budget.max_steps_per_sequence;
    let mut flags = BTreeSet::new();
    let mut done: Vec<NodeId> = Vec::new();
    let mut best: Option<NodeId> = None;
    // States whose sampler ran out of fresh proposals.
    let mut exhausted: BTreeSet<NodeId> = BTreeSet::new();
    let mut stack = vec![NodeId::ROOT];

    let has_room = |tree: &DecisionTree, exhausted: &BTreeSet<NodeId>, id: NodeId| -> bool {
        let n = tree.node(id).expect("stack ids are valid");
        is_extendable(n, max_steps) && (n.children.len() as u32) < settings.breadth && !exhausted.contains(&id)
    };

    while let Some(&top) = stack.last() {
        if !has_room(&tree, &exhausted, top) {
            stack.pop();
            continue;
        }
        let child = match expand_one(&mut tree, top, inputs, &mut rng, &mut ledger)? {
            Expansion::Child(c) => c,
            Expansion::Exhausted => {
                exhausted.insert(top);
                stack.pop();
                continue;
            }
            Expansion::OutOfBudget => {
                flags.insert(SearchFlag::BudgetExhausted);
                break;
            }
        };
        if !is_complete(&tree, child, max_steps)? {
            stack.push(child);
            continue;
        }
        done.push(child);
        if done.len() as u32 >= settings.max_sequences {
            break;
        }
        let Some(judge) = judge.as_deref_mut() else {
            continue;
        };
        let Some(incumbent) = best else {
            best = Some(child);
            continue;
        };
        if !ledger.can_afford(2) {
            continue;
        }
        let newest = trail_for(&tree, inputs.env, child, false)?;
        let current = trail_for(&tree, inputs.env, incumbent, false)?;
        let outcome = match double_compare(
            judge,
            &context,
            &newest,
            &current,
            false,
            &mut judge_rng,
            Some(&mut ledger),
        ) {
            Ok(o) => o,
            Err(Error::Judge(e)) => {
                ledger.record_judge_error(format!("dfsdt {child} vs {incumbent}: {e}"));
                continue;
            }
            Err(e) => return Err(e),
        };
        match outcome {
            ComparisonOutcome::Win => best = Some(child),
            ComparisonOutcome::Draw => {}
            ComparisonOutcome::Loss => {
                // Where the ordinary backtrack would resume.
                let resume_depth = stack
                    .iter()
                    .rev()
                    .find(|&&id| has_room(&tree, &exhausted, id))
                    .map(|&id| tree.node(id).expect("valid").depth);
                let Some(resume_depth) = resume_depth else {
                    continue;
                };
                let targets: Vec<NodeId> = tree
                    .nodes()
                    .iter()
                    .filter(|n| n.depth < resume_depth && has_room(&tree, &exhausted, n.id))
                    .map(|n| n.id)
                    .collect();
                if !targets.is_empty() {
                    let target = targets[jump_rng.random_range(0..targets.len())];
                    stack = tree.path_to(target)?;
                }
            }
        }
    }
    finish(tree, done, ledger, flags, inputs.env)
}
