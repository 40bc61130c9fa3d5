//! Scoring new sequences: opponent sampling, order-swapped judge trials, the
//! leaf update and bottom-up recomputation of ancestor scores.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::budget::{CallKind, CallLedger};
use crate::elo::{double_comparison_outcome, update_pair, ComparisonOutcome, EloConfig};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::explore::anneal_temperature;
use crate::judges::{judge_compare, render_sequence_for_judge, Judge, TaskContext, Trail, Winner};
use crate::rng::{mix64, stream, RunStreams, SearchRng, Stream};
use crate::tree::{aggregate_children_elo, DecisionTree, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgmentSettings {
    /// Opponents drawn (without replacement) for each new sequence.
    pub comparisons_per_new_sequence: u32,
    /// Ask the judge once instead of twice. Only sound for judges whose
    /// verdict does not depend on presentation order.
    pub single_trial: bool,
}

impl Default for JudgmentSettings {
    fn default() -> Self {
        Self {
            comparisons_per_new_sequence: 1,
            single_trial: false,
        }
    }
}

impl JudgmentSettings {
    pub fn trials_per_comparison(&self) -> u32 {
        if self.single_trial {
            1
        } else {
            2
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentEvent {
    pub new_leaf: NodeId,
    pub opponent_leaf: NodeId,
    pub outcome_for_new: ComparisonOutcome,
    pub new_elo_before: f64,
    pub new_elo_after: f64,
    pub opponent_elo_before: f64,
    pub opponent_elo_after: f64,
    pub judge_calls_consumed: u32,
}

/// Renders the path ending at `id` and attaches its hidden utility.
pub fn trail_for(tree: &DecisionTree, env: &dyn Environment, id: NodeId, in_progress: bool) -> Result<Trail> {
    let path = tree.transitions_to(id)?;
    Ok(Trail {
        text: render_sequence_for_judge(&path, in_progress),
        utility: env.true_utility(&path),
    })
}

/// Outcome for `a` after asking the judge `(a, b)` and then `(b, a)`.
///
/// Each trial is charged to `ledger` before the judge is asked, so a failing
/// second trial still leaves the first one billed. Judge failures surface as
/// [`Error::Judge`].
pub fn double_compare(
    judge: &mut dyn Judge,
    context: &TaskContext,
    a: &Trail,
    b: &Trail,
    single_trial: bool,
    rng: &mut SearchRng,
    mut ledger: Option<&mut CallLedger>,
) -> Result<ComparisonOutcome> {
    #[derive(Debug, PartialEq)]
    enum Side {
        A,
        B,
    }
    let mut trial = |first: &Trail, second: &Trail, rng: &mut SearchRng| -> Result<Winner> {
        if let Some(l) = ledger.as_deref_mut() {
            l.charge(CallKind::JudgeTrial)?;
        }
        Ok(judge_compare(judge, context, first, second, rng)?.winner)
    };
    let w1 = match trial(a, b, rng)? {
        Winner::First => Some(Side::A),
        Winner::Second => Some(Side::B),
        Winner::Abstain => None,
    };
    if single_trial {
        return Ok(match w1 {
            Some(Side::A) => ComparisonOutcome::Win,
            Some(Side::B) => ComparisonOutcome::Loss,
            None => ComparisonOutcome::Draw,
        });
    }
    let w2 = match trial(b, a, rng)? {
        Winner::First => Some(Side::B),
        Winner::Second => Some(Side::A),
        Winner::Abstain => None,
    };
    double_comparison_outcome(w1.as_ref(), w2.as_ref(), &Side::A, &Side::B)
}

/// Recomputes every ancestor of `leaf` from its children without touching
/// update counts. Idempotent.
pub fn refresh_ancestors(tree: &mut DecisionTree, leaf: NodeId) -> Result<usize> {
    walk_ancestors(tree, leaf, false)
}

/// Recomputes every ancestor of `leaf`, parent first, each at its own
/// annealed temperature, and counts the recomputation as one update of that
/// ancestor. Returns the number of ancestors touched.
pub fn propagate_up(tree: &mut DecisionTree, leaf: NodeId) -> Result<usize> {
    walk_ancestors(tree, leaf, true)
}

fn walk_ancestors(tree: &mut DecisionTree, leaf: NodeId, count_update: bool) -> Result<usize> {
    let tau0 = tree.config().default_temperature_tau0;
    let mut cursor = tree.node(leaf)?.parent;
    let mut touched = 0;
    while let Some(id) = cursor {
        let node = tree.node(id)?;
        let scores: Vec<f64> = node
            .children
            .iter()
            .map(|&c| tree.node(c).map(|n| n.elo))
            .collect::<Result<_>>()?;
        let tau = anneal_temperature(node.update_count, tau0);
        let value = aggregate_children_elo(&scores, tau)?;
        cursor = node.parent;
        let node = tree.node_mut(id)?;
        node.elo = value;
        if count_update {
            node.update_count += 1;
        }
        touched += 1;
    }
    Ok(touched)
}

/// Scores `new_leaf` against opponents drawn uniformly from the other
/// completed leaves.
///
/// Stops early, without error, once the ledger cannot pay for a full
/// comparison. A judge failure discards that comparison (no score changes),
/// is logged in the ledger, and moves on to the next opponent.
#[allow(clippy::too_many_arguments)]
pub fn judge_new_sequence(
    tree: &mut DecisionTree,
    new_leaf: NodeId,
    judge: &mut dyn Judge,
    env: &dyn Environment,
    settings: &JudgmentSettings,
    streams: &mut RunStreams,
    ledger: &mut CallLedger,
) -> Result<Vec<JudgmentEvent>> {
    let node = tree.node(new_leaf)?;
    if !node.is_leaf() || node.is_root() {
        return Err(Error::invalid(format!("node {new_leaf} is not a leaf")));
    }
    let pool: Vec<NodeId> = tree
        .completed_leaves()
        .map(|n| n.id)
        .filter(|&id| id != new_leaf)
        .collect();
    if pool.is_empty() {
        return Ok(Vec::new());
    }
    let wanted = (settings.comparisons_per_new_sequence as usize).min(pool.len());
    let picks = sample(&mut streams.opponent, pool.len(), wanted);
    let context = env.context();
    let trials = settings.trials_per_comparison();
    let config: EloConfig = *tree.config();
    let new_trail = trail_for(tree, env, new_leaf, false)?;

    let mut events = Vec::new();
    for i in picks {
        if !ledger.can_afford(trials) {
            break;
        }
        let opponent = pool[i];
        let opp_trail = trail_for(tree, env, opponent, false)?;
        let before = ledger.judge_trials;
        let outcome = match double_compare(
            judge,
            &context,
            &new_trail,
            &opp_trail,
            settings.single_trial,
            &mut streams.judge,
            Some(ledger),
        ) {
            Ok(o) => o,
            Err(Error::Judge(e)) => {
                ledger.record_judge_error(format!("{new_leaf} vs {opponent}: {e}"));
                tracing::warn!(%new_leaf, %opponent, error = %e, "judge failed; comparison discarded");
                continue;
            }
            Err(e) => return Err(e),
        };
        let new_before = tree.node(new_leaf)?.elo;
        let opp_before = tree.node(opponent)?.elo;
        let (new_after, opp_after) = update_pair(new_before, opp_before, outcome, &config)?;
        for (id, elo) in [(new_leaf, new_after), (opponent, opp_after)] {
            let n = tree.node_mut(id)?;
            n.elo = elo;
            n.update_count += 1;
        }
        propagate_up(tree, new_leaf)?;
        propagate_up(tree, opponent)?;
        events.push(JudgmentEvent {
            new_leaf,
            opponent_leaf: opponent,
            outcome_for_new: outcome,
            new_elo_before: new_before,
            new_elo_after: new_after,
            opponent_elo_before: opp_before,
            opponent_elo_after: opp_after,
            judge_calls_consumed: ledger.judge_trials - before,
        });
    }
    Ok(events)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentResult {
    /// Mean rank per input sequence, 1 is best. Tied scores share the
    /// average of the ranks they span.
    pub mean_ranks: Vec<f64>,
    /// Pairings scored 0.5 each because the judge failed.
    pub flagged_pairings: Vec<(usize, usize)>,
}

/// Ranks of `scores` in descending order with ties averaged.
pub fn fractional_ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Round-robin double comparisons among `trails`, repeated `trials` times
/// with independent random streams derived from `seed`.
pub fn ranking_tournament(
    trails: &[Trail],
    judge: &mut dyn Judge,
    context: &TaskContext,
    trials: u32,
    seed: u64,
    mut ledger: Option<&mut CallLedger>,
) -> Result<TournamentResult> {
    if trails.len() < 2 {
        return Err(Error::invalid("a tournament needs at least two sequences"));
    }
    if trials == 0 {
        return Err(Error::invalid("a tournament needs at least one trial"));
    }
    let n = trails.len();
    let mut rank_sums = vec![0.0; n];
    let mut flagged = Vec::new();
    for t in 0..trials {
        let mut rng = stream(mix64(seed ^ mix64(u64::from(t) + 1)), Stream::Tournament);
        let mut scores = vec![0.0; n];
        for i in 0..n {
            for j in i + 1..n {
                let outcome = match double_compare(
                    judge,
                    context,
                    &trails[i],
                    &trails[j],
                    false,
                    &mut rng,
                    ledger.as_deref_mut(),
                ) {
                    Ok(o) => o,
                    Err(Error::Judge(e)) => {
                        tracing::warn!(i, j, error = %e, "tournament pairing failed; scored as a draw");
                        if let Some(l) = ledger.as_deref_mut() {
                            l.record_judge_error(format!("tournament {i} vs {j}: {e}"));
                        }
                        flagged.push((i, j));
                        ComparisonOutcome::Draw
                    }
                    Err(e) => return Err(e),
                };
                scores[i] += outcome.value();
                scores[j] += outcome.complement().value();
            }
        }
        for (sum, r) in rank_sums.iter_mut().zip(fractional_ranks(&scores)) {
            *sum += r;
        }
    }
    Ok(TournamentResult {
        mean_ranks: rank_sums.into_iter().map(|s| s / f64::from(trials)).collect(),
        flagged_pairings: flagged,
    })
}
