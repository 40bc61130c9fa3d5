//! Top-down exploration: softmax descent over child scores with a reject
//! option, then a fresh rollout from wherever the walk stopped.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::budget::{CallKind, CallLedger};
use crate::elo::EloConfig;
use crate::env::{ActionSampler, Environment};
use crate::error::{Error, Result};
use crate::rng::{RunStreams, SearchRng};
use crate::tree::{softmax, DecisionNode, DecisionTree, NodeId, Transition};

/// `tau0 / (1 + sqrt(ln(M + 1)))`: the temperature of a node updated `M` times.
pub fn anneal_temperature(update_count: u64, tau0: f64) -> f64 {
    tau0 / (1.0 + ((update_count as f64) + 1.0).ln().sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Child(NodeId),
    /// Stop descending and branch off a new sequence here.
    Reject,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionDistribution {
    pub entries: Vec<(Choice, f64)>,
}

impl SelectionDistribution {
    pub fn probability(&self, choice: Choice) -> f64 {
        self.entries
            .iter()
            .find(|(c, _)| *c == choice)
            .map(|(_, p)| *p)
            .unwrap_or(0.0)
    }

    pub fn sample(&self, rng: &mut SearchRng) -> Choice {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (choice, p) in &self.entries {
            acc += p;
            if u < acc {
                return *choice;
            }
        }
        self.entries
            .last()
            .expect("distribution always holds the reject option")
            .0
    }
}

/// Softmax over the children's scores plus the reject option at `tau`.
/// The reject option is always the last entry.
pub fn selection_distribution(
    children: &[(NodeId, f64)],
    rejection_score: f64,
    tau: f64,
) -> Result<SelectionDistribution> {
    let scores: Vec<f64> = children
        .iter()
        .map(|(_, s)| *s)
        .chain(std::iter::once(rejection_score))
        .collect();
    let probs = softmax(&scores, tau)?;
    let choices = children
        .iter()
        .map(|(id, _)| Choice::Child(*id))
        .chain(std::iter::once(Choice::Reject));
    Ok(SelectionDistribution {
        entries: choices.zip(probs).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationPolicy {
    pub config: EloConfig,
    pub max_steps: u32,
    pub rng_seed: u64,
}

impl ExplorationPolicy {
    pub fn new(config: EloConfig, max_steps: u32, rng_seed: u64) -> Result<Self> {
        config.validate()?;
        if max_steps == 0 {
            return Err(Error::invalid("max_steps must be at least 1"));
        }
        Ok(Self {
            config,
            max_steps,
            rng_seed,
        })
    }

    pub fn streams(&self) -> RunStreams {
        RunStreams::new(self.rng_seed)
    }
}

/// A node the walk may still descend into or branch from.
pub fn is_extendable(node: &DecisionNode, max_steps: u32) -> bool {
    !node.is_terminal() && !node.truncated && node.depth < max_steps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rollout {
    pub leaf: NodeId,
    pub steps: u32,
    /// The call budget ran out before a terminal state or the step cap.
    pub truncated: bool,
}

/// Lets the sampler act from `from` until a terminal state, the step cap or
/// the end of the budget, and attaches the resulting chain to the tree.
///
/// Fails with `BudgetExhausted` (leaving the tree untouched) if not even one
/// step could be paid for.
pub fn rollout(
    tree: &mut DecisionTree,
    from: NodeId,
    env: &dyn Environment,
    sampler: &dyn ActionSampler,
    max_steps: u32,
    rng: &mut SearchRng,
    ledger: &mut CallLedger,
) -> Result<Rollout> {
    let start = tree.node(from)?;
    if !is_extendable(start, max_steps) {
        return Err(Error::invalid(format!("node {from} cannot be extended")));
    }
    let mut depth = start.depth;
    let mut state = start.state.clone();
    let mut history = tree.transitions_to(from)?;
    let prefix = history.len();
    let mut truncated = false;
    while depth < max_steps {
        if ledger.charge(CallKind::EnvironmentStep).is_err() {
            truncated = true;
            break;
        }
        let action = sampler.propose(&state, &history, rng);
        let transition = env.step(&state, &action);
        depth += 1;
        state = transition.state.clone();
        let terminal = transition.state.terminal;
        history.push(transition);
        if terminal {
            break;
        }
    }
    let steps: Vec<Transition> = history.split_off(prefix);
    if steps.is_empty() {
        return Err(Error::BudgetExhausted {
            used: ledger.used(),
            max: ledger.max_calls,
        });
    }
    let count = steps.len() as u32;
    let leaf = tree.append_path(from, steps)?;
    if truncated {
        tree.mark_truncated(leaf)?;
    }
    Ok(Rollout {
        leaf,
        steps: count,
        truncated,
    })
}

/// What one exploration did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationTrace {
    /// Nodes visited by the descent, starting at the root.
    pub walk: Vec<NodeId>,
    /// Node the new sequence branches from.
    pub expanded_from: NodeId,
    pub rollout: Rollout,
}

/// One exploration: descend from the root by sampling the selection
/// distribution at each node's annealed temperature until the reject option
/// is drawn, then roll out a new sequence from that node.
///
/// Terminal, capped and truncated children are never descent candidates, so
/// a node whose children are all finished always rejects.
pub fn explore_once(
    tree: &mut DecisionTree,
    env: &dyn Environment,
    sampler: &dyn ActionSampler,
    policy: &ExplorationPolicy,
    streams: &mut RunStreams,
    ledger: &mut CallLedger,
) -> Result<ExplorationTrace> {
    let mut current = NodeId::ROOT;
    let mut walk = vec![current];
    loop {
        let node = tree.node(current)?;
        let candidates: Vec<(NodeId, f64)> = node
            .children
            .iter()
            .map(|&c| tree.node(c).expect("child ids are valid"))
            .filter(|c| is_extendable(c, policy.max_steps))
            .map(|c| (c.id, c.elo))
            .collect();
        let tau = anneal_temperature(node.update_count, policy.config.default_temperature_tau0);
        let dist = selection_distribution(&candidates, policy.config.rejection_score, tau)?;
        match dist.sample(&mut streams.selection) {
            Choice::Child(next) => {
                current = next;
                walk.push(next);
            }
            Choice::Reject => break,
        }
    }
    let outcome = rollout(
        tree,
        current,
        env,
        sampler,
        policy.max_steps,
        &mut streams.rollout,
        ledger,
    )?;
    Ok(ExplorationTrace {
        walk,
        expanded_from: current,
        rollout: outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ToySampler, ToySamplerMode, ToyWorld};
    use crate::rng::{stream, Stream};
    use crate::tree::{Action, State};
    use proptest::prelude::*;
    use rand::Rng;
    use serde_json::json;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn ids(n: u32) -> Vec<NodeId> {
        (1..=n).map(NodeId).collect()
    }

    #[test]
    fn anneal_examples() {
        assert_eq!(anneal_temperature(0, 100.0), 100.0);
        assert_eq!(anneal_temperature(0, 7.5), 7.5);
        // mpmath: 54.56863298432674 and 33.31298513091635
        assert!((anneal_temperature(1, 100.0) - 54.568_632_984).abs() < 0.01);
        assert!((anneal_temperature(54, 100.0) - 33.312_985_131).abs() < 0.02);
    }

    #[test]
    fn anneal_is_non_increasing() {
        let mut prev = f64::INFINITY;
        for m in 0..10_000 {
            let t = anneal_temperature(m, 100.0);
            assert!(t > 0.0 && t <= prev);
            prev = t;
        }
    }

    #[test]
    fn selection_examples() {
        let c = ids(2);
        let d = selection_distribution(&[(c[0], 0.0), (c[1], 0.0)], 0.0, 100.0).unwrap();
        for (_, p) in &d.entries {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        let d = selection_distribution(&[], 0.0, 100.0).unwrap();
        assert_eq!(d.entries, vec![(Choice::Reject, 1.0)]);
        // mpmath: softmax(1, 0, 0) = (0.576117, 0.211942, 0.211942)
        let d = selection_distribution(&[(c[0], 100.0), (c[1], 0.0)], 0.0, 100.0).unwrap();
        assert!((d.probability(Choice::Child(c[0])) - 0.576_116_885).abs() < 1e-3);
        assert!((d.probability(Choice::Child(c[1])) - 0.211_941_558).abs() < 1e-3);
        assert!((d.probability(Choice::Reject) - 0.211_941_558).abs() < 1e-3);
    }

    #[test]
    fn sampler_frequencies_match_closed_form() {
        let c = ids(2);
        let d = selection_distribution(&[(c[0], 0.0), (c[1], 0.0)], 0.0, 100.0).unwrap();
        let mut rng = stream(11, Stream::Selection);
        let n = 30_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            match d.sample(&mut rng) {
                Choice::Child(id) if id == c[0] => counts[0] += 1,
                Choice::Child(_) => counts[1] += 1,
                Choice::Reject => counts[2] += 1,
            }
        }
        for k in counts {
            assert!((k as f64 / n as f64 - 1.0 / 3.0).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn chi_squared_goodness_of_fit() {
        let c = ids(3);
        let d = selection_distribution(&[(c[0], 60.0), (c[1], -20.0), (c[2], 15.0)], 0.0, 45.0).unwrap();
        let mut rng = stream(12, Stream::Selection);
        let n = 10_000;
        let mut counts = vec![0usize; d.entries.len()];
        for _ in 0..n {
            let choice = d.sample(&mut rng);
            let idx = d.entries.iter().position(|(c, _)| *c == choice).unwrap();
            counts[idx] += 1;
        }
        let stat: f64 = d
            .entries
            .iter()
            .zip(&counts)
            .map(|((_, p), &k)| {
                let e = p * n as f64;
                (k as f64 - e).powi(2) / e
            })
            .sum();
        let df = (d.entries.len() - 1) as f64;
        let p_value = 1.0 - ChiSquared::new(df).unwrap().cdf(stat);
        assert!(p_value > 0.001, "chi2 {stat}, p {p_value}");
    }

    proptest! {
        #[test]
        fn distribution_sums_to_one(scores in proptest::collection::vec(-400.0f64..400.0, 0..6), rej in -100.0f64..100.0, tau in 1.0f64..300.0) {
            let children: Vec<_> = scores.iter().enumerate().map(|(i, s)| (NodeId(i as u32 + 1), *s)).collect();
            let d = selection_distribution(&children, rej, tau).unwrap();
            let total: f64 = d.entries.iter().map(|(_, p)| p).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert_eq!(d.entries.iter().filter(|(c, _)| *c == Choice::Reject).count(), 1);
        }

        #[test]
        fn raising_a_child_never_lowers_its_probability(scores in proptest::collection::vec(-300.0f64..300.0, 1..5), bump in 0.0f64..200.0, tau in 5.0f64..200.0) {
            let children: Vec<_> = scores.iter().enumerate().map(|(i, s)| (NodeId(i as u32 + 1), *s)).collect();
            let before = selection_distribution(&children, 0.0, tau).unwrap();
            let mut raised = children.clone();
            raised[0].1 += bump;
            let after = selection_distribution(&raised, 0.0, tau).unwrap();
            prop_assert!(after.probability(Choice::Child(NodeId(1))) >= before.probability(Choice::Child(NodeId(1))) - 1e-12);
            let mut lowered = children.clone();
            for c in lowered.iter_mut() { c.1 -= bump; }
            let low = selection_distribution(&lowered, 0.0, tau).unwrap();
            prop_assert!(low.probability(Choice::Reject) >= before.probability(Choice::Reject) - 1e-12);
        }

        #[test]
        fn shift_invariance(scores in proptest::collection::vec(-300.0f64..300.0, 0..5), shift in -500.0f64..500.0, tau in 5.0f64..200.0) {
            let children: Vec<_> = scores.iter().enumerate().map(|(i, s)| (NodeId(i as u32 + 1), *s)).collect();
            let a = selection_distribution(&children, 0.0, tau).unwrap();
            let shifted: Vec<_> = children.iter().map(|(id, s)| (*id, s + shift)).collect();
            let b = selection_distribution(&shifted, shift, tau).unwrap();
            for ((_, p), (_, q)) in a.entries.iter().zip(&b.entries) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }
    }

    fn toy(b: u32, d: u32) -> (ToyWorld, ToySampler) {
        let n = b.pow(d) as usize;
        let table: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        (
            ToyWorld::new(b, d, table, 1).unwrap(),
            ToySampler::new(b, d, ToySamplerMode::Uniform),
        )
    }

    #[test]
    fn fresh_tree_rejects_and_rolls_out() {
        let (world, sampler) = toy(3, 3);
        let mut tree = DecisionTree::new(world.initial_state(), EloConfig::default()).unwrap();
        let policy = ExplorationPolicy::new(EloConfig::default(), 12, 5).unwrap();
        let mut streams = policy.streams();
        let mut ledger = CallLedger::new(100);
        let trace = explore_once(&mut tree, &world, &sampler, &policy, &mut streams, &mut ledger).unwrap();
        assert_eq!(trace.walk, vec![NodeId::ROOT]);
        assert_eq!(trace.expanded_from, NodeId::ROOT);
        assert_eq!(trace.rollout.steps, 4);
        assert!(tree.node(trace.rollout.leaf).unwrap().finished);
        assert_eq!(ledger.environment_steps, 4);
    }

    #[test]
    fn each_exploration_adds_exactly_one_leaf() {
        let (world, sampler) = toy(3, 3);
        let mut tree = DecisionTree::new(world.initial_state(), EloConfig::default()).unwrap();
        let policy = ExplorationPolicy::new(EloConfig::default(), 12, 9).unwrap();
        let mut streams = policy.streams();
        let mut ledger = CallLedger::new(10_000);
        for i in 0..40 {
            let nodes_before = tree.len();
            let leaves_before = tree.leaves().count();
            explore_once(&mut tree, &world, &sampler, &policy, &mut streams, &mut ledger).unwrap();
            assert!(tree.len() > nodes_before);
            assert_eq!(tree.leaves().count(), leaves_before + 1, "round {i}");
            tree.audit().unwrap();
        }
    }

    /// A world that never finishes, to exercise the step cap.
    struct Endless;
    impl Environment for Endless {
        fn kind(&self) -> &'static str {
            "endless"
        }
        fn context(&self) -> crate::judges::TaskContext {
            crate::judges::TaskContext::new("loop", "never stop")
        }
        fn initial_state(&self) -> State {
            State::new(json!(0), false)
        }
        fn step(&self, state: &State, action: &Action) -> Transition {
            let n = state.payload.as_i64().unwrap() + 1;
            Transition {
                action: action.clone(),
                observation: format!("tick {n}"),
                state: State::new(json!(n), false),
                finish: false,
            }
        }
        fn is_finish(&self, _: &Action) -> bool {
            false
        }
        fn true_utility(&self, _: &[Transition]) -> f64 {
            0.0
        }
        fn is_success(&self, _: &[Transition]) -> bool {
            false
        }
        fn utility_bounds(&self) -> (f64, f64) {
            (0.0, 0.0)
        }
    }
    struct Tick;
    impl ActionSampler for Tick {
        fn propose(&self, _: &State, _: &[Transition], _: &mut SearchRng) -> Action {
            Action::new("tick")
        }
    }

    #[test]
    fn rollout_stops_at_step_cap() {
        let mut tree = DecisionTree::new(Endless.initial_state(), EloConfig::default()).unwrap();
        let policy = ExplorationPolicy::new(EloConfig::default(), 12, 0).unwrap();
        let mut streams = policy.streams();
        let mut ledger = CallLedger::new(100);
        let trace = explore_once(&mut tree, &Endless, &Tick, &policy, &mut streams, &mut ledger).unwrap();
        let seq = tree.sequence_of(trace.rollout.leaf).unwrap();
        assert_eq!(seq.len(), 12);
        let leaf = tree.node(trace.rollout.leaf).unwrap();
        assert!(!leaf.finished && !leaf.truncated);
        // The capped chain is never a descent candidate: the next walk rejects at the root.
        let trace = explore_once(&mut tree, &Endless, &Tick, &policy, &mut streams, &mut ledger).unwrap();
        assert_eq!(trace.walk, vec![NodeId::ROOT]);
    }

    #[test]
    fn rollout_truncated_by_budget() {
        let mut tree = DecisionTree::new(Endless.initial_state(), EloConfig::default()).unwrap();
        let mut ledger = CallLedger::new(5);
        let mut rng = stream(0, Stream::Rollout(0));
        let r = rollout(&mut tree, NodeId::ROOT, &Endless, &Tick, 12, &mut rng, &mut ledger).unwrap();
        assert!(r.truncated);
        assert_eq!(r.steps, 5);
        assert!(tree.node(r.leaf).unwrap().truncated);
        let err = rollout(&mut tree, NodeId::ROOT, &Endless, &Tick, 12, &mut rng, &mut ledger).unwrap_err();
        assert!(matches!(err, Error::BudgetExhausted { .. }));
        assert_eq!(tree.len(), 6);
    }

    #[test]
    fn all_terminal_children_force_reject() {
        let (world, sampler) = toy(2, 1);
        let mut tree = DecisionTree::new(world.initial_state(), EloConfig::default()).unwrap();
        let policy = ExplorationPolicy::new(EloConfig::default(), 1, 3).unwrap();
        let mut streams = policy.streams();
        let mut ledger = CallLedger::new(1000);
        // max_steps = 1: every child of the root is capped, so the root always rejects.
        for _ in 0..20 {
            let t = explore_once(&mut tree, &world, &sampler, &policy, &mut streams, &mut ledger).unwrap();
            assert_eq!(t.expanded_from, NodeId::ROOT);
        }
    }

    /// Independent re-implementation of the walk under equal scores: at a node
    /// with k open children, reject with probability 1/(k+1), otherwise pick a
    /// child uniformly. Returns the mean number of root children after n rounds.
    fn uniform_walk_reference(n: usize, runs: usize, depth: u32, seed: u64) -> f64 {
        #[derive(Default)]
        struct N {
            children: Vec<usize>,
            depth: u32,
        }
        let mut rng = stream(seed, Stream::Selection);
        let mut total = 0usize;
        for _ in 0..runs {
            let mut nodes = vec![N::default()];
            for _ in 0..n {
                let mut cur = 0;
                loop {
                    // Children below the last choice level end in a finish step and are closed.
                    let open: Vec<usize> = nodes[cur]
                        .children
                        .iter()
                        .copied()
                        .filter(|&c| nodes[c].depth <= depth)
                        .collect();
                    let k = open.len();
                    let r = rng.random_range(0..=k);
                    if r == k {
                        break;
                    }
                    cur = open[r];
                }
                let mut parent = cur;
                let mut d = nodes[cur].depth;
                while d < depth + 1 {
                    d += 1;
                    nodes.push(N {
                        children: vec![],
                        depth: d,
                    });
                    let id = nodes.len() - 1;
                    nodes[parent].children.push(id);
                    parent = id;
                }
            }
            total += nodes[0].children.len();
        }
        total as f64 / runs as f64
    }

    #[test]
    fn branching_matches_uniform_reference() {
        let (world, sampler) = toy(3, 3);
        let (n, runs) = (10, 3000);
        let mut total = 0usize;
        for seed in 0..runs {
            let mut tree = DecisionTree::new(world.initial_state(), EloConfig::default()).unwrap();
            let policy = ExplorationPolicy::new(EloConfig::default(), 12, seed as u64).unwrap();
            let mut streams = policy.streams();
            let mut ledger = CallLedger::new(10_000);
            for _ in 0..n {
                explore_once(&mut tree, &world, &sampler, &policy, &mut streams, &mut ledger).unwrap();
            }
            total += tree.root().children.len();
        }
        let ours = total as f64 / runs as f64;
        let reference = uniform_walk_reference(n, runs, 3, 99);
        assert!((ours - reference).abs() < 0.1, "engine {ours} vs reference {reference}");
    }
}
