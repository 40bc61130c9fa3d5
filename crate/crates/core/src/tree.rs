//! Search tree of decision steps.
//!
//! Nodes live in an arena indexed by [`NodeId`]; ids are assigned in
//! creation order and never reused, so the id doubles as a creation
//! timestamp (used for tie-breaking during optimum selection).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::elo::EloConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Environment state after a decision step. The payload is opaque to the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub payload: serde_json::Value,
    pub terminal: bool,
}

impl State {
    pub fn new(payload: serde_json::Value, terminal: bool) -> Self {
        Self { payload, terminal }
    }
}

/// A named action with string-valued arguments (a tool call in the synthetic worlds).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub name: String,
    #[serde(default)]
    pub arguments: BTreeMap<String, serde_json::Value>,
}

impl Action {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            arguments: BTreeMap::new(),
        }
    }

    pub fn with_arg(mut self, key: impl Into<String>, value: impl Into<serde_json::Value>) -> Self {
        self.arguments.insert(key.into(), value.into());
        self
    }

    /// Arguments as compact JSON with sorted keys.
    pub fn arguments_json(&self) -> String {
        serde_json::to_string(&self.arguments).expect("string-keyed map always serializes")
    }
}

/// One environment transition: the action taken, what was observed, and where it led.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub action: Action,
    pub observation: String,
    pub state: State,
    /// The action was the environment's explicit finish action.
    pub finish: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub depth: u32,
    pub action: Option<Action>,
    pub observation: Option<String>,
    pub state: State,
    pub elo: f64,
    pub update_count: u64,
    pub children: Vec<NodeId>,
    /// The sequence ending here issued the explicit finish action.
    pub finished: bool,
    /// The rollout that produced this leaf was cut short by the call budget.
    pub truncated: bool,
}

impl DecisionNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn is_root(&self) -> bool {
        self.parent.is_none()
    }

    pub fn is_terminal(&self) -> bool {
        self.state.terminal
    }
}

/// Root-to-leaf path. `nodes[0]` is the root, `nodes.last()` is `leaf`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionSequence {
    pub nodes: Vec<NodeId>,
    pub leaf: NodeId,
}

impl DecisionSequence {
    /// Number of decision steps (the root is not a step).
    pub fn len(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn steps(&self) -> &[NodeId] {
        &self.nodes[1..]
    }
}

/// Softmax weights of a node's children.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedChildren {
    pub entries: Vec<(NodeId, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    config: EloConfig,
    nodes: Vec<DecisionNode>,
}

impl DecisionTree {
    pub fn new(initial_state: State, config: EloConfig) -> Result<Self> {
        config.validate()?;
        if initial_state.terminal {
            return Err(Error::invalid("initial state must not be terminal"));
        }
        let root = DecisionNode {
            id: NodeId::ROOT,
            parent: None,
            depth: 0,
            action: None,
            observation: None,
            state: initial_state,
            elo: config.initial_score,
            update_count: 0,
            children: Vec::new(),
            finished: false,
            truncated: false,
        };
        Ok(Self {
            config,
            nodes: vec![root],
        })
    }

    pub fn config(&self) -> &EloConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> &DecisionNode {
        &self.nodes[0]
    }

    pub fn nodes(&self) -> &[DecisionNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&DecisionNode> {
        self.nodes
            .get(id.index())
            .ok_or_else(|| Error::NotFound(format!("node {id}")))
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> Result<&mut DecisionNode> {
        self.nodes
            .get_mut(id.index())
            .ok_or_else(|| Error::NotFound(format!("node {id}")))
    }

    /// Attaches a chain of transitions under `from` and returns the new leaf.
    pub fn append_path(&mut self, from: NodeId, steps: Vec<Transition>) -> Result<NodeId> {
        let start = self.node(from)?;
        if start.is_terminal() {
            return Err(Error::invalid(format!("cannot extend terminal node {from}")));
        }
        if steps.is_empty() {
            return Err(Error::invalid("path must contain at least one step"));
        }
        if let Some(pos) = steps[..steps.len() - 1].iter().position(|t| t.state.terminal) {
            return Err(Error::invalid(format!("interior step {pos} reaches a terminal state")));
        }

        let mut parent = from;
        let base_depth = start.depth;
        let last = steps.len() - 1;
        for (i, step) in steps.into_iter().enumerate() {
            let depth = base_depth + i as u32 + 1;
            let id = NodeId(self.nodes.len() as u32);
            self.nodes.push(DecisionNode {
                id,
                parent: Some(parent),
                depth,
                action: Some(step.action),
                observation: Some(step.observation),
                state: step.state,
                elo: self.config.initial_score,
                update_count: 0,
                children: Vec::new(),
                finished: i == last && step.finish,
                truncated: false,
            });
            self.nodes[parent.index()].children.push(id);
            parent = id;
        }
        Ok(parent)
    }

    pub(crate) fn mark_truncated(&mut self, leaf: NodeId) -> Result<()> {
        self.node_mut(leaf)?.truncated = true;
        Ok(())
    }

    /// The root-to-leaf path ending at `leaf`.
    pub fn sequence_of(&self, leaf: NodeId) -> Result<DecisionSequence> {
        let node = self.node(leaf)?;
        if !node.is_leaf() {
            return Err(Error::invalid(format!("node {leaf} has children")));
        }
        if node.is_root() {
            return Err(Error::invalid("the root alone is not a decision sequence"));
        }
        let mut nodes = vec![leaf];
        let mut cursor = node.parent;
        while let Some(id) = cursor {
            nodes.push(id);
            cursor = self.nodes[id.index()].parent;
        }
        nodes.reverse();
        Ok(DecisionSequence { nodes, leaf })
    }

    /// Path from the root to any node (inclusive), without the leaf check.
    pub fn path_to(&self, id: NodeId) -> Result<Vec<NodeId>> {
        self.node(id)?;
        let mut nodes = vec![id];
        let mut cursor = self.nodes[id.index()].parent;
        while let Some(p) = cursor {
            nodes.push(p);
            cursor = self.nodes[p.index()].parent;
        }
        nodes.reverse();
        Ok(nodes)
    }

    /// All leaves except the root, in creation order.
    pub fn leaves(&self) -> impl Iterator<Item = &DecisionNode> {
        self.nodes.iter().filter(|n| n.is_leaf() && !n.is_root())
    }

    /// Leaves whose rollout ran to a terminal state or the step cap.
    pub fn completed_leaves(&self) -> impl Iterator<Item = &DecisionNode> {
        self.leaves().filter(|n| !n.truncated)
    }

    pub fn actions_on_path(&self, id: NodeId) -> Result<Vec<Action>> {
        Ok(self
            .path_to(id)?
            .into_iter()
            .filter_map(|n| self.nodes[n.index()].action.clone())
            .collect())
    }

    pub fn transitions_of(&self, sequence: &DecisionSequence) -> Result<Vec<Transition>> {
        self.transitions_to(sequence.leaf)
    }

    /// Transitions along the path from the root to `id`.
    pub fn transitions_to(&self, id: NodeId) -> Result<Vec<Transition>> {
        let path = self.path_to(id)?;
        Ok(path[1..]
            .iter()
            .map(|&n| {
                let node = &self.nodes[n.index()];
                Transition {
                    action: node.action.clone().expect("non-root nodes carry an action"),
                    observation: node.observation.clone().unwrap_or_default(),
                    state: node.state.clone(),
                    finish: node.finished,
                }
            })
            .collect())
    }

    pub fn children_weights(&self, id: NodeId, tau: f64) -> Result<WeightedChildren> {
        let node = self.node(id)?;
        let scores: Vec<f64> = node.children.iter().map(|c| self.nodes[c.index()].elo).collect();
        let weights = softmax(&scores, tau)?;
        Ok(WeightedChildren {
            entries: node.children.iter().copied().zip(weights).collect(),
        })
    }

    #[cfg(test)]
    pub(crate) fn set_elo(&mut self, id: NodeId, elo: f64) -> Result<()> {
        self.node_mut(id)?.elo = elo;
        Ok(())
    }

    /// Full-walk structural check: parent/child symmetry, id order, depths,
    /// root shape, acyclicity and finite scores.
    pub fn audit(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::invalid(msg));
        let Some(root) = self.nodes.first() else {
            return fail("tree has no root".into());
        };
        if root.parent.is_some() || root.action.is_some() || root.id != NodeId::ROOT {
            return fail("root must have id 0, no parent and no action".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id.index() != i {
                return fail(format!("node at index {i} carries id {}", node.id));
            }
            if !node.elo.is_finite() {
                return fail(format!("node {} has non-finite elo", node.id));
            }
            if i > 0 {
                let Some(parent) = node.parent else {
                    return fail(format!("node {} has no parent", node.id));
                };
                // Parents are always created first, which also rules out cycles.
                if parent.index() >= i {
                    return fail(format!("node {} has parent {parent} created after it", node.id));
                }
                if node.action.is_none() {
                    return fail(format!("node {} has no incoming action", node.id));
                }
                let p = &self.nodes[parent.index()];
                if p.depth + 1 != node.depth {
                    return fail(format!("node {} has inconsistent depth", node.id));
                }
                if p.children.iter().filter(|&&c| c == node.id).count() != 1 {
                    return fail(format!("parent {parent} does not list child {} exactly once", node.id));
                }
                if p.is_terminal() {
                    return fail(format!("terminal node {parent} has children"));
                }
            }
            for &c in &node.children {
                match self.nodes.get(c.index()) {
                    Some(child) if child.parent == Some(node.id) => {}
                    _ => return fail(format!("child {c} of {} does not point back", node.id)),
                }
            }
        }
        Ok(())
    }
}

/// Softmax of `scores / tau`, computed with max subtraction.
pub fn softmax(scores: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid(format!(
            "temperature must be positive and finite, got {tau}"
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("score {bad} is not finite")));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| ((s - max) / tau).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Softmax-weighted mean of child scores at temperature `tau`.
pub fn aggregate_children_elo(child_scores: &[f64], tau: f64) -> Result<f64> {
    if child_scores.is_empty() {
        return Err(Error::invalid("aggregation needs at least one child score"));
    }
    let weights = softmax(child_scores, tau)?;
    let value: f64 = weights.iter().zip(child_scores).map(|(w, s)| w * s).sum();
    // Rounding can leave the sum a hair outside the input range.
    let lo = child_scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = child_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(value.clamp(lo, hi))
}
