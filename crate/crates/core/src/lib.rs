//! Elo-guided decision search.
//!
//! A searcher grows a tree of decision steps by repeatedly sampling a path
//! from the root (softmax over child scores, with an option to branch off)
//! and rolling out a fresh sequence. Each new sequence is compared against
//! an earlier one by a pairwise judge; the comparison updates both leaves'
//! Elo scores and the change is pushed up to the root. The final answer is
//! the completed sequence with the highest leaf score.

pub mod baselines;
pub mod budget;
pub mod elo;
pub mod env;
pub mod error;
pub mod explore;
pub mod harness;
pub mod judges;
pub mod judgment;
pub mod rng;
pub mod tree;

pub use budget::{Budget, CallKind, CallLedger};
pub use elo::{expected_score, update_pair, ComparisonOutcome, EloConfig};
pub use error::{Error, Result};
pub use explore::{anneal_temperature, explore_once, ExplorationPolicy};
pub use harness::{run_record, select_optimum, JudgeSpec, Method, RunRecord, SearchConfig, TaskSource};
pub use judgment::{judge_new_sequence, propagate_up, ranking_tournament, JudgmentSettings};
pub use tree::{DecisionSequence, DecisionTree, NodeId};
