//! Call budget and the ledger that enforces it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    /// Environment steps plus judge trials allowed for one search.
    pub max_calls: u32,
    pub max_steps_per_sequence: u32,
    pub max_explorations: u32,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_calls: 100,
            max_steps_per_sequence: 12,
            max_explorations: 20,
        }
    }
}

impl Budget {
    pub fn with_calls(max_calls: u32) -> Self {
        Self {
            max_calls,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps_per_sequence == 0 || self.max_explorations == 0 {
            return Err(Error::invalid("budget step cap and exploration count must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    EnvironmentStep,
    JudgeTrial,
}

/// Counts every billable call. Engine-internal computation is free.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallLedger {
    pub max_calls: u32,
    pub environment_steps: u32,
    pub judge_trials: u32,
    /// Judge failures, one line each; the affected comparison was discarded.
    pub judge_errors: Vec<String>,
}

impl CallLedger {
    pub fn new(max_calls: u32) -> Self {
        Self {
            max_calls,
            environment_steps: 0,
            judge_trials: 0,
            judge_errors: Vec::new(),
        }
    }

    pub fn used(&self) -> u32 {
        self.environment_steps + self.judge_trials
    }

    pub fn remaining(&self) -> u32 {
        self.max_calls.saturating_sub(self.used())
    }

    pub fn can_afford(&self, calls: u32) -> bool {
        self.remaining() >= calls
    }

    pub fn charge(&mut self, kind: CallKind) -> Result<()> {
        if self.remaining() == 0 {
            return Err(Error::BudgetExhausted {
                used: self.used(),
                max: self.max_calls,
            });
        }
        match kind {
            CallKind::EnvironmentStep => self.environment_steps += 1,
            CallKind::JudgeTrial => self.judge_trials += 1,
        }
        Ok(())
    }

    pub fn record_judge_error(&mut self, message: impl Into<String>) {
        self.judge_errors.push(message.into());
    }
}
