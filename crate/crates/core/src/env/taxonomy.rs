//! Failure categories for tool-world sequences, read off observation markers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tools::{MARK_CALL_ERROR, MARK_FINISH, MARK_HALLUCINATED, MARK_OK, MARK_UNAVAILABLE};
use crate::error::{Error, Result};
use crate::tree::Transition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FailureCategory {
    UnavailableTool,
    ToolCallError,
    HallucinatedTool,
    DecisionFailure,
}

impl FailureCategory {
    pub const ALL: [FailureCategory; 4] = [
        FailureCategory::UnavailableTool,
        FailureCategory::ToolCallError,
        FailureCategory::HallucinatedTool,
        FailureCategory::DecisionFailure,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FailureCategory::UnavailableTool => "UNAVAILABLE_TOOL",
            FailureCategory::ToolCallError => "TOOL_CALL_ERROR",
            FailureCategory::HallucinatedTool => "HALLUCINATED_TOOL",
            FailureCategory::DecisionFailure => "DECISION_FAILURE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryOutcome {
    pub occurrences: usize,
    /// A qualifying successful call came after the last occurrence.
    pub fixed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureReport {
    pub categories: BTreeMap<FailureCategory, CategoryOutcome>,
}

impl FailureReport {
    pub fn contains(&self, c: FailureCategory) -> bool {
        self.categories.contains_key(&c)
    }

    pub fn fixed(&self, c: FailureCategory) -> Option<bool> {
        self.categories.get(&c).map(|o| o.fixed)
    }

    pub fn is_clean(&self) -> bool {
        self.categories.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Ok,
    Unavailable,
    CallError,
    Hallucinated,
    Finish,
}

fn kind_of(observation: &str) -> Option<Kind> {
    [
        (MARK_OK, Kind::Ok),
        (MARK_UNAVAILABLE, Kind::Unavailable),
        (MARK_CALL_ERROR, Kind::CallError),
        (MARK_HALLUCINATED, Kind::Hallucinated),
        (MARK_FINISH, Kind::Finish),
    ]
    .into_iter()
    .find(|(m, _)| observation.starts_with(m))
    .map(|(_, k)| k)
}

/// Classifies one tool-world sequence.
///
/// A call error counts as fixed when the same tool later succeeds; the other
/// fault categories count as fixed when any later call succeeds. Decision
/// failure is reported only when the sequence never finished or never made a
/// successful call and no fault marker appears at all.
pub fn classify_failure(path: &[Transition]) -> Result<FailureReport> {
    let mut kinds = Vec::with_capacity(path.len());
    for (i, t) in path.iter().enumerate() {
        let k = kind_of(&t.observation).ok_or_else(|| {
            Error::invalid(format!(
                "step {} has no tool-world marker; not a tool-world sequence",
                i + 1
            ))
        })?;
        kinds.push(k);
    }

    let mut report = FailureReport::default();
    let mut record = |cat: FailureCategory, fixed: bool| {
        let e = report.categories.entry(cat).or_insert(CategoryOutcome {
            occurrences: 0,
            fixed: false,
        });
        e.occurrences += 1;
        // Later occurrences overwrite: only the last one decides.
        e.fixed = fixed;
    };
    for (i, k) in kinds.iter().enumerate() {
        let later = || (i + 1..path.len()).filter(|&j| kinds[j] == Kind::Ok);
        match k {
            Kind::Unavailable => record(FailureCategory::UnavailableTool, later().next().is_some()),
            Kind::Hallucinated => record(FailureCategory::HallucinatedTool, later().next().is_some()),
            Kind::CallError => {
                let tool = &path[i].action.name;
                record(
                    FailureCategory::ToolCallError,
                    later().any(|j| &path[j].action.name == tool),
                )
            }
            Kind::Ok | Kind::Finish => {}
        }
    }

    let finished = kinds.last() == Some(&Kind::Finish);
    let any_ok = kinds.contains(&Kind::Ok);
    if report.categories.is_empty() && (!finished || !any_ok) {
        report.categories.insert(
            FailureCategory::DecisionFailure,
            CategoryOutcome {
                occurrences: 1,
                fixed: false,
            },
        );
    }
    Ok(report)
}
