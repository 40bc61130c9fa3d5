use std::fmt::Write;

use crate::tree::Transition;

/// Appended to trails that have not reached a terminal state yet.
pub const IN_PROGRESS_MARKER: &str = "(in progress)";

/// Renders a path as the textual trail of calls a judge compares.
///
/// One block per step: the action name, its arguments as sorted compact
/// JSON, and the observation. Output is a pure function of the path.
pub fn render_sequence_for_judge(path: &[Transition], in_progress: bool) -> String {
    let mut out = String::new();
    for (i, step) in path.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "Step {}:", i + 1);
        let _ = writeln!(out, "Action: {}", step.action.name);
        let _ = writeln!(out, "Arguments: {}", step.action.arguments_json());
        let _ = writeln!(out, "Observation: {}", step.observation);
    }
    if in_progress {
        out.push_str(IN_PROGRESS_MARKER);
        out.push('\n');
    }
    out
}
