//! On-disk formats: run records (single JSON or JSON lines), tree snapshots,
//! suite metrics and their CSV exports. Every JSON document carries a
//! `format` tag and a `version` checked on load.

use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::suite::{SuiteMetrics, METRICS_FORMAT, METRICS_VERSION};
use super::RunRecord;
use crate::error::{Error, Result};
use crate::tree::DecisionTree;

pub const RUN_FORMAT: &str = "elosearch-run";
pub const RUN_VERSION: u32 = 1;
pub const TREE_FORMAT: &str = "elosearch-tree";
pub const TREE_VERSION: u32 = 1;

fn parse_err(what: &str, message: impl std::fmt::Display) -> Error {
    Error::Parse {
        what: what.into(),
        message: message.to_string(),
    }
}

/// Checks the header before the body so a newer file reports a version
/// error rather than a confusing field error.
fn decode<T: DeserializeOwned>(value: Value, format: &str, version: u32, what: &str) -> Result<T> {
    if value.get("format").and_then(Value::as_str) != Some(format) {
        return Err(parse_err(
            what,
            format!("missing or wrong format tag (expected {format:?})"),
        ));
    }
    let found = value.get("version").and_then(Value::as_u64).unwrap_or(0) as u32;
    if found != version {
        return Err(Error::IncompatibleVersion {
            kind: format.into(),
            expected: version,
            found,
        });
    }
    serde_json::from_value(value).map_err(|e| parse_err(what, e))
}

fn decode_str<T: DeserializeOwned>(text: &str, format: &str, version: u32, what: &str) -> Result<T> {
    let value: Value = serde_json::from_str(text).map_err(|e| parse_err(what, e))?;
    decode(value, format, version, what)
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl RunRecord {
    pub fn to_json(&self) -> String {
        pretty(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        decode_str(text, RUN_FORMAT, RUN_VERSION, "run record")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write(path, &self.to_json())
    }
}

/// One compact record per line.
pub fn records_to_jsonl(records: &[RunRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Parses JSON lines; blank lines are skipped and errors name the line.
pub fn records_from_jsonl(text: &str) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let what = format!("run record on line {}", i + 1);
        let value: Value = serde_json::from_str(line).map_err(|e| parse_err(&what, e))?;
        out.push(decode(value, RUN_FORMAT, RUN_VERSION, &what)?);
    }
    Ok(out)
}

pub fn save_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    write(path, &records_to_jsonl(records))
}

/// Accepts either a single pretty record or JSON lines.
pub fn load_records(path: &Path) -> Result<Vec<RunRecord>> {
    let text = read(path)?;
    if let Ok(one) = RunRecord::from_json(&text) {
        return Ok(vec![one]);
    }
    records_from_jsonl(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeEnvelope {
    format: String,
    version: u32,
    tree: DecisionTree,
}

pub fn tree_to_json(tree: &DecisionTree) -> String {
    pretty(&TreeEnvelope {
        format: TREE_FORMAT.into(),
        version: TREE_VERSION,
        tree: tree.clone(),
    })
}

pub fn tree_from_json(text: &str) -> Result<DecisionTree> {
    let env: TreeEnvelope = decode_str(text, TREE_FORMAT, TREE_VERSION, "tree")?;
    Ok(env.tree)
}

pub fn save_tree(path: &Path, tree: &DecisionTree) -> Result<()> {
    write(path, &tree_to_json(tree))
}

pub fn load_tree(path: &Path) -> Result<DecisionTree> {
    tree_from_json(&read(path)?)
}

impl SuiteMetrics {
    pub fn to_json(&self) -> String {
        pretty(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        decode_str(text, METRICS_FORMAT, METRICS_VERSION, "suite metrics")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write(path, &self.to_json())
    }

    pub fn pass_rate_csv(&self) -> String {
        let mut s = String::from("method,budget,runs,passed,pass_rate\n");
        for p in &self.pass_rates {
            let _ = writeln!(s, "{},{},{},{},{}", p.method, p.budget, p.runs, p.passed, p.pass_rate);
        }
        s
    }

    pub fn rank_csv(&self) -> String {
        let mut s = String::from("method,mean_rank,tournaments\n");
        for r in &self.preference_ranks {
            let _ = writeln!(s, "{},{},{}", r.method, r.mean_rank, r.tournaments);
        }
        s
    }

    pub fn elo_bucket_csv(&self) -> String {
        let mut s = String::from("bucket,lower,upper,runs,passed,pass_rate\n");
        for b in &self.elo_buckets {
            let rate = b.pass_rate.map(|r| r.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                b.index, b.lower, b.upper, b.runs, b.passed, rate
            );
        }
        s
    }

    pub fn taxonomy_csv(&self) -> String {
        let mut s = String::from("method,category,runs,occurrences,fixed,incidence,fix_ratio\n");
        for t in &self.taxonomy {
            let ratio = t.fix_ratio.map(|r| r.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                t.method,
                t.category.label(),
                t.runs,
                t.occurrences,
                t.fixed,
                t.incidence,
                ratio
            );
        }
        s
    }

    /// Writes `metrics.json` plus one CSV per table into `dir`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        self.save(&dir.join("metrics.json"))?;
        write(&dir.join("pass_rates.csv"), &self.pass_rate_csv())?;
        write(&dir.join("preference_ranks.csv"), &self.rank_csv())?;
        write(&dir.join("elo_buckets.csv"), &self.elo_bucket_csv())?;
        write(&dir.join("taxonomy.csv"), &self.taxonomy_csv())
    }
}
