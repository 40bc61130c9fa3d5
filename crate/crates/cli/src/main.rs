//! Command-line front end: single runs, suites, tournaments over stored
//! results, tree inspection, replay checks and world generation.
//!
//! Failures exit with status 2 after printing one JSON line to stderr:
//! `{"error":{"kind":"...","message":"..."}}`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use elosearch::env::WorldSuite;
use elosearch::harness::config::{FileConfig, JudgeKind};
use elosearch::harness::persist::{load_records, load_tree, save_records};
use elosearch::harness::suite::run_suite;
use elosearch::harness::{replay_record, run_with_rand_pick, JudgeSpec, Method, RunRecord, TaskSource};
use elosearch::judgment::ranking_tournament;
use elosearch::{DecisionTree, NodeId};
use serde_json::json;

#[derive(Parser)]
#[command(name = "elosearch", version, about = "Elo-guided decision search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured judge.
    #[arg(long, value_parser = ["oracle", "replay", "remote"])]
    judge: Option<String>,
    /// Verdict script for `--judge replay`.
    #[arg(long)]
    replay_script: Option<PathBuf>,
    /// Noise of the oracle judge.
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method on one task of a world file.
    Run {
        #[command(flatten)]
        common: Common,
        /// World suite file.
        #[arg(long)]
        env: PathBuf,
        /// Task id or zero-based index within the world file.
        #[arg(long, default_value = "0")]
        task: String,
        #[arg(long, default_value = "judec")]
        method: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Call budget; overrides the configured one.
        #[arg(long)]
        budget: Option<u32>,
        /// Directory for the run record(s).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full (task, method, budget, seed) grid and write metrics.
    Suite {
        #[command(flatten)]
        common: Common,
        /// World suite file; overrides `suite.world` in the config.
        #[arg(long)]
        env: Option<PathBuf>,
        /// Comma-separated methods.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        /// Comma-separated budgets.
        #[arg(long, value_delimiter = ',')]
        budget: Vec<u32>,
        /// Number of seeds, starting at `--seed`.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        parallel: Option<usize>,
        /// Tournament repetitions for preference ranks; 0 skips ranking.
        #[arg(long)]
        rank_trials: Option<u32>,
        /// Also write every run record as JSON lines.
        #[arg(long)]
        keep_records: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tournament over the selected sequences of stored records of one task.
    Rank {
        #[command(flatten)]
        common: Common,
        /// Record files (single JSON or JSON lines).
        #[arg(required = true)]
        records: Vec<PathBuf>,
        #[arg(long, default_value_t = 10)]
        trials: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print a stored tree with scores and update counts.
    Inspect {
        /// A run record or a tree file.
        file: PathBuf,
        /// Limit the printed depth.
        #[arg(long)]
        max_depth: Option<u32>,
    },
    /// Re-execute stored records and verify identical outcomes.
    Replay {
        /// Record files (single JSON or JSON lines).
        #[arg(required = true)]
        records: Vec<PathBuf>,
    },
    /// Write a generated world suite.
    Generate {
        #[arg(long, default_value = "medium")]
        tier: String,
        #[arg(long, default_value_t = 50)]
        tasks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Library errors already name their cause; only anyhow chains
            // need flattening.
            let (kind, message) = match e.downcast_ref::<elosearch::Error>() {
                Some(lib) => (lib.kind(), lib.to_string()),
                None => ("cli", format!("{e:#}")),
            };
            eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
            ExitCode::from(2)
        }
    }
}

fn load_config(common: &Common) -> anyhow::Result<FileConfig> {
    let mut config = match &common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    if let Some(kind) = &common.judge {
        config.judge.kind = JudgeKind::parse(kind)?;
    }
    if let Some(script) = &common.replay_script {
        // Flags resolve against the working directory, not the config file.
        config.judge.replay_script = Some(std::path::absolute(script)?);
    }
    if let Some(sigma) = common.sigma {
        config.judge.sigma = sigma;
    }
    Ok(config)
}

fn pick_task(world: &WorldSuite, key: &str) -> anyhow::Result<TaskSource> {
    let found = world
        .tasks
        .iter()
        .find(|t| t.id == key)
        .or_else(|| key.parse::<usize>().ok().and_then(|i| world.tasks.get(i)));
    match found {
        Some(t) => Ok(TaskSource::Tools(t.clone())),
        None => bail!("no task {key:?} in world {:?}", world.name),
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{value}");
}

fn summary(record: &RunRecord) -> serde_json::Value {
    json!({
        "task": record.task.id(),
        "method": record.method,
        "seed": record.seed,
        "passed": record.passed,
        "selected_elo": record.selected_elo,
        "sequences": record.sequences.len(),
        "calls_used": record.budget_consumed(),
        "flags": record.flags,
    })
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Run {
            common,
            env,
            task,
            method,
            seed,
            budget,
            out,
        } => {
            let config = load_config(&common)?;
            let mut search = config.search();
            if let Some(b) = budget {
                search.budget.max_calls = b;
            }
            let world = WorldSuite::load(&env)?;
            let task = pick_task(&world, &task)?;
            let method = Method::parse(&method)?;
            let (main, extra) = run_with_rand_pick(&task, method, &search, &config.judge_spec()?, seed, None)?;
            for record in std::iter::once(&main).chain(extra.as_ref()) {
                if let Some(dir) = &out {
                    let path = dir.join(format!("{}-{}-{}.json", record.task.id(), record.method, record.seed));
                    record.save(&path)?;
                }
                print_json(&summary(record));
            }
        }
        Command::Suite {
            common,
            env,
            methods,
            budget,
            seeds,
            seed,
            parallel,
            rank_trials,
            keep_records,
            out,
        } => {
            let mut config = load_config(&common)?;
            if let Some(p) = parallel {
                config.suite.parallel = p;
            }
            if let Some(t) = rank_trials {
                config.suite.rank_trials = t;
            }
            if !budget.is_empty() {
                config.suite.budgets = budget;
            }
            if !methods.is_empty() {
                config.suite.methods = methods.iter().map(|m| Method::parse(m)).collect::<Result<_, _>>()?;
            }
            if let Some(n) = seeds {
                config.suite.seeds = (seed..seed + n).collect();
            }
            let tasks = match &env {
                Some(path) => Some(
                    WorldSuite::load(path)?
                        .tasks
                        .into_iter()
                        .map(TaskSource::Tools)
                        .collect(),
                ),
                None => None,
            };
            let mut spec = config.suite_spec(tasks)?;
            spec.keep_records = keep_records;
            let output = run_suite(&spec)?;
            output.metrics.export(&out)?;
            if keep_records {
                save_records(&out.join("records.jsonl"), &output.records)?;
            }
            let cells = out.join("cells.jsonl");
            let mut text = String::new();
            for c in &output.cells {
                writeln!(text, "{}", serde_json::to_string(c)?)?;
            }
            std::fs::write(&cells, text).with_context(|| format!("writing {}", cells.display()))?;
            print_json(&json!({
                "out": out,
                "cells": output.cells.len(),
                "failures": output.metrics.failures.len(),
                "elo_bucket_spearman": output.metrics.elo_bucket_spearman,
            }));
        }
        Command::Rank {
            common,
            records,
            trials,
            seed,
        } => {
            let config = load_config(&common)?;
            let mut all = Vec::new();
            for path in &records {
                all.extend(load_records(path)?);
            }
            let with_selection: Vec<&RunRecord> = all.iter().filter(|r| r.selected.is_some()).collect();
            if with_selection.len() < 2 {
                bail!("need at least two records with a selected sequence");
            }
            let task = &with_selection[0].task;
            if with_selection.iter().any(|r| &r.task != task) {
                bail!("all ranked records must share one task");
            }
            let trails = with_selection
                .iter()
                .map(|r| r.selected_trail().map(|t| t.expect("filtered on selection")))
                .collect::<Result<Vec<_>, _>>()?;
            let context = task.build()?.environment.context();
            let spec = match config.judge.kind {
                JudgeKind::Oracle => JudgeSpec::Oracle {
                    sigma: config.judge.sigma,
                },
                _ => config.judge_spec()?,
            };
            let mut judge = spec.build(None)?;
            let result = ranking_tournament(&trails, judge.as_mut(), &context, trials, seed, None)?;
            for (r, rank) in with_selection.iter().zip(&result.mean_ranks) {
                print_json(&json!({
                    "task": r.task.id(),
                    "method": r.method,
                    "seed": r.seed,
                    "mean_rank": rank,
                }));
            }
            if !result.flagged_pairings.is_empty() {
                eprintln!(
                    "{} pairings failed and were scored as draws",
                    result.flagged_pairings.len()
                );
            }
        }
        Command::Inspect { file, max_depth } => {
            let tree = load_tree_or_record(&file)?;
            print!("{}", render_tree(&tree, max_depth));
        }
        Command::Replay { records } => {
            let mut mismatched = 0;
            for path in &records {
                for record in load_records(path)? {
                    let (report, _) = replay_record(&record)?;
                    if !report.is_identical() {
                        mismatched += 1;
                    }
                    print_json(&json!({
                        "task": record.task.id(),
                        "method": record.method,
                        "seed": record.seed,
                        "identical": report.is_identical(),
                        "report": report,
                    }));
                }
            }
            if mismatched > 0 {
                bail!("{mismatched} record(s) did not replay identically");
            }
        }
        Command::Generate { tier, tasks, seed, out } => {
            let world = WorldSuite::generate(&tier, tasks, seed)?;
            world.save(&out)?;
            print_json(&json!({ "out": out, "tier": tier, "tasks": world.tasks.len() }));
        }
    }
    Ok(())
}

fn load_tree_or_record(path: &Path) -> anyhow::Result<DecisionTree> {
    match load_tree(path) {
        Ok(tree) => Ok(tree),
        Err(tree_err) => match load_records(path) {
            Ok(mut records) if records.len() == 1 => Ok(records.remove(0).tree),
            Ok(records) => bail!("{} holds {} records; inspect takes one", path.display(), records.len()),
            Err(_) => Err(tree_err.into()),
        },
    }
}

/// One line per node, indented by depth.
fn render_tree(tree: &DecisionTree, max_depth: Option<u32>) -> String {
    let mut out = String::new();
    let mut stack = vec![NodeId::ROOT];
    while let Some(id) = stack.pop() {
        let node = tree.node(id).expect("ids come from the tree");
        if max_depth.is_some_and(|d| node.depth > d) {
            continue;
        }
        let label = match &node.action {
            None => "(root)".to_string(),
            Some(a) if a.arguments.is_empty() => a.name.clone(),
            Some(a) => format!("{} {}", a.name, serde_json::to_string(&a.arguments).unwrap_or_default()),
        };
        let mut tags = String::new();
        if node.finished {
            tags.push_str(" finished");
        }
        if node.truncated {
            tags.push_str(" truncated");
        }
        let _ = writeln!(
            out,
            "{:indent$}{} {} elo={:.2} updates={}{}",
            "",
            id,
            label,
            node.elo,
            node.update_count,
            tags,
            indent = 2 * node.depth as usize
        );
        stack.extend(node.children.iter().rev());
    }
    out
}
