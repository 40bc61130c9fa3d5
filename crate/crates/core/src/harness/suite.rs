//! Grids of (task, method, budget, seed) cells run in parallel, and the
//! metrics aggregated from them.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{bucket_trend, elo_bucket_table, EloBucket, MethodRank, PassRatePoint, TaxonomyRow};
use super::{run_with_rand_pick, JudgeSpec, Method, RunRecord, SearchConfig, TaskSource};
use crate::env::{FailureCategory, FailureReport};
use crate::error::{Error, Result};
use crate::judges::{RateLimiter, TaskContext, Trail};
use crate::judgment::{fractional_ranks, ranking_tournament};
use crate::rng::mix64;

pub const METRICS_FORMAT: &str = "elosearch-metrics";
pub const METRICS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub tasks: Vec<TaskSource>,
    /// Methods to run. The random-pick variant is derived from the
    /// score-guided runs and need not be listed separately.
    pub methods: Vec<Method>,
    pub budgets: Vec<u32>,
    pub seeds: Vec<u64>,
    pub config: SearchConfig,
    pub judge: JudgeSpec,
    pub parallelism: usize,
    pub rank_trials: u32,
    /// Budget whose runs feed the ranking and failure tables. Defaults to the
    /// standard call limit when it is on the grid, else the largest budget.
    pub reference_budget: Option<u32>,
    /// Keep full run records (trees included) in the output.
    pub keep_records: bool,
}

impl SuiteSpec {
    pub fn new(tasks: Vec<TaskSource>, judge: JudgeSpec) -> Self {
        Self {
            tasks,
            methods: vec![
                Method::Judec,
                Method::Cot,
                Method::CotAtK,
                Method::Bfs,
                Method::Dfs,
                Method::Dfsdt,
            ],
            budgets: (1..=10).map(|i| i * 30).collect(),
            seeds: (0..10).collect(),
            config: SearchConfig::default(),
            judge,
            parallelism: 1,
            rank_trials: 10,
            reference_budget: None,
            keep_records: false,
        }
    }

    fn reference(&self) -> u32 {
        let standard = SearchConfig::default().budget.max_calls;
        self.reference_budget.unwrap_or(if self.budgets.contains(&standard) {
            standard
        } else {
            self.budgets.iter().copied().max().unwrap_or(standard)
        })
    }

    /// Methods that will show up in the results, derived ones included.
    pub fn reported_methods(&self) -> Vec<Method> {
        let mut out = Vec::new();
        for &m in &self.methods {
            if !out.contains(&m) {
                out.push(m);
            }
            if m == Method::Judec && !out.contains(&Method::JudecRandSelect) {
                out.push(Method::JudecRandSelect);
            }
        }
        out
    }
}

/// The compact outcome of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub task_id: String,
    pub task_index: usize,
    pub method: Method,
    pub budget: u32,
    pub seed: u64,
    pub passed: bool,
    pub selected_elo: Option<f64>,
    pub selected_trail: Option<Trail>,
    pub failure: Option<FailureReport>,
    pub calls_used: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub task_id: String,
    pub method: Method,
    pub budget: u32,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteMetrics {
    pub format: String,
    pub version: u32,
    pub tasks: u32,
    pub seeds: u32,
    pub reference_budget: u32,
    pub pass_rates: Vec<PassRatePoint>,
    pub preference_ranks: Vec<MethodRank>,
    pub elo_buckets: Vec<EloBucket>,
    /// Rank correlation of bucket index with bucket pass rate.
    pub elo_bucket_spearman: Option<f64>,
    pub taxonomy: Vec<TaxonomyRow>,
    pub failures: Vec<CellFailure>,
}

impl SuiteMetrics {
    pub fn pass_rate(&self, method: Method, budget: u32) -> Option<f64> {
        self.pass_rates
            .iter()
            .find(|p| p.method == method && p.budget == budget)
            .map(|p| p.pass_rate)
    }

    pub fn rank_of(&self, method: Method) -> Option<f64> {
        self.preference_ranks
            .iter()
            .find(|r| r.method == method)
            .map(|r| r.mean_rank)
    }

    pub fn taxonomy_row(&self, method: Method, category: FailureCategory) -> Option<&TaxonomyRow> {
        self.taxonomy
            .iter()
            .find(|r| r.method == method && r.category == category)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutput {
    pub metrics: SuiteMetrics,
    pub cells: Vec<CellResult>,
    pub records: Vec<RunRecord>,
}

/// The seed a cell actually runs with: the same for every method and budget,
/// so that budget curves compare prefixes of one search.
pub fn cell_seed(task_index: usize, seed: u64) -> u64 {
    mix64(seed ^ mix64(task_index as u64 + 1))
}

fn cell_of(record: &RunRecord, task_index: usize, budget: u32, seed: u64) -> Result<CellResult> {
    let trail = record.selected_trail()?;
    Ok(CellResult {
        task_id: record.task.id().to_string(),
        task_index,
        method: record.method,
        budget,
        seed,
        passed: record.passed,
        selected_elo: record.selected_elo,
        selected_trail: trail,
        failure: record.failure.clone(),
        calls_used: record.budget_consumed(),
    })
}

type CellOutcome = std::result::Result<Vec<(CellResult, Option<RunRecord>)>, CellFailure>;

/// Runs every cell of the grid and aggregates. A failing cell is recorded
/// and counted as not passed; it never aborts the suite.
pub fn run_suite(spec: &SuiteSpec) -> Result<SuiteOutput> {
    if spec.tasks.is_empty() || spec.budgets.is_empty() || spec.seeds.is_empty() || spec.methods.is_empty() {
        return Err(Error::invalid("suite needs tasks, methods, budgets and seeds"));
    }
    spec.config.validate()?;
    let limiter = match &spec.judge {
        JudgeSpec::Remote { config } => Some(RateLimiter::new(
            config.max_in_flight,
            Duration::from_millis(config.min_interval_ms),
        )),
        _ => None,
    };
    let runnable: Vec<Method> = spec
        .methods
        .iter()
        .copied()
        .filter(|&m| !(m == Method::JudecRandSelect && spec.methods.contains(&Method::Judec)))
        .collect();

    let mut grid = Vec::new();
    for (ti, task) in spec.tasks.iter().enumerate() {
        for &m in &runnable {
            for &b in &spec.budgets {
                for &s in &spec.seeds {
                    grid.push((ti, task, m, b, s));
                }
            }
        }
    }

    let run_cell = |&(ti, task, method, budget, seed): &(usize, &TaskSource, Method, u32, u64)| -> CellOutcome {
        let fail = |e: Error| CellFailure {
            task_id: task.id().to_string(),
            method,
            budget,
            seed,
            error: e.to_string(),
        };
        let config = spec.config.with_calls(budget);
        let (main, extra) = run_with_rand_pick(
            task,
            method,
            &config,
            &spec.judge,
            cell_seed(ti, seed),
            limiter.as_ref(),
        )
        .map_err(fail)?;
        let mut out = Vec::new();
        for record in std::iter::once(main).chain(extra) {
            let cell = cell_of(&record, ti, budget, seed).map_err(fail)?;
            out.push((cell, spec.keep_records.then_some(record)));
        }
        Ok(out)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallelism.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<CellOutcome> = pool.install(|| grid.par_iter().map(run_cell).collect());

    let mut cells = Vec::new();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(v) => {
                for (c, r) in v {
                    cells.push(c);
                    records.extend(r);
                }
            }
            Err(f) => {
                tracing::warn!(task = %f.task_id, method = %f.method, budget = f.budget, seed = f.seed, error = %f.error, "cell failed");
                failures.push(f);
            }
        }
    }
    let metrics = aggregate(spec, &cells, failures, limiter.as_ref())?;
    Ok(SuiteOutput {
        metrics,
        cells,
        records,
    })
}

fn aggregate(
    spec: &SuiteSpec,
    cells: &[CellResult],
    failures: Vec<CellFailure>,
    limiter: Option<&Arc<RateLimiter>>,
) -> Result<SuiteMetrics> {
    let methods = spec.reported_methods();
    let reference = spec.reference();

    let mut pass_rates = Vec::new();
    for &m in &methods {
        for &b in &spec.budgets {
            let ok = cells.iter().filter(|c| c.method == m && c.budget == b);
            let passed = ok.clone().filter(|c| c.passed).count() as u32;
            let failed = failures
                .iter()
                .filter(|f| {
                    f.budget == b && (f.method == m || (m == Method::JudecRandSelect && f.method == Method::Judec))
                })
                .count() as u32;
            let runs = ok.count() as u32 + failed;
            pass_rates.push(PassRatePoint {
                method: m,
                budget: b,
                runs,
                passed,
                pass_rate: if runs == 0 {
                    0.0
                } else {
                    f64::from(passed) / f64::from(runs)
                },
            });
        }
    }

    let elo_points: Vec<(f64, bool)> = cells
        .iter()
        .filter(|c| c.method == Method::Judec)
        .filter_map(|c| c.selected_elo.map(|e| (e, c.passed)))
        .collect();
    let elo_buckets = elo_bucket_table(&elo_points);
    let elo_bucket_spearman = bucket_trend(&elo_buckets);

    let preference_ranks = preference_ranks(spec, cells, &methods, reference, limiter)?;

    let mut taxonomy = Vec::new();
    for &m in &methods {
        let classified: Vec<&FailureReport> = cells
            .iter()
            .filter(|c| c.method == m && c.budget == reference)
            .filter_map(|c| c.failure.as_ref())
            .collect();
        if classified.is_empty() {
            continue;
        }
        let runs = classified.len() as u32;
        for cat in FailureCategory::ALL {
            let occurrences = classified.iter().filter(|r| r.contains(cat)).count() as u32;
            let fixed = classified.iter().filter(|r| r.fixed(cat) == Some(true)).count() as u32;
            taxonomy.push(TaxonomyRow {
                method: m,
                category: cat,
                runs,
                occurrences,
                fixed,
                incidence: f64::from(occurrences) / f64::from(runs),
                fix_ratio: (occurrences > 0).then(|| f64::from(fixed) / f64::from(occurrences)),
            });
        }
    }

    Ok(SuiteMetrics {
        format: METRICS_FORMAT.into(),
        version: METRICS_VERSION,
        tasks: spec.tasks.len() as u32,
        seeds: spec.seeds.len() as u32,
        reference_budget: reference,
        pass_rates,
        preference_ranks,
        elo_buckets,
        elo_bucket_spearman,
        taxonomy,
        failures,
    })
}

/// For each (task, seed) at the reference budget, a tournament among the
/// methods' selected sequences. A method without a selection shares the
/// bottom ranks.
fn preference_ranks(
    spec: &SuiteSpec,
    cells: &[CellResult],
    methods: &[Method],
    reference: u32,
    limiter: Option<&Arc<RateLimiter>>,
) -> Result<Vec<MethodRank>> {
    if methods.len() < 2 || spec.rank_trials == 0 {
        return Ok(Vec::new());
    }
    let mut groups: BTreeMap<(usize, u64), Vec<&CellResult>> = BTreeMap::new();
    for c in cells.iter().filter(|c| c.budget == reference) {
        groups.entry((c.task_index, c.seed)).or_default().push(c);
    }
    let groups: Vec<((usize, u64), Vec<&CellResult>)> = groups.into_iter().collect();

    let rank_group = |((ti, seed), group): &((usize, u64), Vec<&CellResult>)| -> Result<Vec<f64>> {
        let present: Vec<(usize, &Trail)> = methods
            .iter()
            .enumerate()
            .filter_map(|(i, m)| {
                group
                    .iter()
                    .find(|c| c.method == *m)
                    .and_then(|c| c.selected_trail.as_ref())
                    .map(|t| (i, t))
            })
            .collect();
        let n = methods.len();
        let bottom = {
            // Missing methods tie for the ranks after the present ones.
            let k = present.len();
            (k + 1 + n) as f64 / 2.0
        };
        let mut ranks = vec![bottom; n];
        match present.len() {
            0 => {}
            1 => ranks[present[0].0] = 1.0,
            _ => {
                let trails: Vec<Trail> = present.iter().map(|(_, t)| (*t).clone()).collect();
                let context = spec.tasks[*ti].build()?.environment.context();
                let mut judge = spec.judge.build(limiter)?;
                let result = ranking_tournament(
                    &trails,
                    judge.as_mut(),
                    &context,
                    spec.rank_trials,
                    mix64(cell_seed(*ti, *seed) ^ 0x7261_6e6b),
                    None,
                )?;
                for ((i, _), r) in present.iter().zip(result.mean_ranks) {
                    ranks[*i] = r;
                }
            }
        }
        Ok(ranks)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallelism.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let per_group: Vec<Result<Vec<f64>>> = pool.install(|| groups.par_iter().map(rank_group).collect());

    let mut sums = vec![0.0; methods.len()];
    let mut count = 0u32;
    for r in per_group {
        match r {
            Ok(ranks) => {
                for (s, x) in sums.iter_mut().zip(ranks) {
                    *s += x;
                }
                count += 1;
            }
            Err(e) => tracing::warn!(error = %e, "ranking tournament failed"),
        }
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    Ok(methods
        .iter()
        .zip(sums)
        .map(|(&m, s)| MethodRank {
            method: m,
            mean_rank: s / f64::from(count),
            tournaments: count,
        })
        .collect())
}

/// Same ordering rule as the tournaments, exposed for callers ranking
/// precomputed scores.
pub fn rank_scores(scores: &[f64]) -> Vec<f64> {
    fractional_ranks(scores)
}

/// Context a suite uses for a task's tournaments.
pub fn task_context(task: &TaskSource) -> Result<TaskContext> {
    Ok(task.build()?.environment.context())
}
