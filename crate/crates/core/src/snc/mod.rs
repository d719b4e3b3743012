//! Split-and-conquer engine: partitions a query into sub-queries with
//! per-call time budgets, solves them on a worker pool, re-partitions any
//! sub-query that times out under a grown budget, and resolves the global
//! verdict (any Sat wins and cancels the rest; an empty queue proves Unsat).

pub mod wire;

use std::collections::VecDeque;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use crate::iterprop::iterative_propagate_with_stats;
use crate::partition::{partition_input, partition_relu};
use crate::reluplex::{solve as solve_sequential, DirectionPolicy, SolverConfig};
use crate::vnn::{QueryResult, VnnFormula};
use crate::{Error, Result};

/// How a sub-query is divided when it must be split further.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitStrategy {
    /// Bisect the widest input interval.
    InputSplit,
    /// Fix the phases of heuristically chosen ReLUs.
    ReluSplit,
    /// InputSplit for low-dimensional inputs (<= 10), else ReluSplit.
    Hybrid,
}

impl SplitStrategy {
    fn resolve(self, formula: &VnnFormula) -> SplitStrategy {
        match self {
            SplitStrategy::Hybrid => {
                if formula.inputs.len() <= 10 {
                    SplitStrategy::InputSplit
                } else {
                    SplitStrategy::ReluSplit
                }
            }
            concrete => concrete,
        }
    }
}

/// Engine configuration. Budgets are seconds; `initial_timeout_secs` may be
/// infinite, which turns the run into a pure static `initial_divides`-way
/// split with no iterative deepening.
#[derive(Debug, Clone)]
pub struct SncConfig {
    /// Fan-out of the first partition (N0); power of two >= 2.
    pub initial_divides: usize,
    /// Budget of each first-level sub-query (T0).
    pub initial_timeout_secs: f64,
    /// Fan-out when a timed-out sub-query is re-partitioned (N); power of
    /// two >= 2.
    pub online_divides: usize,
    /// Budget growth per depth level (F); must exceed 1 for termination.
    pub timeout_factor: f64,
    pub strategy: SplitStrategy,
    pub workers: usize,
    /// Overall wall-clock cap; exceeding it yields a Timeout verdict with
    /// the statistics gathered so far.
    pub global_deadline_secs: Option<f64>,
    /// Template for every sequential solve call (deadline and cancellation
    /// are filled in per call).
    pub solver: SolverConfig,
    /// Run the phase-refutation preprocessing pass before partitioning.
    pub iterprop: bool,
    /// Per-ReLU probe budget of that pass.
    pub per_relu_timeout_secs: f64,
}

impl SncConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("initial_divides", self.initial_divides), ("online_divides", self.online_divides)] {
            if n < 2 || !n.is_power_of_two() {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be a power of two >= 2, got {n}"
                )));
            }
        }
        if !(self.timeout_factor > 1.0) || !self.timeout_factor.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "timeout_factor must be finite and > 1, got {}",
                self.timeout_factor
            )));
        }
        if !(self.initial_timeout_secs > 0.0) {
            return Err(Error::InvalidConfig("initial_timeout_secs must be positive".into()));
        }
        if self.workers < 1 {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        if !(self.per_relu_timeout_secs > 0.0) || !self.per_relu_timeout_secs.is_finite() {
            return Err(Error::InvalidConfig("per_relu_timeout_secs must be positive and finite".into()));
        }
        if let Some(g) = self.global_deadline_secs {
            if !(g > 0.0) {
                return Err(Error::InvalidConfig("global_deadline_secs must be positive".into()));
            }
        }
        self.solver.validate()
    }
}

/// The tuning the engine uses when nothing is overridden: first partition as
/// wide as the worker count (rounded up to a power of two), first budget a
/// tenth of the ReLU count in seconds (at least 1s), four-way online splits
/// growing budgets by 1.5x, hybrid strategy, repair threshold 20 (1 for
/// low-dimensional inputs), 5% branching window, 2s preprocessing probes.
pub fn default_config(formula: &VnnFormula, workers: usize) -> SncConfig {
    let relus = formula.relus.len();
    let low_dimensional = formula.inputs.len() <= 10;
    SncConfig {
        initial_divides: workers.next_power_of_two().max(2),
        initial_timeout_secs: (0.1 * relus as f64).max(1.0),
        online_divides: 4,
        timeout_factor: 1.5,
        strategy: SplitStrategy::Hybrid,
        workers,
        global_deadline_secs: None,
        solver: SolverConfig {
            threshold_t: if low_dimensional { 1 } else { 20 },
            branching_k_percent: 5.0,
            direction: DirectionPolicy::PolarityBased,
            deadline: None,
            cancel: None,
        },
        iterprop: false,
        per_relu_timeout_secs: 2.0,
    }
}

/// Online fan-out rule scaling with the processor count p:
/// `N = 2^floor((5 + log2 p) / 3)`. Offered as an opt-in alternative to the
/// fixed default of 4.
pub fn scaled_online_divides(workers: usize) -> usize {
    let p = workers.max(1) as f64;
    1usize << ((5.0 + p.log2()) / 3.0).floor().max(1.0) as u32
}

/// One unit of work: a formula with a time budget and its position in the
/// partition tree ("2.0.1" = second initial child, first split, second of
/// that split).
#[derive(Debug, Clone)]
pub struct SubQuery {
    pub formula: VnnFormula,
    pub budget_secs: f64,
    pub depth: usize,
    pub id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Sat,
    Unsat,
    Timeout,
}

impl Verdict {
    pub fn of(result: &QueryResult) -> Verdict {
        match result {
            QueryResult::Sat(_) => Verdict::Sat,
            QueryResult::Unsat => Verdict::Unsat,
            QueryResult::Timeout => Verdict::Timeout,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Sat => "sat",
            Verdict::Unsat => "unsat",
            Verdict::Timeout => "timeout",
        }
    }
}

/// One completed solve call.
#[derive(Debug, Clone)]
pub struct CallRecord {
    pub id: String,
    pub verdict: Verdict,
    pub seconds: f64,
    pub budget_secs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub solve_calls: usize,
    pub timeouts: usize,
    pub sat_calls: usize,
    pub unsat_calls: usize,
    pub max_depth: usize,
    pub wall_seconds: f64,
    pub per_call: Vec<CallRecord>,
}

impl RunStats {
    fn record(&mut self, sq: &SubQuery, verdict: Verdict, seconds: f64) {
        self.solve_calls += 1;
        match verdict {
            Verdict::Sat => self.sat_calls += 1,
            Verdict::Unsat => self.unsat_calls += 1,
            Verdict::Timeout => self.timeouts += 1,
        }
        self.max_depth = self.max_depth.max(sq.depth);
        self.per_call.push(CallRecord {
            id: sq.id.clone(),
            verdict,
            seconds,
            budget_secs: sq.budget_secs,
        });
    }

    fn summary(&self) -> String {
        format!(
            "{} solve calls ({} sat, {} unsat, {} timeouts)",
            self.solve_calls, self.sat_calls, self.unsat_calls, self.timeouts
        )
    }
}

/// Turns one sub-query into a verdict. The engine is generic over this so
/// solving can happen on a thread in this process or in a helper process.
pub trait SolveBackend: Sync {
    /// Must respect the sub-query budget, stop early at `cap` if given, and
    /// abandon work promptly once `cancel` is set (returning Timeout; the
    /// caller discards results that arrive after cancellation).
    fn solve_subquery(
        &self,
        sq: &SubQuery,
        cap: Option<Instant>,
        cancel: &Arc<AtomicBool>,
    ) -> Result<QueryResult>;
}

fn call_deadline(budget_secs: f64, cap: Option<Instant>) -> Option<Instant> {
    let own = budget_secs
        .is_finite()
        .then(|| Instant::now() + Duration::from_secs_f64(budget_secs.max(0.0)));
    match (own, cap) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (one, other) => one.or(other),
    }
}

/// Solves sub-queries on the calling thread.
#[derive(Debug, Clone)]
pub struct InProcessBackend {
    pub solver: SolverConfig,
}

impl SolveBackend for InProcessBackend {
    fn solve_subquery(
        &self,
        sq: &SubQuery,
        cap: Option<Instant>,
        cancel: &Arc<AtomicBool>,
    ) -> Result<QueryResult> {
        let cfg = SolverConfig {
            deadline: call_deadline(sq.budget_secs, cap),
            cancel: Some(Arc::clone(cancel)),
            ..self.solver.clone()
        };
        solve_sequential(sq.formula.clone(), &cfg)
    }
}

/// Solves each sub-query in a helper process, exchanging the query and its
/// result through the textual files in [`wire`]. The helper is expected to
/// accept `<program> <args..> --input FILE --output FILE`, enforce the
/// budget itself, and exit 0 after writing the result file.
#[derive(Debug, Clone)]
pub struct SubprocessBackend {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub solver: SolverConfig,
    pub work_dir: PathBuf,
}

static SUBQUERY_SEQ: AtomicU64 = AtomicU64::new(0);

impl SolveBackend for SubprocessBackend {
    fn solve_subquery(
        &self,
        sq: &SubQuery,
        cap: Option<Instant>,
        cancel: &Arc<AtomicBool>,
    ) -> Result<QueryResult> {
        let tag = format!(
            "sq-{}-{}",
            std::process::id(),
            SUBQUERY_SEQ.fetch_add(1, Ordering::Relaxed)
        );
        let input = self.work_dir.join(format!("{tag}.query"));
        let output = self.work_dir.join(format!("{tag}.result"));
        wire::write_subquery(
            &input,
            &wire::WireSubQuery {
                formula: sq.formula.clone(),
                budget_secs: sq.budget_secs,
                threshold_t: self.solver.threshold_t,
                branching_k_percent: self.solver.branching_k_percent,
                direction: self.solver.direction,
            },
        )?;
        let cleanup = |a: &PathBuf, b: &PathBuf| {
            let _ = std::fs::remove_file(a);
            let _ = std::fs::remove_file(b);
        };
        let mut child = std::process::Command::new(&self.program)
            .args(&self.args)
            .arg("--input")
            .arg(&input)
            .arg("--output")
            .arg(&output)
            .spawn()
            .map_err(|e| Error::Worker(format!("spawning {}: {e}", self.program.display())))?;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) => {
                    let expired = cap.is_some_and(|c| Instant::now() >= c);
                    if cancel.load(Ordering::Relaxed) || expired {
                        let _ = child.kill();
                        let _ = child.wait();
                        cleanup(&input, &output);
                        return Ok(QueryResult::Timeout);
                    }
                    std::thread::sleep(Duration::from_millis(2));
                }
                Err(e) => {
                    cleanup(&input, &output);
                    return Err(Error::Worker(format!("waiting for helper: {e}")));
                }
            }
        };
        if !status.success() {
            cleanup(&input, &output);
            return Err(Error::Worker(format!("helper process exited with {status}")));
        }
        let result = wire::read_result(&output);
        cleanup(&input, &output);
        result
    }
}

fn partition_by(
    formula: &VnnFormula,
    n: usize,
    strategy: SplitStrategy,
    k_percent: f64,
) -> Result<Vec<VnnFormula>> {
    let outcome = match strategy {
        SplitStrategy::InputSplit => partition_input(formula, n)?,
        SplitStrategy::ReluSplit => partition_relu(formula, n, k_percent)?,
        SplitStrategy::Hybrid => return partition_by(formula, n, strategy.resolve(formula), k_percent),
    };
    Ok(outcome.children)
}

struct Exchange {
    queue: VecDeque<SubQuery>,
    in_flight: usize,
    verdict: Option<QueryResult>,
    failure: Option<String>,
    stats: RunStats,
}

/// Runs the engine with the in-process backend.
pub fn split_and_conquer(formula: &VnnFormula, cfg: &SncConfig) -> Result<(QueryResult, RunStats)> {
    let backend = InProcessBackend { solver: cfg.solver.clone() };
    split_and_conquer_with_backend(formula, cfg, &backend)
}

/// Runs the engine with an arbitrary backend.
pub fn split_and_conquer_with_backend(
    formula: &VnnFormula,
    cfg: &SncConfig,
    backend: &dyn SolveBackend,
) -> Result<(QueryResult, RunStats)> {
    cfg.validate()?;
    let started = Instant::now();
    let cap = cfg
        .global_deadline_secs
        .map(|s| started + Duration::from_secs_f64(s));
    let strategy = cfg.strategy.resolve(formula);
    let children = partition_by(formula, cfg.initial_divides, strategy, cfg.solver.branching_k_percent)?;
    let queue: VecDeque<SubQuery> = children
        .into_iter()
        .enumerate()
        .map(|(i, child)| SubQuery {
            formula: child,
            budget_secs: cfg.initial_timeout_secs,
            depth: 1,
            id: i.to_string(),
        })
        .collect();
    let exchange = Mutex::new(Exchange {
        queue,
        in_flight: 0,
        verdict: None,
        failure: None,
        stats: RunStats::default(),
    });
    let idle = Condvar::new();
    let cancel = Arc::new(AtomicBool::new(false));

    std::thread::scope(|scope| {
        for _ in 0..cfg.workers {
            scope.spawn(|| {
                worker_loop(&exchange, &idle, &cancel, backend, cfg, strategy, cap);
            });
        }
    });

    let mut done = exchange.into_inner().expect("workers have exited");
    if let Some(msg) = done.failure {
        return Err(Error::Worker(format!("{msg} (after {})", done.stats.summary())));
    }
    done.stats.wall_seconds = started.elapsed().as_secs_f64();
    let verdict = done.verdict.unwrap_or(QueryResult::Unsat);
    Ok((verdict, done.stats))
}

fn worker_loop(
    exchange: &Mutex<Exchange>,
    idle: &Condvar,
    cancel: &Arc<AtomicBool>,
    backend: &dyn SolveBackend,
    cfg: &SncConfig,
    strategy: SplitStrategy,
    cap: Option<Instant>,
) {
    loop {
        let sq = {
            let mut guard = exchange.lock().expect("engine lock");
            loop {
                if guard.verdict.is_some() || guard.failure.is_some() {
                    return;
                }
                if cap.is_some_and(|c| Instant::now() >= c) {
                    guard.verdict = Some(QueryResult::Timeout);
                    cancel.store(true, Ordering::Relaxed);
                    idle.notify_all();
                    return;
                }
                if let Some(sq) = guard.queue.pop_front() {
                    guard.in_flight += 1;
                    break sq;
                }
                if guard.in_flight == 0 {
                    idle.notify_all();
                    return;
                }
                let wait = Duration::from_millis(20);
                guard = idle.wait_timeout(guard, wait).expect("engine lock").0;
            }
        };

        let call_started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| backend.solve_subquery(&sq, cap, cancel)));
        let seconds = call_started.elapsed().as_secs_f64();

        let mut guard = exchange.lock().expect("engine lock");
        guard.in_flight -= 1;
        match outcome {
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "worker panicked".into());
                guard.failure = Some(format!("sub-query {}: {msg}", sq.id));
                cancel.store(true, Ordering::Relaxed);
            }
            Ok(Err(e)) => {
                guard.failure = Some(format!("sub-query {}: {e}", sq.id));
                cancel.store(true, Ordering::Relaxed);
            }
            // A verdict that arrives after the run is decided was cancelled
            // mid-flight; it is discarded entirely.
            Ok(Ok(_)) if guard.verdict.is_some() => {}
            Ok(Ok(result)) => {
                guard.stats.record(&sq, Verdict::of(&result), seconds);
                match result {
                    QueryResult::Sat(witness) => {
                        guard.verdict = Some(QueryResult::Sat(witness));
                        cancel.store(true, Ordering::Relaxed);
                    }
                    QueryResult::Unsat => {}
                    QueryResult::Timeout => {
                        match partition_by(&sq.formula, cfg.online_divides, strategy, cfg.solver.branching_k_percent) {
                            Ok(children) => {
                                let budget = sq.budget_secs * cfg.timeout_factor;
                                for (i, child) in children.into_iter().enumerate() {
                                    guard.queue.push_back(SubQuery {
                                        formula: child,
                                        budget_secs: budget,
                                        depth: sq.depth + 1,
                                        id: format!("{}.{i}", sq.id),
                                    });
                                }
                            }
                            Err(e) => {
                                guard.failure = Some(format!("partitioning sub-query {}: {e}", sq.id));
                                cancel.store(true, Ordering::Relaxed);
                            }
                        }
                    }
                }
            }
        }
        idle.notify_all();
    }
}

/// The named engine configurations: `M` solves sequentially without any
/// partitioning; the rest run split-and-conquer with input, ReLU, or hybrid
/// splitting, optionally adding the polarity direction heuristic (`+D`)
/// and/or the preprocessing pass (`+P`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Sequential,
    InputSnc,
    ReluSnc,
    HybridSnc,
    HybridDirection,
    HybridProp,
    HybridDirectionProp,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::Sequential,
        Preset::InputSnc,
        Preset::ReluSnc,
        Preset::HybridSnc,
        Preset::HybridDirection,
        Preset::HybridProp,
        Preset::HybridDirectionProp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Sequential => "M",
            Preset::InputSnc => "I",
            Preset::ReluSnc => "R",
            Preset::HybridSnc => "S",
            Preset::HybridDirection => "S+D",
            Preset::HybridProp => "S+P",
            Preset::HybridDirectionProp => "S+D+P",
        }
    }

    pub fn parse(name: &str) -> Result<Preset> {
        let canonical = name.to_ascii_uppercase();
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == canonical)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown preset `{name}` (expected one of M, I, R, S, S+D, S+P, S+D+P)"
                ))
            })
    }

    /// The engine configuration this preset stands for. The base direction
    /// heuristic is inactive-first; only `+D` presets switch to polarity.
    pub fn config(self, formula: &VnnFormula, workers: usize) -> SncConfig {
        let mut cfg = default_config(formula, workers);
        cfg.solver.direction = DirectionPolicy::AlwaysInactiveFirst;
        match self {
            Preset::Sequential => cfg.workers = 1,
            Preset::InputSnc => cfg.strategy = SplitStrategy::InputSplit,
            Preset::ReluSnc => cfg.strategy = SplitStrategy::ReluSplit,
            Preset::HybridSnc => {}
            Preset::HybridDirection => cfg.solver.direction = DirectionPolicy::PolarityBased,
            Preset::HybridProp => cfg.iterprop = true,
            Preset::HybridDirectionProp => {
                cfg.solver.direction = DirectionPolicy::PolarityBased;
                cfg.iterprop = true;
            }
        }
        cfg
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Preset> {
        Preset::parse(s)
    }
}

/// Runs one preset end to end: optional preprocessing, then either a single
/// sequential solve (preset M) or the full engine.
pub fn run_preset(
    formula: &VnnFormula,
    preset: Preset,
    workers: usize,
    global_deadline_secs: Option<f64>,
) -> Result<(QueryResult, RunStats)> {
    let mut cfg = preset.config(formula, workers);
    cfg.global_deadline_secs = global_deadline_secs;
    run_configured(formula, preset == Preset::Sequential, &cfg)
}

/// Runs a fully explicit configuration; `sequential` bypasses partitioning
/// and solves the (possibly preprocessed) formula in one call.
pub fn run_configured(
    formula: &VnnFormula,
    sequential: bool,
    cfg: &SncConfig,
) -> Result<(QueryResult, RunStats)> {
    let backend = InProcessBackend { solver: cfg.solver.clone() };
    run_configured_with_backend(formula, sequential, cfg, &backend)
}

/// As [`run_configured`], with sub-queries dispatched through `backend`
/// (preprocessing and the sequential mode always run in this process).
pub fn run_configured_with_backend(
    formula: &VnnFormula,
    sequential: bool,
    cfg: &SncConfig,
    backend: &dyn SolveBackend,
) -> Result<(QueryResult, RunStats)> {
    cfg.validate()?;
    let started = Instant::now();
    let cap = cfg
        .global_deadline_secs
        .map(|s| started + Duration::from_secs_f64(s));
    let working = if cfg.iterprop {
        let template = cfg.solver.clone();
        let probe = move |f: &VnnFormula, t: Duration| {
            let probe_cfg = SolverConfig {
                deadline: Some(Instant::now() + t),
                cancel: None,
                ..template.clone()
            };
            solve_sequential(f.clone(), &probe_cfg).unwrap_or(QueryResult::Timeout)
        };
        let per_relu = Duration::from_secs_f64(cfg.per_relu_timeout_secs);
        iterative_propagate_with_stats(formula.clone(), per_relu, &probe).0
    } else {
        formula.clone()
    };

    if sequential {
        let solver = SolverConfig { deadline: cap, cancel: None, ..cfg.solver.clone() };
        let result = solve_sequential(working.clone(), &solver)?;
        let seconds = started.elapsed().as_secs_f64();
        let mut stats = RunStats::default();
        let root = SubQuery {
            formula: working,
            budget_secs: cfg.global_deadline_secs.unwrap_or(f64::INFINITY),
            depth: 0,
            id: "root".into(),
        };
        stats.record(&root, Verdict::of(&result), seconds);
        stats.wall_seconds = seconds;
        return Ok((result, stats));
    }

    let mut engine_cfg = cfg.clone();
    engine_cfg.global_deadline_secs = cap.map(|c| {
        c.saturating_duration_since(Instant::now()).as_secs_f64().max(0.001)
    });
    let (result, mut stats) = split_and_conquer_with_backend(&working, &engine_cfg, backend)?;
    stats.wall_seconds = started.elapsed().as_secs_f64();
    Ok((result, stats))
}
