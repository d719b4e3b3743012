//! Command-line front end for the verification engine: `verify` runs a
//! query end to end, `preprocess` reports what the phase-refutation pass
//! can fix, and `bench` runs a manifest of jobs into a CSV. A hidden
//! `solve-subquery` subcommand is the helper entry point of the
//! multi-process executor.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use relu_snc::ingest::{
    apply_normalization, encode_property, encode_robustness, parse_nnet, parse_property,
    Network, OutputSide,
};
use relu_snc::iterprop::iterative_propagate_with_stats;
use relu_snc::reluplex::{solve as solve_sequential, DirectionPolicy, SolverConfig};
use relu_snc::snc::{
    self, default_config, run_configured_with_backend, wire, InProcessBackend, Preset,
    SncConfig, SolveBackend, SplitStrategy, SubprocessBackend,
};
use relu_snc::{Error, QueryResult, VnnFormula};

#[derive(Parser)]
#[command(
    name = "relu-snc",
    version,
    about = "Complete verification of feed-forward ReLU networks by parallel split-and-conquer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide a query: sat (with witness), unsat, or timeout.
    Verify(VerifyArgs),
    /// Run only the preprocessing pass and report what it fixed.
    Preprocess(PreprocessArgs),
    /// Run every job of a manifest and emit one CSV row per job.
    Bench(BenchArgs),
    #[command(hide = true)]
    SolveSubquery(SolveSubqueryArgs),
}

#[derive(Args)]
struct QueryArgs {
    /// Network file in NNet format.
    #[arg(long)]
    net: PathBuf,
    /// Property file: linear constraints over inputs x<i> and outputs y<i>.
    #[arg(long)]
    property: Option<PathBuf>,
    /// Local-robustness query around --center (requires --center, --delta,
    /// --out-index, --baseline, --epsilon).
    #[arg(long)]
    robustness: bool,
    /// File with the center input point (comma- or space-separated).
    #[arg(long, requires = "robustness")]
    center: Option<PathBuf>,
    /// Radius of the input box around the center.
    #[arg(long, requires = "robustness")]
    delta: Option<f64>,
    /// Output coordinate under test.
    #[arg(long, requires = "robustness")]
    out_index: Option<usize>,
    /// Reference value of that output at the center.
    #[arg(long, requires = "robustness")]
    baseline: Option<f64>,
    /// Deviation that counts as a robustness violation.
    #[arg(long, requires = "robustness")]
    epsilon: Option<f64>,
    /// Which deviation direction to search for.
    #[arg(long, value_enum, default_value_t = SideArg::Above)]
    side: SideArg,
    /// Fold the network's normalization constants into its weights first.
    #[arg(long)]
    normalize: bool,
}

#[derive(Args)]
struct EngineArgs {
    /// Worker threads (default: available CPUs).
    #[arg(long, env = "RELU_SNC_WORKERS")]
    workers: Option<usize>,
    /// First partition fan-out N0 (power of two >= 2).
    #[arg(long)]
    initial_divides: Option<usize>,
    /// First per-sub-query budget T0 in seconds ("inf" for a static split).
    #[arg(long)]
    initial_timeout: Option<f64>,
    /// Fan-out N when a timed-out sub-query is re-partitioned.
    #[arg(long)]
    online_divides: Option<usize>,
    /// Budget growth factor F (> 1).
    #[arg(long)]
    timeout_factor: Option<f64>,
    #[arg(long, value_enum)]
    split_strategy: Option<StrategyArg>,
    /// Run the phase-refutation preprocessing pass first.
    #[arg(long)]
    iterprop: bool,
    /// Preprocessing probe budget per ReLU, in seconds.
    #[arg(long)]
    per_relu_timeout: Option<f64>,
    /// Repairs of one ReLU before the solver splits on it (1 = never repair).
    #[arg(long)]
    threshold_t: Option<usize>,
    /// Branching window as a percentage of the unfixed ReLUs.
    #[arg(long)]
    branching_k: Option<f64>,
    /// Named preset: M, I, R, S, S+D, S+P, or S+D+P.
    #[arg(long = "config")]
    preset: Option<String>,
    /// Overall wall-clock limit in seconds.
    #[arg(long)]
    global_timeout: Option<f64>,
    /// Which phase the solver explores or repairs first.
    #[arg(long, value_enum)]
    direction: Option<DirectionArg>,
    /// Where sub-queries are solved.
    #[arg(long, value_enum, default_value_t = ExecutorArg::InProcess)]
    executor: ExecutorArg,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    query: QueryArgs,
    #[command(flatten)]
    engine: EngineArgs,
    /// Also write the JSON report to this path.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args)]
struct PreprocessArgs {
    #[command(flatten)]
    query: QueryArgs,
    /// Probe budget per ReLU, in seconds.
    #[arg(long, default_value_t = 2.0)]
    per_relu_timeout: f64,
    #[arg(long)]
    threshold_t: Option<usize>,
    #[arg(long)]
    branching_k: Option<f64>,
    /// Also write the JSON report to this path.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Job list: one `id,network,property[,timeout_secs]` line per job.
    #[arg(long)]
    manifest: PathBuf,
    /// Per-job wall-clock limit in seconds unless the job overrides it.
    #[arg(long, default_value_t = 60.0)]
    job_timeout: f64,
    /// Named preset applied to every job (default S).
    #[arg(long = "config")]
    preset: Option<String>,
    #[arg(long, env = "RELU_SNC_WORKERS")]
    workers: Option<usize>,
    /// CSV output path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveSubqueryArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Above,
    Below,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Input,
    Relu,
    Hybrid,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Polarity,
    InactiveFirst,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExecutorArg {
    InProcess,
    Process,
}

impl From<StrategyArg> for SplitStrategy {
    fn from(s: StrategyArg) -> SplitStrategy {
        match s {
            StrategyArg::Input => SplitStrategy::InputSplit,
            StrategyArg::Relu => SplitStrategy::ReluSplit,
            StrategyArg::Hybrid => SplitStrategy::Hybrid,
        }
    }
}

impl From<DirectionArg> for DirectionPolicy {
    fn from(d: DirectionArg) -> DirectionPolicy {
        match d {
            DirectionArg::Polarity => DirectionPolicy::PolarityBased,
            DirectionArg::InactiveFirst => DirectionPolicy::AlwaysInactiveFirst,
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = i32::from(e.use_stderr());
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let run = match cli.command {
        Command::Verify(args) => cmd_verify(args),
        Command::Preprocess(args) => cmd_preprocess(args),
        Command::Bench(args) => cmd_bench(args),
        Command::SolveSubquery(args) => cmd_solve_subquery(args),
    };
    if let Err(e) = run {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

/// Bad inputs (files, flags, formats) exit 1; engine-internal failures exit 2.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. }
        | Error::Io(_)
        | Error::InvalidConfig(_)
        | Error::DimensionMismatch(_)
        | Error::BadPartitionSize(_) => 1,
        _ => 2,
    }
}

fn load_network(query: &QueryArgs) -> Result<Network, Error> {
    let net = parse_nnet(&query.net)?;
    if query.normalize {
        apply_normalization(&net)
    } else {
        Ok(net)
    }
}

fn build_formula(query: &QueryArgs) -> Result<VnnFormula, Error> {
    let net = load_network(query)?;
    match (&query.property, query.robustness) {
        (Some(property), false) => {
            let spec = parse_property(property)?;
            encode_property(&net, &spec)
        }
        (None, true) => {
            let (Some(center_path), Some(delta), Some(out_index), Some(baseline), Some(epsilon)) = (
                query.center.as_ref(),
                query.delta,
                query.out_index,
                query.baseline,
                query.epsilon,
            ) else {
                return Err(Error::InvalidConfig(
                    "--robustness needs --center, --delta, --out-index, --baseline and --epsilon"
                        .into(),
                ));
            };
            let center = parse_center(center_path)?;
            let side = match query.side {
                SideArg::Above => OutputSide::Above,
                SideArg::Below => OutputSide::Below,
            };
            encode_robustness(&net, &center, delta, out_index, baseline, epsilon, side)
        }
        _ => Err(Error::InvalidConfig(
            "provide exactly one of --property or --robustness".into(),
        )),
    }
}

fn parse_center(path: &Path) -> Result<Vec<f64>, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: format!("cannot read file: {e}"),
    })?;
    text.split([',', ' ', '\t', '\n', '\r'])
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>().map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: 1,
                msg: format!("bad center value `{t}`: {e}"),
            })
        })
        .collect()
}

struct EngineSetup {
    cfg: SncConfig,
    sequential: bool,
    preset: Option<Preset>,
    executor: ExecutorArg,
}

fn build_engine(formula: &VnnFormula, args: &EngineArgs) -> Result<EngineSetup, Error> {
    let workers = match args.workers {
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let preset = args.preset.as_deref().map(Preset::parse).transpose()?;
    let mut cfg = match preset {
        Some(p) => p.config(formula, workers),
        None => default_config(formula, workers),
    };
    if let Some(n) = args.initial_divides {
        cfg.initial_divides = n;
    }
    if let Some(t0) = args.initial_timeout {
        cfg.initial_timeout_secs = t0;
    }
    if let Some(n) = args.online_divides {
        cfg.online_divides = n;
    }
    if let Some(f) = args.timeout_factor {
        cfg.timeout_factor = f;
    }
    if let Some(s) = args.split_strategy {
        cfg.strategy = s.into();
    }
    if args.iterprop {
        cfg.iterprop = true;
    }
    if let Some(t) = args.per_relu_timeout {
        cfg.per_relu_timeout_secs = t;
    }
    if let Some(t) = args.threshold_t {
        cfg.solver.threshold_t = t;
    }
    if let Some(k) = args.branching_k {
        cfg.solver.branching_k_percent = k;
    }
    if let Some(d) = args.direction {
        cfg.solver.direction = d.into();
    }
    if let Some(g) = args.global_timeout {
        cfg.global_deadline_secs = Some(g);
    }
    cfg.validate()?;
    Ok(EngineSetup {
        sequential: preset == Some(Preset::Sequential),
        cfg,
        preset,
        executor: args.executor,
    })
}

fn make_backend(setup: &EngineSetup) -> Result<Box<dyn SolveBackend>, Error> {
    match setup.executor {
        ExecutorArg::InProcess => Ok(Box::new(InProcessBackend { solver: setup.cfg.solver.clone() })),
        ExecutorArg::Process => Ok(Box::new(SubprocessBackend {
            program: std::env::current_exe()?,
            args: vec!["solve-subquery".into()],
            solver: setup.cfg.solver.clone(),
            work_dir: std::env::temp_dir(),
        })),
    }
}

#[derive(Serialize)]
struct Report {
    result: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<Vec<f64>>,
    wall_seconds: f64,
    config: ConfigReport,
    stats: StatsReport,
}

#[derive(Serialize)]
struct ConfigReport {
    preset: Option<String>,
    workers: usize,
    initial_divides: usize,
    /// None when the first budget is unbounded (static split mode).
    initial_timeout_secs: Option<f64>,
    online_divides: usize,
    timeout_factor: f64,
    split_strategy: &'static str,
    direction: &'static str,
    threshold_t: usize,
    branching_k_percent: f64,
    iterprop: bool,
    per_relu_timeout_secs: f64,
    global_timeout_secs: Option<f64>,
    executor: &'static str,
}

#[derive(Serialize)]
struct StatsReport {
    solve_calls: usize,
    timeouts: usize,
    sat_calls: usize,
    unsat_calls: usize,
    max_depth: usize,
}

fn make_report(setup: &EngineSetup, result: &QueryResult, stats: &snc::RunStats) -> Report {
    let cfg = &setup.cfg;
    Report {
        result: match result {
            QueryResult::Sat(_) => "sat",
            QueryResult::Unsat => "unsat",
            QueryResult::Timeout => "timeout",
        },
        witness: match result {
            QueryResult::Sat(w) => Some(w.values.clone()),
            _ => None,
        },
        wall_seconds: stats.wall_seconds,
        config: ConfigReport {
            preset: setup.preset.map(|p| p.name().to_string()),
            workers: cfg.workers,
            initial_divides: cfg.initial_divides,
            initial_timeout_secs: cfg.initial_timeout_secs.is_finite().then_some(cfg.initial_timeout_secs),
            online_divides: cfg.online_divides,
            timeout_factor: cfg.timeout_factor,
            split_strategy: match cfg.strategy {
                SplitStrategy::InputSplit => "input",
                SplitStrategy::ReluSplit => "relu",
                SplitStrategy::Hybrid => "hybrid",
            },
            direction: match cfg.solver.direction {
                DirectionPolicy::PolarityBased => "polarity",
                DirectionPolicy::AlwaysInactiveFirst => "inactive-first",
            },
            threshold_t: cfg.solver.threshold_t,
            branching_k_percent: cfg.solver.branching_k_percent,
            iterprop: cfg.iterprop,
            per_relu_timeout_secs: cfg.per_relu_timeout_secs,
            global_timeout_secs: cfg.global_deadline_secs,
            executor: match setup.executor {
                ExecutorArg::InProcess => "in-process",
                ExecutorArg::Process => "process",
            },
        },
        stats: StatsReport {
            solve_calls: stats.solve_calls,
            timeouts: stats.timeouts,
            sat_calls: stats.sat_calls,
            unsat_calls: stats.unsat_calls,
            max_depth: stats.max_depth,
        },
    }
}

fn emit_json<T: Serialize>(value: &T, also_to: Option<&Path>) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    println!("{text}");
    if let Some(path) = also_to {
        std::fs::write(path, format!("{text}\n"))?;
    }
    Ok(())
}

/// The global budget covers the whole command, parsing included. A budget
/// already spent by the time the engine would start is an immediate timeout.
fn run_within_budget(
    started: Instant,
    formula: &VnnFormula,
    setup: &EngineSetup,
    backend: &dyn SolveBackend,
) -> Result<(QueryResult, snc::RunStats), Error> {
    let mut cfg = setup.cfg.clone();
    if let Some(total) = cfg.global_deadline_secs {
        let remaining = total - started.elapsed().as_secs_f64();
        if remaining <= 0.0 {
            let stats = snc::RunStats {
                wall_seconds: started.elapsed().as_secs_f64(),
                ..snc::RunStats::default()
            };
            return Ok((QueryResult::Timeout, stats));
        }
        cfg.global_deadline_secs = Some(remaining);
    }
    run_configured_with_backend(formula, setup.sequential, &cfg, backend)
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Error> {
    let started = Instant::now();
    let formula = build_formula(&args.query)?;
    let setup = build_engine(&formula, &args.engine)?;
    let backend = make_backend(&setup)?;
    let (result, stats) = run_within_budget(started, &formula, &setup, backend.as_ref())?;
    let report = make_report(&setup, &result, &stats);
    emit_json(&report, args.json_out.as_deref())
}

#[derive(Serialize)]
struct PreprocessReport {
    unfixed_before: usize,
    unfixed_after: usize,
    fixed: usize,
    sweeps: usize,
    probe_calls: usize,
    wall_seconds: f64,
}

fn cmd_preprocess(args: PreprocessArgs) -> Result<(), Error> {
    if !(args.per_relu_timeout > 0.0) {
        return Err(Error::InvalidConfig("per-relu-timeout must be positive".into()));
    }
    let formula = build_formula(&args.query)?;
    let mut solver = SolverConfig::default();
    if let Some(t) = args.threshold_t {
        solver.threshold_t = t;
    }
    if let Some(k) = args.branching_k {
        solver.branching_k_percent = k;
    }
    solver.validate()?;
    let started = Instant::now();
    let probe = {
        let solver = solver.clone();
        move |f: &VnnFormula, t: Duration| {
            let cfg = SolverConfig {
                deadline: Some(Instant::now() + t),
                cancel: None,
                ..solver.clone()
            };
            solve_sequential(f.clone(), &cfg).unwrap_or(QueryResult::Timeout)
        }
    };
    let before = formula.ordered_unfixed_relus().len();
    let (out, stats) = iterative_propagate_with_stats(
        formula,
        Duration::from_secs_f64(args.per_relu_timeout),
        &probe,
    );
    let report = PreprocessReport {
        unfixed_before: before,
        unfixed_after: out.ordered_unfixed_relus().len(),
        fixed: stats.fixed,
        sweeps: stats.sweeps,
        probe_calls: stats.probe_calls,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    emit_json(&report, args.json_out.as_deref())
}

struct BenchJob {
    id: String,
    net: PathBuf,
    property: PathBuf,
    timeout_secs: Option<f64>,
}

fn parse_manifest(path: &Path, default_timeout: f64) -> Result<Vec<BenchJob>, Error> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let text = std::fs::read_to_string(path).map_err(|e| err(0, format!("cannot read manifest: {e}")))?;
    let mut jobs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let n = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(err(n, format!("expected `id,network,property[,timeout]`, got `{line}`")));
        }
        let timeout_secs = match fields.get(3) {
            None | Some(&"") => None,
            Some(t) => Some(
                t.parse::<f64>()
                    .map_err(|e| err(n, format!("bad timeout `{t}`: {e}")))
                    .and_then(|t| {
                        if t > 0.0 {
                            Ok(t)
                        } else {
                            Err(err(n, format!("timeout must be positive, got {t}")))
                        }
                    })?,
            ),
        };
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let job = BenchJob {
            id: fields[0].to_string(),
            net: resolve(fields[1]),
            property: resolve(fields[2]),
            timeout_secs,
        };
        for (what, file) in [("network", &job.net), ("property", &job.property)] {
            if !file.is_file() {
                return Err(err(n, format!("{what} file {} not found", file.display())));
            }
        }
        jobs.push(job);
    }
    if jobs.is_empty() {
        return Err(err(0, "manifest lists no jobs".into()));
    }
    let _ = default_timeout;
    Ok(jobs)
}

fn cmd_bench(args: BenchArgs) -> Result<(), Error> {
    let preset = match &args.preset {
        Some(name) => Preset::parse(name)?,
        None => Preset::HybridSnc,
    };
    if !(args.job_timeout > 0.0) {
        return Err(Error::InvalidConfig("job-timeout must be positive".into()));
    }
    let workers = match args.workers {
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let jobs = parse_manifest(&args.manifest, args.job_timeout)?;
    let mut csv = String::from("id,verdict,seconds,solve_calls,timeouts\n");
    for job in &jobs {
        let budget = job.timeout_secs.unwrap_or(args.job_timeout);
        let row = match bench_one(job, preset, workers, budget) {
            Ok((verdict, seconds, solve_calls, timeouts)) => {
                format!("{},{verdict},{seconds:.3},{solve_calls},{timeouts}\n", job.id)
            }
            Err(e) => {
                eprintln!("job {}: {e}", job.id);
                format!("{},error,,,\n", job.id)
            }
        };
        csv.push_str(&row);
    }
    match &args.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn bench_one(
    job: &BenchJob,
    preset: Preset,
    workers: usize,
    budget_secs: f64,
) -> Result<(&'static str, f64, usize, usize), Error> {
    // The job budget covers parsing and encoding too, like --global-timeout.
    let started = Instant::now();
    let net = parse_nnet(&job.net)?;
    let spec = parse_property(&job.property)?;
    let formula = encode_property(&net, &spec)?;
    let remaining = budget_secs - started.elapsed().as_secs_f64();
    if remaining <= 0.0 {
        return Ok(("timeout", started.elapsed().as_secs_f64(), 0, 0));
    }
    let (result, stats) = snc::run_preset(&formula, preset, workers, Some(remaining))?;
    let verdict = match result {
        QueryResult::Sat(_) => "sat",
        QueryResult::Unsat => "unsat",
        QueryResult::Timeout => "timeout",
    };
    Ok((verdict, stats.wall_seconds, stats.solve_calls, stats.timeouts))
}

fn cmd_solve_subquery(args: SolveSubqueryArgs) -> Result<(), Error> {
    let sq = wire::read_subquery(&args.input)?;
    let mut cfg = sq.solver_config();
    cfg.deadline = sq
        .budget_secs
        .is_finite()
        .then(|| Instant::now() + Duration::from_secs_f64(sq.budget_secs.max(0.0)));
    let result = solve_sequential(sq.formula.clone(), &cfg)?;
    wire::write_result(&args.output, &result)
}
