//! The sequential complete solver: LP feasibility plus lazy ReLU handling.
//!
//! The search keeps a depth-first stack of subproblems. Each subproblem is
//! interval-tightened, then its linear relaxation is solved; a satisfying LP
//! point that violates some unfixed ReLU is first *repaired* (one of the two
//! ReLU variables is steered onto the `f = max(0, b)` graph and the LP
//! re-solved) and, once a ReLU has been repaired too often, *split* (both
//! phases explored as child subproblems). Phase order and repair targets
//! follow the polarity-based direction heuristic unless configured otherwise.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use crate::bounds::interval_propagate;
use crate::simplex::SimplexState;
use crate::vnn::{
    polarity, Assignment, Bounds, LpOutcome, PhaseChoice, QueryResult, ReluConstraint, ReluPhase,
    Variable, VnnFormula, CHECK_TOL,
};
use crate::{Error, Result};

/// Which phase to try first (and which repair region to prefer).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionPolicy {
    /// Positive polarity explores Active first, negative Inactive first.
    PolarityBased,
    /// Always explore Inactive first.
    AlwaysInactiveFirst,
}

/// Tuning knobs of the sequential solver.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// A ReLU violated this many times in one subproblem is split instead of
    /// repaired again (1 disables repairs entirely).
    pub threshold_t: usize,
    /// Branching window: candidates are the first `ceil(k% * unfixed)`
    /// unfixed ReLUs in layer order.
    pub branching_k_percent: f64,
    pub direction: DirectionPolicy,
    /// Wall-clock instant after which the solver returns Timeout.
    pub deadline: Option<Instant>,
    /// External cancellation; observed as Timeout (callers that cancel
    /// discard the result).
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            threshold_t: 20,
            branching_k_percent: 5.0,
            direction: DirectionPolicy::PolarityBased,
            deadline: None,
            cancel: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold_t < 1 {
            return Err(Error::InvalidConfig("threshold_t must be at least 1".into()));
        }
        if !(self.branching_k_percent > 0.0 && self.branching_k_percent <= 100.0) {
            return Err(Error::InvalidConfig(
                "branching_k_percent must be in (0, 100]".into(),
            ));
        }
        Ok(())
    }
}

/// Search effort counters for one solve call.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SolveStats {
    /// Subproblems popped from the stack.
    pub nodes_visited: u64,
    pub lp_calls: u64,
    pub repairs: u64,
    pub splits: u64,
    /// Deepest stack of phase fixes reached.
    pub max_depth: usize,
}

/// First phase to explore for `r`: Active when polarity is positive or zero,
/// Inactive when negative.
pub fn direction_heuristic(r: &ReluConstraint, bounds: &Bounds) -> Result<PhaseChoice> {
    Ok(if polarity(r, bounds)? >= 0.0 {
        PhaseChoice::Active
    } else {
        PhaseChoice::Inactive
    })
}

/// The branching candidate: among the first `ceil(k% * count)` unfixed ReLUs
/// (layer order), the one whose polarity is closest to zero, ties broken by
/// position. ReLUs whose bounds no longer straddle zero are skipped; if the
/// window holds none, it widens forward until a candidate appears, falling
/// back to the first unfixed ReLU when every polarity is undefined.
pub fn select_branch_relu(formula: &VnnFormula, k_percent: f64) -> Result<usize> {
    select_branch_relu_excluding(formula, k_percent, &[])
}

/// As [`select_branch_relu`], ignoring the ReLUs listed in `exclude`
/// (used when picking several distinct split points from one formula).
pub fn select_branch_relu_excluding(
    formula: &VnnFormula,
    k_percent: f64,
    exclude: &[usize],
) -> Result<usize> {
    let ordered: Vec<usize> = formula
        .ordered_unfixed_relus()
        .into_iter()
        .filter(|i| !exclude.contains(i))
        .collect();
    if ordered.is_empty() {
        return Err(Error::NoUnfixedRelu);
    }
    let window = ((k_percent / 100.0) * ordered.len() as f64).ceil() as usize;
    let window = window.clamp(1, ordered.len());
    let mut best: Option<(f64, usize)> = None;
    for &i in &ordered[..window] {
        if let Ok(p) = formula.polarity_of(i) {
            if best.map_or(true, |(bp, _)| p.abs() < bp) {
                best = Some((p.abs(), i));
            }
        }
    }
    if let Some((_, i)) = best {
        return Ok(i);
    }
    // Every windowed candidate is already decided by bounds: widen forward.
    for &i in &ordered[window..] {
        if formula.polarity_of(i).is_ok() {
            return Ok(i);
        }
    }
    Ok(ordered[0])
}

/// The single-variable update that steers a violated ReLU onto its graph,
/// preferring the region named by `direction`. Returns None when both the
/// preferred and the fallback update are blocked by variable bounds.
pub fn repair_update(
    r: &ReluConstraint,
    a: &Assignment,
    bounds: &Bounds,
    direction: PhaseChoice,
) -> Option<(Variable, f64)> {
    let rb = a.get(r.backward);
    let rf = a.get(r.forward);
    // Moving the forward variable always lands on the graph; moving the
    // backward variable matches the forward value (or leaves the positive
    // region when the forward value is zero).
    let forward_move = (r.forward, rb.max(0.0));
    let backward_move = (r.backward, if rf > 0.0 { rf } else { rb.min(0.0) });
    let (preferred, fallback) = match direction {
        PhaseChoice::Inactive => {
            if rb <= 0.0 {
                ((r.forward, 0.0), backward_move)
            } else {
                ((r.backward, rf.max(0.0)), forward_move)
            }
        }
        PhaseChoice::Active => {
            if rb > 0.0 {
                (forward_move, (r.backward, rf.max(0.0)))
            } else {
                ((r.backward, rf.max(0.0)), (r.forward, 0.0))
            }
        }
    };
    for (v, val) in [preferred, fallback] {
        if val >= bounds.lower(v) && val <= bounds.upper(v) {
            return Some((v, val));
        }
    }
    None
}

struct Node {
    formula: VnnFormula,
    repair_counts: Vec<u32>,
    depth: usize,
}

/// Decides satisfiability of `formula`. See [`solve_with_stats`].
pub fn solve(formula: VnnFormula, cfg: &SolverConfig) -> Result<QueryResult> {
    solve_with_stats(formula, cfg).map(|(r, _)| r)
}

/// Decides satisfiability of `formula`, reporting search effort.
///
/// `Sat` carries a witness accepted by
/// [`VnnFormula::check_assignment`] at tolerance 1e-6; `Unsat` means the
/// entire phase tree was refuted; `Timeout` is returned when the deadline
/// passes or the cancel flag is raised. An exhausted simplex pivot budget
/// surfaces as [`Error::IterationLimit`], never as a verdict.
pub fn solve_with_stats(formula: VnnFormula, cfg: &SolverConfig) -> Result<(QueryResult, SolveStats)> {
    cfg.validate()?;
    let mut stats = SolveStats::default();
    let num_relus = formula.relus.len();
    let mut stack = vec![Node { formula, repair_counts: vec![0; num_relus], depth: 0 }];

    let timed_out = || -> bool {
        cfg.deadline.is_some_and(|d| Instant::now() >= d)
            || cfg.cancel.as_ref().is_some_and(|c| c.load(Ordering::Relaxed))
    };

    while let Some(mut node) = stack.pop() {
        if timed_out() {
            return Ok((QueryResult::Timeout, stats));
        }
        stats.nodes_visited += 1;
        stats.max_depth = stats.max_depth.max(node.depth);
        let Some(formula) = interval_propagate(node.formula).formula() else {
            continue;
        };
        let mut state = SimplexState::new(&formula.linear, &formula.bounds);
        stats.lp_calls += 1;
        let mut outcome = state.solve()?;
        loop {
            if timed_out() {
                return Ok((QueryResult::Timeout, stats));
            }
            let LpOutcome::Feasible(a) = outcome else {
                break; // refuted: backtrack
            };
            let Some(v) = most_upstream_violated(&formula, &a) else {
                debug_assert!(formula.check_assignment(&a, CHECK_TOL));
                return Ok((QueryResult::Sat(a), stats));
            };
            node.repair_counts[v] += 1;
            if node.repair_counts[v] < cfg.threshold_t as u32 {
                let direction = repair_direction(&formula, v, cfg);
                if let Some((var, val)) =
                    repair_update(&formula.relus[v], &a, &formula.bounds, direction)
                {
                    stats.repairs += 1;
                    stats.lp_calls += 1;
                    outcome = state.impose(var, val)?;
                    continue;
                }
                // Both repair targets blocked by bounds: split instead.
            }
            let b = select_branch_relu(&formula, cfg.branching_k_percent)?;
            match split_order(&formula, b, cfg) {
                Some(first) => {
                    stats.splits += 1;
                    for phase in [first.flipped(), first] {
                        stack.push(Node {
                            formula: formula.fix_relu(b, phase)?,
                            repair_counts: node.repair_counts.clone(),
                            depth: node.depth + 1,
                        });
                    }
                }
                None => {
                    // Bounds already decide this ReLU; fix it, no branch.
                    let phase = if formula.bounds.lower(formula.relus[b].backward) >= 0.0 {
                        PhaseChoice::Active
                    } else {
                        PhaseChoice::Inactive
                    };
                    stack.push(Node {
                        formula: formula.fix_relu(b, phase)?,
                        repair_counts: node.repair_counts.clone(),
                        depth: node.depth,
                    });
                }
            }
            break;
        }
    }
    Ok((QueryResult::Unsat, stats))
}

/// The unfixed ReLU most violated-and-upstream: smallest (layer_rank,
/// backward index) among those off their graph by more than the tolerance.
fn most_upstream_violated(formula: &VnnFormula, a: &Assignment) -> Option<usize> {
    formula
        .ordered_unfixed_relus()
        .into_iter()
        .find(|&i| {
            let r = &formula.relus[i];
            (a.get(r.backward).max(0.0) - a.get(r.forward)).abs() > CHECK_TOL
        })
}

/// Repair-region preference for ReLU `v` under the configured policy, with a
/// bounds-implied direction when polarity is undefined.
fn repair_direction(formula: &VnnFormula, v: usize, cfg: &SolverConfig) -> PhaseChoice {
    match cfg.direction {
        DirectionPolicy::AlwaysInactiveFirst => PhaseChoice::Inactive,
        DirectionPolicy::PolarityBased => {
            direction_heuristic(&formula.relus[v], &formula.bounds).unwrap_or_else(|_| {
                if formula.bounds.lower(formula.relus[v].backward) >= 0.0 {
                    PhaseChoice::Active
                } else {
                    PhaseChoice::Inactive
                }
            })
        }
    }
}

/// First phase to explore when splitting on `b`, or None when bounds have
/// already decided the phase (no real branch).
fn split_order(formula: &VnnFormula, b: usize, cfg: &SolverConfig) -> Option<PhaseChoice> {
    match cfg.direction {
        DirectionPolicy::AlwaysInactiveFirst => {
            if formula.relus[b].phase == ReluPhase::Unfixed
                && formula.polarity_of(b).is_err()
            {
                None
            } else {
                Some(PhaseChoice::Inactive)
            }
        }
        DirectionPolicy::PolarityBased => {
            direction_heuristic(&formula.relus[b], &formula.bounds).ok()
        }
    }
}
