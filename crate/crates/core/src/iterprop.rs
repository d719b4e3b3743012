//! Preprocessing pass that tries to refute each unfixed ReLU's easier phase
//! under a short per-attempt timeout; every refutation permanently fixes the
//! opposite phase. Attempts within one sweep run in parallel against a
//! snapshot of the working formula, and sweeps repeat until none of them
//! learns anything new.

use std::time::Duration;

use rayon::prelude::*;

use crate::bounds::{interval_propagate, Propagation};
use crate::vnn::{polarity, PhaseChoice, QueryResult, ReluConstraint, VnnFormula};
use crate::{Bounds, Result};

/// The phase that is cheaper to refute: the one whose feasible interval for
/// the backward variable is narrower. For bounds `[a, b]` with `a < 0 < b`
/// that is Inactive (interval `[a, 0]`) when polarity is >= 0, else Active.
pub fn polarity_constraint(r: &ReluConstraint, bounds: &Bounds) -> Result<PhaseChoice> {
    let p = polarity(r, bounds)?;
    Ok(if p >= 0.0 { PhaseChoice::Inactive } else { PhaseChoice::Active })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IterpropStats {
    /// ReLUs fixed across all sweeps (refuted probes plus bound-implied).
    pub fixed: usize,
    /// Sweeps executed, including the final one that fixed nothing.
    pub sweeps: usize,
    /// Solver probe calls issued.
    pub probe_calls: usize,
}

/// Runs sweeps until a sweep fixes nothing, returning the strengthened
/// formula. `solver` is called as `solver(probe_formula, per_relu_timeout)`;
/// a probe conjoins one ReLU's easier phase, and an Unsat answer proves the
/// opposite phase can be conjoined permanently. Sat and Timeout answers are
/// discarded. The result is equisatisfiable with the input.
pub fn iterative_propagate<F>(
    formula: VnnFormula,
    per_relu_timeout: Duration,
    solver: &F,
) -> VnnFormula
where
    F: Fn(&VnnFormula, Duration) -> QueryResult + Sync,
{
    iterative_propagate_with_stats(formula, per_relu_timeout, solver).0
}

/// As [`iterative_propagate`], also reporting how much work was done.
pub fn iterative_propagate_with_stats<F>(
    mut formula: VnnFormula,
    per_relu_timeout: Duration,
    solver: &F,
) -> (VnnFormula, IterpropStats)
where
    F: Fn(&VnnFormula, Duration) -> QueryResult + Sync,
{
    let mut stats = IterpropStats::default();
    loop {
        stats.sweeps += 1;
        // Tighten bounds first: polarity needs finite straddling bounds, and
        // tightening may already decide some phases outright.
        let unfixed_at_entry = formula.ordered_unfixed_relus().len();
        match interval_propagate(formula.clone()) {
            Propagation::Tightened(t) => formula = t.formula,
            // Refuted outright; the caller's solver will confirm instantly.
            Propagation::InfeasibleByBounds => break,
        }
        let candidates = formula.ordered_unfixed_relus();
        let mut fixed_this_sweep = unfixed_at_entry - candidates.len();
        // Decide every attempt against the same snapshot; a phase refuted
        // under the snapshot stays refuted under any strengthening of it.
        let snapshot = &formula;
        struct Learned {
            relu: usize,
            phase: PhaseChoice,
            fix: bool,
            probed: bool,
        }
        let learned: Vec<Learned> = candidates
            .par_iter()
            .filter_map(|&i| {
                let relu = &snapshot.relus[i];
                match polarity_constraint(relu, &snapshot.bounds) {
                    Ok(probe) => {
                        let probed = snapshot.fix_relu(i, probe).ok()?;
                        let fix = matches!(solver(&probed, per_relu_timeout), QueryResult::Unsat);
                        Some(Learned { relu: i, phase: probe.flipped(), fix, probed: true })
                    }
                    // Bounds already decide this ReLU; no probe needed.
                    Err(_) => {
                        let lo = snapshot.bounds.lower(relu.backward);
                        let hi = snapshot.bounds.upper(relu.backward);
                        let phase = if lo >= 0.0 { PhaseChoice::Active } else { PhaseChoice::Inactive };
                        Some(Learned { relu: i, phase, fix: lo >= 0.0 || hi <= 0.0, probed: false })
                    }
                }
            })
            .collect();
        for l in learned {
            stats.probe_calls += usize::from(l.probed);
            if l.fix && formula.fix_relu_in_place(l.relu, l.phase).is_ok() {
                fixed_this_sweep += 1;
            }
        }
        stats.fixed += fixed_this_sweep;
        if fixed_this_sweep == 0 {
            break;
        }
    }
    (formula, stats)
}
