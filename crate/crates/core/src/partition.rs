//! Splits a formula into an exhaustive set of subformulas, either by
//! bisecting input ranges or by fixing ReLU phases.

use crate::reluplex::select_branch_relu_excluding;
use crate::vnn::{PhaseChoice, VnnFormula};
use crate::{Error, Result};

/// Children of a partition call.
#[derive(Debug, Clone)]
pub struct PartitionOutcome {
    pub children: Vec<VnnFormula>,
    /// True when the requested fan-out could not be realized (fewer unfixed
    /// ReLUs than splits, or an unsplittable input box): some children are
    /// then duplicates or the list is shorter than requested.
    pub degraded: bool,
}

fn check_power_of_two(n: usize) -> Result<u32> {
    if n >= 2 && n.is_power_of_two() {
        Ok(n.trailing_zeros())
    } else {
        Err(Error::BadPartitionSize(n))
    }
}

/// Splits the input box into `n` tiles by repeated bisection. Each round
/// every tile bisects its widest input (ties by index) at the midpoint; the
/// two halves share the split point, so the tiles cover the parent box
/// exactly.
pub fn partition_input(formula: &VnnFormula, n: usize) -> Result<PartitionOutcome> {
    let rounds = check_power_of_two(n)?;
    for &v in &formula.inputs {
        if !(formula.bounds.lower(v).is_finite() && formula.bounds.upper(v).is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "input {v} must have finite bounds to partition"
            )));
        }
    }
    let mut degraded = formula.inputs.is_empty();
    let mut leaves = vec![formula.clone()];
    for _ in 0..rounds {
        let mut next = Vec::with_capacity(leaves.len() * 2);
        for leaf in leaves {
            let widest = leaf
                .inputs
                .iter()
                .map(|&v| (v, leaf.bounds.upper(v) - leaf.bounds.lower(v)))
                .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite ranges").then(
                    // On equal ranges prefer the earlier input: max_by keeps
                    // the later of equals, so order by reversed index.
                    b.0 .0.cmp(&a.0 .0),
                ));
            let split = widest.and_then(|(v, _)| {
                let (lo, hi) = (leaf.bounds.lower(v), leaf.bounds.upper(v));
                let mid = lo / 2.0 + hi / 2.0;
                (mid.is_finite() && lo < mid && mid < hi).then_some((v, mid))
            });
            match split {
                Some((v, mid)) => {
                    let mut left = leaf.clone();
                    left.bounds.upper[v.0] = mid;
                    let mut right = leaf;
                    right.bounds.lower[v.0] = mid;
                    next.push(left);
                    next.push(right);
                }
                None => {
                    // Nothing splittable in this tile: duplicate it so the
                    // fan-out contract still holds, and say so.
                    degraded = true;
                    next.push(leaf.clone());
                    next.push(leaf);
                }
            }
        }
        leaves = next;
    }
    Ok(PartitionOutcome { children: leaves, degraded })
}

/// Splits by fixing the phases of `log2(n)` heuristically chosen ReLUs,
/// producing one child per phase combination. Children are interval-
/// tightened before being returned (a child refuted outright by tightening
/// is kept as-is; it stays trivially unsatisfiable for its solver).
///
/// `k_percent` is the branching-window parameter forwarded to the ReLU
/// selection heuristic.
pub fn partition_relu(formula: &VnnFormula, n: usize, k_percent: f64) -> Result<PartitionOutcome> {
    let rounds = check_power_of_two(n)? as usize;
    let mut chosen: Vec<usize> = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        match select_branch_relu_excluding(formula, k_percent, &chosen) {
            Ok(i) => chosen.push(i),
            Err(Error::NoUnfixedRelu) => break,
            Err(e) => return Err(e),
        }
    }
    if chosen.is_empty() {
        return Ok(PartitionOutcome { children: vec![formula.clone()], degraded: true });
    }
    let degraded = chosen.len() < rounds;
    let mut children = Vec::with_capacity(1 << chosen.len());
    for pattern in 0..(1u64 << chosen.len()) {
        let mut child = formula.clone();
        for (bit, &relu) in chosen.iter().enumerate() {
            let phase = if pattern >> bit & 1 == 1 {
                PhaseChoice::Active
            } else {
                PhaseChoice::Inactive
            };
            child.fix_relu_in_place(relu, phase)?;
        }
        let child = match crate::bounds::interval_propagate(child.clone()) {
            crate::bounds::Propagation::Tightened(t) => t.formula,
            crate::bounds::Propagation::InfeasibleByBounds => child,
        };
        children.push(child);
    }
    Ok(PartitionOutcome { children, degraded })
}
