//! Interval bound propagation: tightens variable bounds through linear
//! constraints and ReLU semantics, fixes ReLU phases forced by bounds, and
//! detects infeasibility from crossed intervals.

use crate::vnn::{Bounds, LinearConstraint, PhaseChoice, Relation, ReluPhase, VnnFormula};

/// Maximum number of full propagation passes per call.
pub const ROUND_CAP: usize = 10;

/// Outcome of [`interval_propagate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Propagation {
    Tightened(Tightening),
    /// Some variable's interval became empty: the formula is unsatisfiable.
    InfeasibleByBounds,
}

/// A tightened-but-still-possibly-satisfiable formula.
#[derive(Debug, Clone, PartialEq)]
pub struct Tightening {
    pub formula: VnnFormula,
    /// True when the last pass changed nothing (a genuine fixpoint, as
    /// opposed to stopping at [`ROUND_CAP`]).
    pub reached_fixpoint: bool,
}

impl Propagation {
    /// The tightened formula, if any.
    pub fn formula(self) -> Option<VnnFormula> {
        match self {
            Propagation::Tightened(t) => Some(t.formula),
            Propagation::InfeasibleByBounds => None,
        }
    }
}

/// Repeatedly tightens bounds until a fixpoint or [`ROUND_CAP`] passes.
///
/// Each pass: (1) every linear constraint is used to bound each of its
/// variables by interval arithmetic over the remaining terms; (2) ReLU
/// intervals flow forward (`r_f` within `[max(0,lo), max(0,hi)]` of `r_b`)
/// and backward (a positive lower bound on `r_f` forces `r_b`, a nonnegative
/// upper bound caps it); (3) ReLUs whose backward interval no longer
/// straddles zero get their phase fixed — fixing to Active also conjoins the
/// `r_b = r_f` equality row, keeping the linear relaxation sound.
pub fn interval_propagate(mut formula: VnnFormula) -> Propagation {
    if formula.bounds.is_empty(Bounds::EMPTY_TOL) {
        return Propagation::InfeasibleByBounds;
    }
    let mut reached_fixpoint = false;
    for _ in 0..ROUND_CAP {
        let mut changed = false;
        {
            let VnnFormula { linear, bounds, relus, .. } = &mut formula;
            for c in linear.iter() {
                changed |= propagate_row(c, bounds);
            }
            for r in relus.iter() {
                let (back, fwd) = (r.backward, r.forward);
                match r.phase {
                    ReluPhase::Unfixed => {
                        let lb = bounds.lower(back);
                        let ub = bounds.upper(back);
                        changed |= bounds.tighten_lower(fwd, lb.max(0.0));
                        changed |= bounds.tighten_upper(fwd, ub.max(0.0));
                        let lf = bounds.lower(fwd);
                        let uf = bounds.upper(fwd);
                        if lf > 0.0 {
                            changed |= bounds.tighten_lower(back, lf);
                        }
                        if uf >= 0.0 {
                            changed |= bounds.tighten_upper(back, uf);
                        }
                    }
                    ReluPhase::FixedActive => {
                        // r_b = r_f: intersect the two intervals.
                        let l = bounds.lower(back).max(bounds.lower(fwd));
                        let u = bounds.upper(back).min(bounds.upper(fwd));
                        changed |= bounds.tighten_lower(back, l);
                        changed |= bounds.tighten_upper(back, u);
                        changed |= bounds.tighten_lower(fwd, l);
                        changed |= bounds.tighten_upper(fwd, u);
                    }
                    ReluPhase::FixedInactive => {}
                }
            }
        }
        for i in 0..formula.relus.len() {
            if formula.relus[i].phase != ReluPhase::Unfixed {
                continue;
            }
            let back = formula.relus[i].backward;
            let lo = formula.bounds.lower(back);
            let hi = formula.bounds.upper(back);
            if lo >= 0.0 {
                formula
                    .fix_relu_in_place(i, PhaseChoice::Active)
                    .expect("phase checked unfixed");
                changed = true;
            } else if hi <= 0.0 {
                formula
                    .fix_relu_in_place(i, PhaseChoice::Inactive)
                    .expect("phase checked unfixed");
                changed = true;
            }
        }
        if formula.bounds.is_empty(Bounds::EMPTY_TOL) {
            return Propagation::InfeasibleByBounds;
        }
        if !changed {
            reached_fixpoint = true;
            break;
        }
    }
    Propagation::Tightened(Tightening { formula, reached_fixpoint })
}

/// Bounds each variable of `c` using the interval hull of the other terms.
/// Returns true when any bound improved.
fn propagate_row(c: &LinearConstraint, bounds: &mut Bounds) -> bool {
    let mut changed = false;
    for (&v, &a) in &c.terms {
        let (mut lo_rest, mut hi_rest) = (0.0_f64, 0.0_f64);
        for (&w, &aw) in &c.terms {
            if w == v {
                continue;
            }
            let (l, u) = (bounds.lower(w), bounds.upper(w));
            let (tl, tu) = if aw > 0.0 { (aw * l, aw * u) } else { (aw * u, aw * l) };
            lo_rest += tl;
            hi_rest += tu;
        }
        // a * v must fit in [rhs - hi_rest, rhs - lo_rest] (both sides for
        // equalities, one side for inequalities). NaN from infinite
        // arithmetic makes the comparisons in tighten_* false, so such
        // updates are dropped automatically.
        match c.relation {
            Relation::Eq => {
                let (x, y) = ((c.rhs - hi_rest) / a, (c.rhs - lo_rest) / a);
                let (new_lo, new_hi) = if a > 0.0 { (x, y) } else { (y, x) };
                changed |= bounds.tighten_lower(v, new_lo);
                changed |= bounds.tighten_upper(v, new_hi);
            }
            Relation::LessEq => {
                let x = (c.rhs - lo_rest) / a;
                if a > 0.0 {
                    changed |= bounds.tighten_upper(v, x);
                } else {
                    changed |= bounds.tighten_lower(v, x);
                }
            }
            Relation::GreaterEq => {
                let x = (c.rhs - hi_rest) / a;
                if a > 0.0 {
                    changed |= bounds.tighten_lower(v, x);
                } else {
                    changed |= bounds.tighten_upper(v, x);
                }
            }
        }
    }
    changed
}
