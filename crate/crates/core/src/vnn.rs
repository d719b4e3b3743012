//! Formula data model: variables, linear constraints, ReLU constraints,
//! bounds, assignments, and the brute-force phase-enumeration oracle.

use std::collections::BTreeMap;
use std::fmt;

use crate::{Error, Result};

/// Tolerance used when validating witnesses and detecting violated ReLUs.
pub const CHECK_TOL: f64 = 1e-6;

/// Unfixed-ReLU cap for [`enumerate_phases_oracle`] (2^m patterns).
pub const ORACLE_RELU_LIMIT: usize = 20;

/// A column in the formula-wide variable table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Variable(pub usize);

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Comparison sense of a [`LinearConstraint`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    LessEq,
    GreaterEq,
    Eq,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::LessEq => "<=",
            Relation::GreaterEq => ">=",
            Relation::Eq => "=",
        })
    }
}

/// A constraint `sum(a_i * x_i) relation rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub terms: BTreeMap<Variable, f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl LinearConstraint {
    /// Builds a constraint, dropping explicit zero coefficients.
    pub fn new<I: IntoIterator<Item = (Variable, f64)>>(
        terms: I,
        relation: Relation,
        rhs: f64,
    ) -> Self {
        let terms = terms.into_iter().filter(|(_, c)| *c != 0.0).collect();
        LinearConstraint { terms, relation, rhs }
    }

    /// Left-hand-side value under `values`.
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(v, c)| c * values[v.0])
            .sum()
    }

    /// Whether the constraint holds within `tol`.
    pub fn holds(&self, values: &[f64], tol: f64) -> bool {
        let lhs = self.eval(values);
        match self.relation {
            Relation::LessEq => lhs <= self.rhs + tol,
            Relation::GreaterEq => lhs >= self.rhs - tol,
            Relation::Eq => (lhs - self.rhs).abs() <= tol,
        }
    }
}

/// Phase state of a ReLU constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReluPhase {
    Unfixed,
    FixedActive,
    FixedInactive,
}

/// A phase to impose on an unfixed ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseChoice {
    Active,
    Inactive,
}

impl PhaseChoice {
    /// The opposite phase.
    pub fn flipped(self) -> PhaseChoice {
        match self {
            PhaseChoice::Active => PhaseChoice::Inactive,
            PhaseChoice::Inactive => PhaseChoice::Active,
        }
    }
}

/// The constraint `forward = max(0, backward)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluConstraint {
    /// Input of the ReLU (`r_b`).
    pub backward: Variable,
    /// Output of the ReLU (`r_f`).
    pub forward: Variable,
    pub phase: ReluPhase,
    /// Topological position: earlier hidden layers get smaller ranks.
    pub layer_rank: usize,
}

/// Per-variable lower/upper bounds; infinities allowed.
///
/// An empty domain is represented by a crossed pair (`lower > upper`); see
/// [`Bounds::is_empty`].
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    /// Slack below which a crossed bound pair still counts as non-empty.
    pub const EMPTY_TOL: f64 = 1e-7;

    /// All variables unbounded.
    pub fn unbounded(num_vars: usize) -> Self {
        Bounds {
            lower: vec![f64::NEG_INFINITY; num_vars],
            upper: vec![f64::INFINITY; num_vars],
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty_vars(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower(&self, v: Variable) -> f64 {
        self.lower[v.0]
    }

    pub fn upper(&self, v: Variable) -> f64 {
        self.upper[v.0]
    }

    /// Raises the lower bound to `val` if that is an improvement.
    /// Returns true when the bound changed.
    pub fn tighten_lower(&mut self, v: Variable, val: f64) -> bool {
        if val > self.lower[v.0] {
            self.lower[v.0] = val;
            true
        } else {
            false
        }
    }

    /// Lowers the upper bound to `val` if that is an improvement.
    /// Returns true when the bound changed.
    pub fn tighten_upper(&mut self, v: Variable, val: f64) -> bool {
        if val < self.upper[v.0] {
            self.upper[v.0] = val;
            true
        } else {
            false
        }
    }

    /// True when some variable's domain is empty beyond `tol`.
    pub fn is_empty(&self, tol: f64) -> bool {
        self.lower
            .iter()
            .zip(&self.upper)
            .any(|(l, u)| *l > *u + tol)
    }

    /// Whether `values` lies inside the box within `tol`.
    pub fn contains(&self, values: &[f64], tol: f64) -> bool {
        values.len() == self.len()
            && values
                .iter()
                .enumerate()
                .all(|(i, x)| *x >= self.lower[i] - tol && *x <= self.upper[i] + tol)
    }
}

/// A conjunction of linear constraints, ReLU constraints, and bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct VnnFormula {
    pub num_vars: usize,
    pub bounds: Bounds,
    pub linear: Vec<LinearConstraint>,
    pub relus: Vec<ReluConstraint>,
    pub inputs: Vec<Variable>,
    pub outputs: Vec<Variable>,
}

/// A value per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub values: Vec<f64>,
}

impl Assignment {
    pub fn new(values: Vec<f64>) -> Self {
        Assignment { values }
    }

    pub fn get(&self, v: Variable) -> f64 {
        self.values[v.0]
    }
}

/// Verdict of a solve call.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryResult {
    Sat(Assignment),
    Unsat,
    Timeout,
}

impl QueryResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, QueryResult::Sat(_))
    }
}

/// Verdict of a pure linear-feasibility call.
#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Feasible(Assignment),
    Infeasible,
}

/// Polarity of an unfixed ReLU whose backward bounds `[a, b]` straddle zero:
/// `(a + b) / (b - a)`, strictly inside `(-1, 1)`.
///
/// Values near 1 mean the interval is mostly positive (the active case keeps
/// most of it), values near -1 mostly negative.
pub fn polarity(r: &ReluConstraint, bounds: &Bounds) -> Result<f64> {
    let a = bounds.lower(r.backward);
    let b = bounds.upper(r.backward);
    if !(a.is_finite() && b.is_finite() && a < 0.0 && b > 0.0) {
        return Err(Error::PolarityUndefined { relu: r.backward.0, lower: a, upper: b });
    }
    Ok((a + b) / (b - a))
}

impl VnnFormula {
    /// An empty formula over `num_vars` unbounded variables.
    pub fn new(num_vars: usize) -> Self {
        VnnFormula {
            num_vars,
            bounds: Bounds::unbounded(num_vars),
            linear: Vec::new(),
            relus: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_linear(&mut self, c: LinearConstraint) {
        self.linear.push(c);
    }

    pub fn add_relu(&mut self, backward: Variable, forward: Variable, layer_rank: usize) {
        self.relus.push(ReluConstraint {
            backward,
            forward,
            phase: ReluPhase::Unfixed,
            layer_rank,
        });
    }

    /// Indices of unfixed ReLUs ordered by (layer_rank, backward index).
    ///
    /// This is the total order used for branching-candidate windows: earlier
    /// layers first, ties broken by variable index.
    pub fn ordered_unfixed_relus(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.relus.len())
            .filter(|&i| self.relus[i].phase == ReluPhase::Unfixed)
            .collect();
        idx.sort_by_key(|&i| (self.relus[i].layer_rank, self.relus[i].backward.0));
        idx
    }

    /// Polarity of the `relu`-th ReLU under the formula's current bounds.
    pub fn polarity_of(&self, relu: usize) -> Result<f64> {
        polarity(&self.relus[relu], &self.bounds)
    }

    /// True iff `a` satisfies every bound, linear constraint, and ReLU
    /// within `tol`. Total: a wrong-length assignment is simply rejected.
    pub fn check_assignment(&self, a: &Assignment, tol: f64) -> bool {
        if a.values.len() != self.num_vars {
            return false;
        }
        if !self.bounds.contains(&a.values, tol) {
            return false;
        }
        if !self.linear.iter().all(|c| c.holds(&a.values, tol)) {
            return false;
        }
        self.relus.iter().all(|r| {
            let rb = a.get(r.backward);
            let rf = a.get(r.forward);
            (rb.max(0.0) - rf).abs() <= tol
        })
    }

    /// Fixes an unfixed ReLU to `phase`, mutating this formula.
    ///
    /// Inactive conjoins `r_b <= 0` and `r_f = 0` by tightening bounds (which
    /// may produce an empty domain — soundly recording infeasibility).
    /// Active conjoins `r_b >= 0` and the linear row `r_b - r_f = 0`.
    pub fn fix_relu_in_place(&mut self, relu: usize, phase: PhaseChoice) -> Result<()> {
        let r = &self.relus[relu];
        if r.phase != ReluPhase::Unfixed {
            return Err(Error::ReluAlreadyFixed { relu });
        }
        let (backward, forward) = (r.backward, r.forward);
        match phase {
            PhaseChoice::Inactive => {
                self.bounds.tighten_upper(backward, 0.0);
                self.bounds.tighten_lower(forward, 0.0);
                self.bounds.tighten_upper(forward, 0.0);
                self.relus[relu].phase = ReluPhase::FixedInactive;
            }
            PhaseChoice::Active => {
                self.bounds.tighten_lower(backward, 0.0);
                self.add_linear(LinearConstraint::new(
                    [(backward, 1.0), (forward, -1.0)],
                    Relation::Eq,
                    0.0,
                ));
                self.relus[relu].phase = ReluPhase::FixedActive;
            }
        }
        Ok(())
    }

    /// Copy of this formula with the `relu`-th ReLU fixed to `phase`.
    pub fn fix_relu(&self, relu: usize, phase: PhaseChoice) -> Result<VnnFormula> {
        let mut out = self.clone();
        out.fix_relu_in_place(relu, phase)?;
        Ok(out)
    }
}

/// Brute-force satisfiability oracle: enumerates every phase pattern over the
/// unfixed ReLUs and hands each purely linear result to `lp`.
///
/// Returns the first satisfying assignment found, else `Unsat`. Patterns whose
/// bound tightening already produced an empty domain are skipped without an LP
/// call. Refuses formulas with more than [`ORACLE_RELU_LIMIT`] unfixed ReLUs.
pub fn enumerate_phases_oracle<F>(formula: &VnnFormula, mut lp: F) -> Result<QueryResult>
where
    F: FnMut(&VnnFormula) -> Result<LpOutcome>,
{
    let unfixed = formula.ordered_unfixed_relus();
    let m = unfixed.len();
    if m > ORACLE_RELU_LIMIT {
        return Err(Error::TooManyRelus { count: m, limit: ORACLE_RELU_LIMIT });
    }
    for pattern in 0u64..(1u64 << m) {
        let mut candidate = formula.clone();
        for (bit, &relu) in unfixed.iter().enumerate() {
            let phase = if pattern >> bit & 1 == 1 {
                PhaseChoice::Active
            } else {
                PhaseChoice::Inactive
            };
            candidate.fix_relu_in_place(relu, phase)?;
        }
        if candidate.bounds.is_empty(Bounds::EMPTY_TOL) {
            continue;
        }
        if let LpOutcome::Feasible(a) = lp(&candidate)? {
            return Ok(QueryResult::Sat(a));
        }
    }
    Ok(QueryResult::Unsat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::lp_feasible;
    use proptest::prelude::*;

    fn single_relu_formula(lo: f64, hi: f64) -> VnnFormula {
        // x = v0, y = v1, ReLU(x) = y, x in [lo, hi].
        let mut f = VnnFormula::new(2);
        f.bounds.tighten_lower(Variable(0), lo);
        f.bounds.tighten_upper(Variable(0), hi);
        f.add_relu(Variable(0), Variable(1), 0);
        f
    }

    #[test]
    fn check_assignment_accepts_bound_membership() {
        let mut f = VnnFormula::new(1);
        f.bounds.tighten_lower(Variable(0), 0.0);
        f.bounds.tighten_upper(Variable(0), 1.0);
        assert!(f.check_assignment(&Assignment::new(vec![0.5]), 0.0));
    }

    #[test]
    fn check_assignment_rejects_relu_violation() {
        let f = single_relu_formula(f64::NEG_INFINITY, f64::INFINITY);
        // ReLU(-1) = 0, not 1.
        assert!(!f.check_assignment(&Assignment::new(vec![-1.0, 1.0]), 0.0));
    }

    #[test]
    fn check_assignment_accepts_combined_example() {
        // x + y = 1, x,y in [0,1], ReLU(x) = z; {x:1, y:0, z:1} holds at tol 0.
        let mut f = VnnFormula::new(3);
        for v in 0..2 {
            f.bounds.tighten_lower(Variable(v), 0.0);
            f.bounds.tighten_upper(Variable(v), 1.0);
        }
        f.add_linear(LinearConstraint::new(
            [(Variable(0), 1.0), (Variable(1), 1.0)],
            Relation::Eq,
            1.0,
        ));
        f.add_relu(Variable(0), Variable(2), 0);
        assert!(f.check_assignment(&Assignment::new(vec![1.0, 0.0, 1.0]), 0.0));
    }

    #[test]
    fn check_assignment_rejects_wrong_length() {
        let f = VnnFormula::new(2);
        assert!(!f.check_assignment(&Assignment::new(vec![0.0]), 1.0));
    }

    #[test]
    fn polarity_matches_direct_formula() {
        let f = single_relu_formula(-2.0, 2.0);
        assert_eq!(f.polarity_of(0).unwrap(), 0.0);
        let f = single_relu_formula(-1.0, 3.0);
        assert_eq!(f.polarity_of(0).unwrap(), 0.5);
        let f = single_relu_formula(-3.0, 1.0);
        assert_eq!(f.polarity_of(0).unwrap(), -0.5);
    }

    #[test]
    fn polarity_requires_straddling_finite_bounds() {
        for (lo, hi) in [(0.0, 2.0), (-2.0, 0.0), (1.0, 2.0), (f64::NEG_INFINITY, 1.0)] {
            let f = single_relu_formula(lo, hi);
            assert!(matches!(
                f.polarity_of(0),
                Err(Error::PolarityUndefined { .. })
            ));
        }
    }

    #[test]
    fn fix_relu_inactive_clamps_both_variables() {
        let f = single_relu_formula(-2.0, 1.0);
        let g = f.fix_relu(0, PhaseChoice::Inactive).unwrap();
        assert_eq!(g.bounds.lower(Variable(0)), -2.0);
        assert_eq!(g.bounds.upper(Variable(0)), 0.0);
        assert_eq!(g.bounds.lower(Variable(1)), 0.0);
        assert_eq!(g.bounds.upper(Variable(1)), 0.0);
        assert_eq!(g.relus[0].phase, ReluPhase::FixedInactive);
        assert_eq!(g.linear.len(), f.linear.len());
    }

    #[test]
    fn fix_relu_active_adds_equality_row() {
        let f = single_relu_formula(-2.0, 1.0);
        let g = f.fix_relu(0, PhaseChoice::Active).unwrap();
        assert_eq!(g.bounds.lower(Variable(0)), 0.0);
        assert_eq!(g.bounds.upper(Variable(0)), 1.0);
        assert_eq!(g.relus[0].phase, ReluPhase::FixedActive);
        assert_eq!(g.linear.len(), f.linear.len() + 1);
        let row = g.linear.last().unwrap();
        assert_eq!(row.relation, Relation::Eq);
        assert_eq!(row.rhs, 0.0);
        assert_eq!(row.terms[&Variable(0)], 1.0);
        assert_eq!(row.terms[&Variable(1)], -1.0);
    }

    #[test]
    fn fix_relu_twice_is_an_error() {
        let f = single_relu_formula(-2.0, 1.0);
        let g = f.fix_relu(0, PhaseChoice::Active).unwrap();
        assert!(matches!(
            g.fix_relu(0, PhaseChoice::Inactive),
            Err(Error::ReluAlreadyFixed { relu: 0 })
        ));
    }

    #[test]
    fn oracle_refutes_unreachable_output() {
        let mut f = single_relu_formula(-1.0, 1.0);
        f.add_linear(LinearConstraint::new([(Variable(1), 1.0)], Relation::GreaterEq, 2.0));
        let got = enumerate_phases_oracle(&f, lp_feasible).unwrap();
        assert_eq!(got, QueryResult::Unsat);
    }

    #[test]
    fn oracle_finds_reachable_output() {
        let mut f = single_relu_formula(-1.0, 1.0);
        f.add_linear(LinearConstraint::new([(Variable(1), 1.0)], Relation::GreaterEq, 0.5));
        match enumerate_phases_oracle(&f, lp_feasible).unwrap() {
            QueryResult::Sat(a) => assert!(f.check_assignment(&a, CHECK_TOL)),
            other => panic!("expected Sat, got {other:?}"),
        }
    }

    #[test]
    fn oracle_with_zero_relus_makes_one_lp_call() {
        let mut f = VnnFormula::new(1);
        f.bounds.tighten_lower(Variable(0), 0.0);
        f.bounds.tighten_upper(Variable(0), 1.0);
        let mut calls = 0usize;
        let got = enumerate_phases_oracle(&f, |g| {
            calls += 1;
            lp_feasible(g)
        })
        .unwrap();
        assert_eq!(calls, 1);
        assert!(got.is_sat());
    }

    #[test]
    fn oracle_rejects_oversized_formulas() {
        let mut f = VnnFormula::new(42);
        for i in 0..21 {
            f.bounds.tighten_lower(Variable(2 * i), -1.0);
            f.bounds.tighten_upper(Variable(2 * i), 1.0);
            f.add_relu(Variable(2 * i), Variable(2 * i + 1), 0);
        }
        assert!(matches!(
            enumerate_phases_oracle(&f, lp_feasible),
            Err(Error::TooManyRelus { count: 21, limit: 20 })
        ));
    }

    #[test]
    fn oracle_verdict_survives_relu_permutation() {
        let mut f = VnnFormula::new(4);
        for v in [0, 2] {
            f.bounds.tighten_lower(Variable(v), -1.0);
            f.bounds.tighten_upper(Variable(v), 1.0);
        }
        f.add_relu(Variable(0), Variable(1), 0);
        f.add_relu(Variable(2), Variable(3), 0);
        f.add_linear(LinearConstraint::new(
            [(Variable(1), 1.0), (Variable(3), 1.0)],
            Relation::GreaterEq,
            1.5,
        ));
        let mut g = f.clone();
        g.relus.reverse();
        let rf = enumerate_phases_oracle(&f, lp_feasible).unwrap();
        let rg = enumerate_phases_oracle(&g, lp_feasible).unwrap();
        assert_eq!(rf.is_sat(), rg.is_sat());
    }

    proptest! {
        #[test]
        fn polarity_stays_inside_open_unit_interval(a in -1e6f64..-1e-3, b in 1e-3f64..1e6) {
            let f = single_relu_formula(a, b);
            let p = f.polarity_of(0).unwrap();
            prop_assert!(p > -1.0 && p < 1.0);
        }

        #[test]
        fn polarity_is_antisymmetric(a in -1e6f64..-1e-3, b in 1e-3f64..1e6) {
            let fwd = single_relu_formula(a, b);
            let rev = single_relu_formula(-b, -a);
            // (a+b) and (b-a) are computed from negated operands exactly, so
            // the two quotients are bitwise negations of each other.
            prop_assert_eq!(fwd.polarity_of(0).unwrap(), -rev.polarity_of(0).unwrap());
        }

        #[test]
        fn tolerance_is_monotone(x in -2.0f64..2.0, y in -2.0f64..2.0, tol in 0.0f64..1.0) {
            let f = single_relu_formula(-1.0, 1.0);
            let a = Assignment::new(vec![x, y]);
            if f.check_assignment(&a, 0.0) {
                prop_assert!(f.check_assignment(&a, tol));
            }
        }

        #[test]
        fn fixing_either_phase_preserves_satisfying_assignments(x in -1.0f64..1.0) {
            let f = single_relu_formula(-1.0, 1.0);
            let a = Assignment::new(vec![x, x.max(0.0)]);
            prop_assert!(f.check_assignment(&a, 0.0));
            let active = f.fix_relu(0, PhaseChoice::Active).unwrap();
            let inactive = f.fix_relu(0, PhaseChoice::Inactive).unwrap();
            let in_active = active.check_assignment(&a, 0.0);
            let in_inactive = inactive.check_assignment(&a, 0.0);
            prop_assert!(in_active || in_inactive);
            if x != 0.0 {
                prop_assert!(in_active ^ in_inactive);
            }
        }
    }
}
