//! Bounded-variable simplex feasibility kernel.
//!
//! Decides conjunctions of linear constraints with per-variable bounds.
//! Inequalities get one slack variable each (`s = lhs` with one-sided bounds
//! from the relation); the tableau keeps every basic variable expressed over
//! the nonbasic ones. Feasibility is restored by the classic repair loop:
//! pick the lowest-index basic variable that violates a bound, pick the
//! lowest-index nonbasic that can move it the right way, pivot, repeat.
//! Least-index (Bland) selection on both sides prevents cycling; a hard
//! iteration cap turns pathological instances into an explicit error rather
//! than a bogus verdict.
//!
//! The state supports warm restarts after bound changes ([`SimplexState::restore`])
//! and best-effort value imposition for assignment repair
//! ([`SimplexState::impose`]).

use crate::vnn::{Assignment, Bounds, LinearConstraint, LpOutcome, Relation, Variable, VnnFormula};
use crate::{Error, Result};

/// Bound-violation tolerance: values this close to a bound count as inside.
pub const FEAS_TOL: f64 = 1e-7;

/// Coefficients at or below this magnitude are treated as zero when picking
/// pivot elements.
pub const PIVOT_TOL: f64 = 1e-9;

/// Pivot budget factor: the cap is `50 * (variables + constraints)`.
pub const ITERATION_FACTOR: usize = 50;

/// A simplex tableau plus current variable values.
///
/// Columns `0..num_structural` are the formula's variables; column
/// `num_structural + i` is the slack of constraint `i`.
#[derive(Debug, Clone)]
pub struct SimplexState {
    num_structural: usize,
    num_rows: usize,
    num_cols: usize,
    /// Row-major dense tableau: row `r` expresses `x_basis[r]` as a linear
    /// combination of the nonbasic columns (basic columns hold zeros).
    tableau: Vec<f64>,
    /// Basic variable of each row.
    basis: Vec<usize>,
    /// Inverse of `basis`: the row a variable is basic in, if any.
    var_row: Vec<Option<usize>>,
    values: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    max_iterations: usize,
}

impl SimplexState {
    /// Builds a tableau for `linear` under `bounds`; slacks start basic and
    /// structural variables start clamped into their bounds.
    pub fn new(linear: &[LinearConstraint], bounds: &Bounds) -> SimplexState {
        let n = bounds.len();
        let m = linear.len();
        let cols = n + m;
        let mut tableau = vec![0.0; m * cols];
        let mut lower = Vec::with_capacity(cols);
        let mut upper = Vec::with_capacity(cols);
        lower.extend_from_slice(&bounds.lower);
        upper.extend_from_slice(&bounds.upper);
        for (i, c) in linear.iter().enumerate() {
            for (v, coef) in &c.terms {
                tableau[i * cols + v.0] = *coef;
            }
            let (lo, hi) = match c.relation {
                Relation::LessEq => (f64::NEG_INFINITY, c.rhs),
                Relation::GreaterEq => (c.rhs, f64::INFINITY),
                Relation::Eq => (c.rhs, c.rhs),
            };
            lower.push(lo);
            upper.push(hi);
        }
        let mut values = vec![0.0; cols];
        for v in 0..n {
            values[v] = clamp_into(0.0, lower[v], upper[v]);
        }
        let basis: Vec<usize> = (n..cols).collect();
        let mut var_row = vec![None; cols];
        for (r, &b) in basis.iter().enumerate() {
            var_row[b] = Some(r);
        }
        let mut state = SimplexState {
            num_structural: n,
            num_rows: m,
            num_cols: cols,
            tableau,
            basis,
            var_row,
            values,
            lower,
            upper,
            max_iterations: ITERATION_FACTOR * (n + m),
        };
        state.recompute_basics();
        state
    }

    fn coef(&self, row: usize, col: usize) -> f64 {
        self.tableau[row * self.num_cols + col]
    }

    /// Re-derives every basic value from the nonbasic values.
    fn recompute_basics(&mut self) {
        for r in 0..self.num_rows {
            let mut acc = 0.0;
            for c in 0..self.num_cols {
                let a = self.tableau[r * self.num_cols + c];
                if a != 0.0 {
                    acc += a * self.values[c];
                }
            }
            self.values[self.basis[r]] = acc;
        }
    }

    /// Re-expresses row `row` in terms of entering column `e` and eliminates
    /// `e` from every other row.
    fn pivot(&mut self, row: usize, e: usize) {
        let cols = self.num_cols;
        let leaving = self.basis[row];
        let pivot_coef = self.coef(row, e);
        let mut new_row = vec![0.0; cols];
        for c in 0..cols {
            if c != e {
                let a = self.coef(row, c);
                if a != 0.0 {
                    new_row[c] = -a / pivot_coef;
                }
            }
        }
        new_row[leaving] = 1.0 / pivot_coef;
        self.tableau[row * cols..(row + 1) * cols].copy_from_slice(&new_row);
        for r in 0..self.num_rows {
            if r == row {
                continue;
            }
            let k = self.coef(r, e);
            if k == 0.0 {
                continue;
            }
            self.tableau[r * cols + e] = 0.0;
            for c in 0..cols {
                if new_row[c] != 0.0 {
                    self.tableau[r * cols + c] += k * new_row[c];
                }
            }
        }
        self.basis[row] = e;
        self.var_row[leaving] = None;
        self.var_row[e] = Some(row);
    }

    /// Moves the basic variable of `row` exactly to `target` by adjusting the
    /// entering nonbasic `e`, then swaps them in the basis.
    fn pivot_and_update(&mut self, row: usize, e: usize, target: f64) {
        let b = self.basis[row];
        let theta = (target - self.values[b]) / self.coef(row, e);
        self.values[e] += theta;
        self.values[b] = target;
        self.pivot(row, e);
        self.recompute_basics();
    }

    /// Lowest-index basic variable outside its bounds, with the bound it
    /// must move to.
    fn violated_basic(&self) -> Option<(usize, f64, bool)> {
        let mut best: Option<(usize, f64, bool)> = None;
        for r in 0..self.num_rows {
            let v = self.basis[r];
            let val = self.values[v];
            let candidate = if val < self.lower[v] - FEAS_TOL {
                Some((v, self.lower[v], true))
            } else if val > self.upper[v] + FEAS_TOL {
                Some((v, self.upper[v], false))
            } else {
                None
            };
            if let Some(c) = candidate {
                if best.map_or(true, |(bv, _, _)| c.0 < bv) {
                    best = Some(c);
                }
            }
        }
        best
    }

    /// Lowest-index nonbasic in `row` that can push the basic variable in
    /// the needed direction (`increase`), or None — which certifies local
    /// infeasibility because every other column is pinned at its blocking
    /// bound.
    fn entering_column(&self, row: usize, increase: bool) -> Option<usize> {
        for c in 0..self.num_cols {
            if self.var_row[c].is_some() {
                continue;
            }
            let a = self.coef(row, c);
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let eligible = if increase {
                (a > 0.0 && self.values[c] < self.upper[c])
                    || (a < 0.0 && self.values[c] > self.lower[c])
            } else {
                (a < 0.0 && self.values[c] < self.upper[c])
                    || (a > 0.0 && self.values[c] > self.lower[c])
            };
            if eligible {
                return Some(c);
            }
        }
        None
    }

    fn bounds_empty(&self) -> bool {
        self.lower
            .iter()
            .zip(&self.upper)
            .any(|(l, u)| *l > *u + FEAS_TOL)
    }

    fn repair_loop(&mut self) -> Result<LpOutcome> {
        if self.bounds_empty() {
            return Ok(LpOutcome::Infeasible);
        }
        for _ in 0..self.max_iterations.max(1) {
            let Some((v, target, increase)) = self.violated_basic() else {
                return Ok(LpOutcome::Feasible(self.assignment()));
            };
            let row = self.var_row[v].expect("violated variable is basic");
            let Some(e) = self.entering_column(row, increase) else {
                return Ok(LpOutcome::Infeasible);
            };
            self.pivot_and_update(row, e, target);
        }
        Err(Error::IterationLimit(self.max_iterations))
    }

    /// Runs the feasibility repair loop from the current state.
    pub fn solve(&mut self) -> Result<LpOutcome> {
        self.repair_loop()
    }

    /// Re-solves after replacing the structural variable bounds.
    ///
    /// Nonbasic variables that fall outside the new box are clamped back
    /// onto it; everything else is warm-started from the current basis.
    pub fn restore(&mut self, bounds: &Bounds) -> Result<LpOutcome> {
        debug_assert_eq!(bounds.len(), self.num_structural);
        self.lower[..self.num_structural].copy_from_slice(&bounds.lower);
        self.upper[..self.num_structural].copy_from_slice(&bounds.upper);
        for v in 0..self.num_structural {
            if self.var_row[v].is_none() {
                let clamped = clamp_into(self.values[v], self.lower[v], self.upper[v]);
                self.values[v] = clamped;
            }
        }
        self.recompute_basics();
        self.repair_loop()
    }

    /// Best-effort: steer variable `v` to `value` (which must lie within its
    /// bounds) and re-solve.
    ///
    /// The variable is temporarily pinned at `value` so the repair loop works
    /// around it instead of undoing the move; if no feasible point exists
    /// with the pin, it is dropped and the state is re-solved freely. If `v`
    /// is basic it is first pivoted out; when no pivot exists (its row forces
    /// a constant) the imposition is skipped and the state just re-solved.
    pub fn impose(&mut self, v: Variable, value: f64) -> Result<LpOutcome> {
        if let Some(row) = self.var_row[v.0] {
            let entering = (0..self.num_cols)
                .find(|&c| self.var_row[c].is_none() && self.coef(row, c).abs() > PIVOT_TOL);
            match entering {
                Some(e) => self.pivot(row, e),
                None => return self.repair_loop(),
            }
        }
        let saved = (self.lower[v.0], self.upper[v.0]);
        self.values[v.0] = value;
        self.lower[v.0] = value;
        self.upper[v.0] = value;
        self.recompute_basics();
        let pinned = self.repair_loop();
        self.lower[v.0] = saved.0;
        self.upper[v.0] = saved.1;
        match pinned {
            Ok(LpOutcome::Infeasible) => self.repair_loop(),
            other => other,
        }
    }

    /// Current values of the structural variables.
    pub fn assignment(&self) -> Assignment {
        Assignment::new(self.values[..self.num_structural].to_vec())
    }
}

fn clamp_into(x: f64, lo: f64, hi: f64) -> f64 {
    // Plain x.clamp(lo, hi) panics on crossed bounds, which we tolerate
    // (they encode near-empty domains within FEAS_TOL).
    x.max(lo).min(hi)
}

/// Feasibility of the purely linear part of `formula` (linear constraints
/// plus bounds; ReLU constraints are ignored).
pub fn lp_feasible(formula: &VnnFormula) -> Result<LpOutcome> {
    SimplexState::new(&formula.linear, &formula.bounds).solve()
}
