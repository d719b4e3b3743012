//! Shared test support: an exact-rational Fourier-Motzkin feasibility
//! oracle (fully independent of the engine's simplex) and seeded random
//! generators for LPs and ReLU-network formulas.

#![allow(dead_code)]

use num::{BigRational, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use relu_snc::ingest::{encode_network, Network};
use relu_snc::vnn::{
    Assignment, Bounds, LinearConstraint, LpOutcome, Relation, Variable, VnnFormula,
};

type Row = (Vec<BigRational>, BigRational);

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite float")
}

fn row_is_zero(row: &[BigRational]) -> bool {
    row.iter().all(Zero::is_zero)
}

/// Scales a `sum coeffs*x <= rhs` row so its first nonzero coefficient has
/// magnitude one (canonical form for deduplication).
fn normalize(mut row: Vec<BigRational>, mut rhs: BigRational) -> Row {
    if let Some(a) = row.iter().find(|c| !c.is_zero()).cloned() {
        let s = a.abs();
        for c in row.iter_mut() {
            *c /= s.clone();
        }
        rhs /= s;
    }
    (row, rhs)
}

/// Replaces `x_pivot` by `expr . x + cst` in every row.
fn substitute(rows: &mut Vec<Row>, pivot: usize, expr: &[BigRational], cst: &BigRational) {
    for (row, rhs) in rows.iter_mut() {
        let k = std::mem::replace(&mut row[pivot], BigRational::zero());
        if k.is_zero() {
            continue;
        }
        for (j, e) in expr.iter().enumerate() {
            if !e.is_zero() {
                let add = &k * e;
                row[j] += add;
            }
        }
        *rhs -= &k * cst;
    }
}

/// Exact-rational feasibility of `linear` under `bounds`, decided by
/// equality substitution followed by Fourier-Motzkin elimination. Returns a
/// witness produced by interval back-substitution.
pub fn fm_feasible(linear: &[LinearConstraint], bounds: &Bounds) -> LpOutcome {
    let n = bounds.len();
    let mut eqs: Vec<Row> = Vec::new();
    let mut ineqs: Vec<Row> = Vec::new();
    for c in linear {
        let mut row = vec![BigRational::zero(); n];
        for (v, coef) in &c.terms {
            row[v.0] = rat(*coef);
        }
        let b = rat(c.rhs);
        match c.relation {
            Relation::LessEq => ineqs.push((row, b)),
            Relation::GreaterEq => {
                ineqs.push((row.into_iter().map(|x| -x).collect(), -b));
            }
            Relation::Eq => eqs.push((row, b)),
        }
    }
    for v in 0..n {
        if bounds.lower[v].is_finite() {
            let mut row = vec![BigRational::zero(); n];
            row[v] = -BigRational::from_float(1.0).unwrap();
            ineqs.push((row, -rat(bounds.lower[v])));
        }
        if bounds.upper[v].is_finite() {
            let mut row = vec![BigRational::zero(); n];
            row[v] = BigRational::from_float(1.0).unwrap();
            ineqs.push((row, rat(bounds.upper[v])));
        }
        if bounds.lower[v] > bounds.upper[v] {
            return LpOutcome::Infeasible;
        }
    }

    // Phase 1: eliminate equalities by substitution.
    let mut subs: Vec<(usize, Vec<BigRational>, BigRational)> = Vec::new();
    while let Some((row, b)) = eqs.pop() {
        match row.iter().position(|c| !c.is_zero()) {
            None => {
                if !b.is_zero() {
                    return LpOutcome::Infeasible;
                }
            }
            Some(pivot) => {
                let a = row[pivot].clone();
                let expr: Vec<BigRational> = row
                    .iter()
                    .enumerate()
                    .map(|(j, c)| if j == pivot { BigRational::zero() } else { -(c / &a) })
                    .collect();
                let cst = &b / &a;
                substitute(&mut eqs, pivot, &expr, &cst);
                substitute(&mut ineqs, pivot, &expr, &cst);
                subs.push((pivot, expr, cst));
            }
        }
    }

    // Phase 2: Fourier-Motzkin elimination, cheapest variable first.
    let mut eliminated: Vec<(usize, Vec<Row>)> = Vec::new();
    loop {
        // Drop trivial rows, fail on contradictory constants, dedupe.
        let mut seen = std::collections::BTreeSet::new();
        let mut kept = Vec::new();
        for (row, rhs) in ineqs {
            if row_is_zero(&row) {
                if rhs < BigRational::zero() {
                    return LpOutcome::Infeasible;
                }
                continue;
            }
            let norm = normalize(row, rhs);
            let key = format!("{:?}", norm);
            if seen.insert(key) {
                kept.push(norm);
            }
        }
        ineqs = kept;
        let mut best: Option<(usize, usize)> = None;
        for v in 0..n {
            let pos = ineqs.iter().filter(|(r, _)| r[v] > BigRational::zero()).count();
            let neg = ineqs.iter().filter(|(r, _)| r[v] < BigRational::zero()).count();
            if pos + neg == 0 {
                continue;
            }
            let cost = pos * neg;
            if best.map_or(true, |(_, c)| cost < c) {
                best = Some((v, cost));
            }
        }
        let Some((v, _)) = best else { break };
        let (mut pos, mut neg, mut rest) = (Vec::new(), Vec::new(), Vec::new());
        for (mut row, mut rhs) in ineqs {
            let a = row[v].clone();
            if a.is_zero() {
                rest.push((row, rhs));
                continue;
            }
            // Scale so the coefficient of v is +1 or -1.
            let s = a.abs();
            for c in row.iter_mut() {
                *c /= s.clone();
            }
            rhs /= s;
            if a > BigRational::zero() {
                pos.push((row, rhs));
            } else {
                neg.push((row, rhs));
            }
        }
        let mut recorded = pos.clone();
        recorded.extend(neg.iter().cloned());
        for (prow, prhs) in &pos {
            for (nrow, nrhs) in &neg {
                let row: Vec<BigRational> =
                    prow.iter().zip(nrow).map(|(a, b)| a + b).collect();
                let rhs = prhs + nrhs;
                rest.push((row, rhs));
                assert!(rest.len() < 200_000, "Fourier-Motzkin blowup");
            }
        }
        eliminated.push((v, recorded));
        ineqs = rest;
    }
    for (row, rhs) in &ineqs {
        debug_assert!(row_is_zero(row));
        if *rhs < BigRational::zero() {
            return LpOutcome::Infeasible;
        }
    }

    // Witness: free variables at zero, then eliminated variables innermost
    // first from their surviving interval, then substituted equalities.
    let mut value: Vec<Option<BigRational>> = vec![None; n];
    for (v, rows) in eliminated.iter().rev() {
        let (mut lo, mut hi): (Option<BigRational>, Option<BigRational>) = (None, None);
        for (row, rhs) in rows {
            let mut rest_val = BigRational::zero();
            for (j, c) in row.iter().enumerate() {
                if j == *v || c.is_zero() {
                    continue;
                }
                let xj = value[j].get_or_insert_with(BigRational::zero).clone();
                rest_val += c * xj;
            }
            let bound = rhs - &rest_val;
            if row[*v] > BigRational::zero() {
                // x_v <= bound
                if hi.as_ref().map_or(true, |h| bound < *h) {
                    hi = Some(bound);
                }
            } else {
                // -x_v <= bound, i.e. x_v >= -bound
                let b = -bound;
                if lo.as_ref().map_or(true, |l| b > *l) {
                    lo = Some(b);
                }
            }
        }
        let x = match (lo, hi) {
            (Some(l), Some(h)) => {
                assert!(l <= h, "exact elimination left an empty interval");
                (&l + &h) / rat(2.0)
            }
            (Some(l), None) => l,
            (None, Some(h)) => h,
            (None, None) => BigRational::zero(),
        };
        value[*v] = Some(x);
    }
    for (pivot, expr, cst) in subs.iter().rev() {
        let mut x = cst.clone();
        for (j, c) in expr.iter().enumerate() {
            if !c.is_zero() {
                let xj = value[j].get_or_insert_with(BigRational::zero).clone();
                x += c * xj;
            }
        }
        value[*pivot] = Some(x);
    }
    let witness: Vec<f64> = value
        .into_iter()
        .map(|x| x.map_or(0.0, |r| r.to_f64().expect("rational fits in f64")))
        .collect();
    LpOutcome::Feasible(Assignment::new(witness))
}

/// [`fm_feasible`] adapted to the phase-enumeration oracle's LP interface.
pub fn fm_lp(f: &VnnFormula) -> relu_snc::Result<LpOutcome> {
    Ok(fm_feasible(&f.linear, &f.bounds))
}

/// Deterministic RNG for a named test and case index.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random small LP: up to 8 variables and 8 constraints, integer
/// coefficients in [-5, 5], a mix of finite and infinite bounds.
pub fn random_lp(rng: &mut ChaCha8Rng) -> VnnFormula {
    let n = rng.gen_range(1..=8);
    let m = rng.gen_range(1..=8);
    let mut f = VnnFormula::new(n);
    for v in 0..n {
        if rng.gen_bool(0.7) {
            f.bounds.tighten_lower(Variable(v), rng.gen_range(-5..=0) as f64);
        }
        if rng.gen_bool(0.7) {
            f.bounds.tighten_upper(Variable(v), rng.gen_range(0..=5) as f64);
        }
    }
    for _ in 0..m {
        let mut terms = Vec::new();
        for v in 0..n {
            let c = rng.gen_range(-5..=5);
            if c != 0 {
                terms.push((Variable(v), c as f64));
            }
        }
        if terms.is_empty() {
            terms.push((Variable(rng.gen_range(0..n)), 1.0));
        }
        let relation = match rng.gen_range(0..4) {
            0 => Relation::Eq,
            1 => Relation::GreaterEq,
            _ => Relation::LessEq,
        };
        f.add_linear(LinearConstraint::new(terms, relation, rng.gen_range(-10..=10) as f64));
    }
    f
}

/// As [`random_lp`] with caps on the variable and constraint counts and a
/// per-term density. Exact elimination is double-exponential in the worst
/// case, so large batches checked against [`fm_feasible`] should keep the
/// size and density down.
pub fn random_lp_sized(
    rng: &mut ChaCha8Rng,
    max_vars: usize,
    max_rows: usize,
    density: f64,
) -> VnnFormula {
    let n = rng.gen_range(1..=max_vars);
    let m = rng.gen_range(1..=max_rows);
    let mut f = VnnFormula::new(n);
    for v in 0..n {
        if rng.gen_bool(0.7) {
            f.bounds.tighten_lower(Variable(v), rng.gen_range(-5..=0) as f64);
        }
        if rng.gen_bool(0.7) {
            f.bounds.tighten_upper(Variable(v), rng.gen_range(0..=5) as f64);
        }
    }
    for _ in 0..m {
        let mut terms = Vec::new();
        for v in 0..n {
            let c = if rng.gen_bool(density) { rng.gen_range(-5..=5) } else { 0 };
            if c != 0 {
                terms.push((Variable(v), c as f64));
            }
        }
        if terms.is_empty() {
            terms.push((Variable(rng.gen_range(0..n)), 1.0));
        }
        let relation = match rng.gen_range(0..4) {
            0 => Relation::Eq,
            1 => Relation::GreaterEq,
            _ => Relation::LessEq,
        };
        f.add_linear(LinearConstraint::new(terms, relation, rng.gen_range(-10..=10) as f64));
    }
    f
}

/// A random fully-connected ReLU network with 2-3 hidden layers, 4-12 hidden
/// neurons in total, and small integer weights.
pub fn random_network(rng: &mut ChaCha8Rng) -> Network {
    let n_in = rng.gen_range(1..=3);
    let n_out = rng.gen_range(1..=2);
    let hidden_layers = rng.gen_range(2..=3);
    let mut sizes = vec![n_in];
    let mut remaining = rng.gen_range(4..=12);
    for layer in 0..hidden_layers {
        let layers_left = hidden_layers - layer;
        let max_here = remaining - (layers_left - 1);
        let here = if layers_left == 1 {
            remaining
        } else {
            rng.gen_range(1..=max_here.min(6))
        };
        sizes.push(here);
        remaining -= here;
    }
    sizes.push(n_out);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for layer in 1..sizes.len() {
        let (rows, cols) = (sizes[layer], sizes[layer - 1]);
        weights.push(
            (0..rows)
                .map(|_| (0..cols).map(|_| rng.gen_range(-3..=3) as f64).collect())
                .collect::<Vec<Vec<f64>>>(),
        );
        biases.push((0..rows).map(|_| rng.gen_range(-2..=2) as f64).collect());
    }
    Network {
        layer_sizes: sizes,
        weights,
        biases,
        input_mins: vec![-2.0; n_in],
        input_maxs: vec![2.0; n_in],
        normalization: None,
    }
}

/// A random verification formula: a [`random_network`] encoding conjoined
/// with an output-threshold constraint chosen near the reachable range, so
/// satisfiable and unsatisfiable cases both occur.
pub fn random_relu_formula(rng: &mut ChaCha8Rng) -> VnnFormula {
    let net = random_network(rng);
    let mut f = encode_network(&net);
    // Probe the output at a few box points to anchor the threshold.
    let mut best = f64::NEG_INFINITY;
    for _ in 0..8 {
        let x: Vec<f64> = (0..net.num_inputs()).map(|_| rng.gen_range(-2.0..=2.0)).collect();
        let y = relu_snc::ingest::evaluate(&net, &x).unwrap();
        best = best.max(y[0]);
    }
    let margin = [-1.0, -0.25, 0.25, 1.0, 3.0][rng.gen_range(0..5)];
    f.add_linear(LinearConstraint::new(
        [(f.outputs[0], 1.0)],
        Relation::GreaterEq,
        best + margin,
    ));
    f
}
